"""Time the compiled and numpy inner kernels on the same solves.

    python3 benchmarks/bench_backends.py [--repeat 3]

Each case runs one doubling-scheme solve per backend and prints the best
wall time, the speed-up and whether the iteration counts agree.
"""
import argparse
import time

import numpy as np

from rhpe import SolverConfig, dr_hpe_solve, make_affine_box_vi, make_l1_regularized, make_skew_spectrum
from rhpe.kernels import compiled_run_affine

CASES = [
    ("skew-spectrum n=32", lambda: make_skew_spectrum(16), "tseng", 1e-2),
    ("affine-box n=10", lambda: make_affine_box_vi(10, 0), "tseng", 1e-6),
    ("affine-box n=50", lambda: make_affine_box_vi(50, 0), "tseng", 1e-6),
    ("l1 n=20 korpelevich", lambda: make_l1_regularized(20, 0), "korpelevich", 1e-6),
]


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["python"] + (["cython"] if compiled_run_affine is not None else [])
    print(f"{'case':<24} {'inner':>8} " + " ".join(f"{b + ' [s]':>12}" for b in backends) + "   speed-up  agree")
    for name, build, engine, tol in CASES:
        problem = build()
        cfg = SolverConfig(0.9, tol, tol)
        times, iters = [], []
        for b in backends:
            t, rep = best_of(lambda: dr_hpe_solve(problem, problem.x0, cfg, engine, backend=b), args.repeat)
            times.append(t)
            iters.append(rep.inner_iterations)
        speed = times[0] / times[-1] if len(times) > 1 else 1.0
        cols = " ".join(f"{t:>12.4f}" for t in times)
        print(f"{name:<24} {iters[0]:>8d} {cols}   {speed:>8.1f}x  {len(set(iters)) == 1}")


if __name__ == "__main__":
    main()
