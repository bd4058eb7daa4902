"""``bench`` command line.

Subcommands::

    bench run --problem <name|path.json> --method <baseline|static|dr-hpe>
              --engine <tseng|korpelevich> --rho-bar <list> --eps-bar <v>
              --sigma <v> --rho-frac <v> --seed <n> --out <path.csv>
              [--strict] [--trace <path.csv>] [--certs <path.json>]
              [--start default|solution|x1,x2,...] [--dim n] [--no-timing] [--jobs n]
    bench compare <a.csv> <b.csv>
    bench verify <sweep.csv> [--certs <path.json>] [--trace <trace.csv> ...]
    bench dump --problem <name> --seed <n> [--dim n] --out <path.json>

Exit codes: 0 success, 2 invalid configuration, 3 a run did not converge
under ``--strict``, 4 a certificate failed verification.
"""
from __future__ import annotations

import argparse
import math
import sys
from typing import List, Optional

from .bench import (
    GENERATORS,
    METHODS,
    CertificateVerificationError,
    RunSpec,
    SweepSummary,
    compare,
    fit_slope,
    make_problem,
    read_csv,
    run,
    verify_outputs,
)
from .exceptions import CertificateViolationError, InvalidComparisonError, InvalidInputError, UnsupportedProblemError
from .inner_solvers import ENGINES
from .problems import dump_problem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_CERTIFICATE = 4


def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Regularized HPE benchmark harness")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve over a rho_bar grid and write a CSV")
    r.add_argument("--problem", required=True, help=f"JSON path or one of {', '.join(sorted(GENERATORS))}")
    r.add_argument("--method", choices=METHODS, default="dr-hpe")
    r.add_argument("--engine", choices=ENGINES, default="tseng")
    r.add_argument("--rho-bar", type=_floats, required=True, help="comma-separated list")
    r.add_argument("--eps-bar", type=float, default=1e-6)
    r.add_argument("--sigma", type=float, default=0.9)
    r.add_argument("--rho-frac", type=float, default=0.5)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="sweep CSV path")
    r.add_argument("--strict", action="store_true", help="exit 3 when a run does not converge")
    r.add_argument("--trace", help="per-iteration CSV (suffixed _1, _2, ... for several rho_bar)")
    r.add_argument("--certs", help="JSON file with the final certificates")
    r.add_argument("--start", default="default", help="default, solution, or x1,x2,...")
    r.add_argument("--dim", type=int, help="dimension for generated problems")
    r.add_argument("--max-inner", type=int, help="inner iteration cap per static run")
    r.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for byte-stable output")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for the grid")

    c = sub.add_parser("compare", help="iteration ratios of two sweep CSVs")
    c.add_argument("a")
    c.add_argument("b")

    v = sub.add_parser("verify", help="re-check serialized sweep output")
    v.add_argument("csv")
    v.add_argument("--certs")
    v.add_argument("--trace", nargs="*", default=[])

    d = sub.add_parser("dump", help="write a generated problem as JSON")
    d.add_argument("--problem", required=True, choices=sorted(GENERATORS))
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--dim", type=int)
    d.add_argument("--out", required=True)
    return p


def _print_summary(summary: SweepSummary, out) -> None:
    print("rho_bar        inner    outer  terminated", file=out)
    for r in summary.rows:
        print(f"{r.rho_bar:<12.3g} {r.inner_iters:>8d} {r.outer_iters:>6d}  {r.terminated}", file=out)
    slope = "n/a" if math.isnan(summary.slope) else f"{summary.slope:.3f}"
    print(f"slope log(inner) vs log(1/rho_bar): {slope}", file=out)


def _cmd_run(args) -> int:
    spec = RunSpec(
        problem=args.problem,
        method=args.method,
        engine=args.engine,
        rho_bars=tuple(args.rho_bar),
        eps_bar=args.eps_bar,
        sigma=args.sigma,
        rho_frac=args.rho_frac,
        seed=args.seed,
        start=args.start,
        dim=args.dim,
        max_inner=args.max_inner,
        timing=not args.no_timing,
    )
    if args.jobs < 1:
        raise InvalidInputError("--jobs must be positive")
    summary = run(spec, out=args.out, trace=args.trace, jobs=args.jobs, certs=args.certs)
    _print_summary(summary, sys.stdout)
    if args.strict and not all(r.converged for r in summary.rows):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_compare(args) -> int:
    a = read_csv(args.a)
    b = read_csv(args.b)
    cmp = compare(SweepSummary(a, fit_slope(a)), SweepSummary(b, fit_slope(b)))
    print("rho_bar        inner_a    inner_b     ratio")
    for rb, ia, ib, q in zip(cmp.rho_bars, cmp.iters_a, cmp.iters_b, cmp.ratios):
        print(f"{rb:<12.3g} {ia:>9d} {ib:>10d} {q:>9.3f}")
    print(f"trend as rho_bar shrinks: {cmp.trend}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    failures = verify_outputs(args.csv, args.certs, args.trace)
    for f in failures:
        print(f"FAIL {f}")
    if failures:
        return EXIT_CERTIFICATE
    print("all certificates verified")
    return EXIT_OK


def _cmd_dump(args) -> int:
    dump_problem(make_problem(args.problem, args.seed, args.dim), args.out)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": _cmd_run, "compare": _cmd_compare, "verify": _cmd_verify, "dump": _cmd_dump}[args.command]
    try:
        return handler(args)
    except (CertificateVerificationError, CertificateViolationError) as exc:
        print(f"bench: certificate verification failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except (InvalidInputError, InvalidComparisonError, UnsupportedProblemError, OSError) as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
