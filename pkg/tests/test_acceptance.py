"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``python3 tests/test_acceptance.py``).
A summary of all criterion lines is also printed at the end of the pytest run.
"""
import math
import sys
import time

import numpy as np
import pytest

from rhpe.bench import fit_slope, Row
from rhpe.hpe_core import HpeCertificate, gamma_sequence, pointwise_rate_bounds, theta, verify_hpe_condition
from rhpe.inner_solvers import korpelevich_step, make_engine, tseng_step
from rhpe.operators import affine_map, box_normal_cone, l1_subdifferential, shifted_resolvent, whole_space, zero_operator
from rhpe.problems import (
    make_affine_box_vi,
    make_l1_regularized,
    make_skew_rotation,
    make_skew_spectrum,
    regularized_distance,
    solution_distance,
)
from rhpe.regularized import (
    RegularizationState,
    SolverConfig,
    auxiliary_bounds,
    d0_bar,
    dr_hpe_solve,
    mu_of,
    outer_round_bound,
    regularized_hpe_iterates,
    static_iteration_bound,
    static_solve,
    unregularized_hpe_solve,
)

pytestmark = pytest.mark.acceptance

SIGMAS = (0.3, 0.7, 0.9)
ENGINES = ("tseng", "korpelevich")
RESULTS = {}


def report(n, ok, detail):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def matrix_problems():
    return [
        make_skew_rotation(),
        make_affine_box_vi(8, 0),
        make_affine_box_vi(8, 1, 0.3, n_active=3),
        make_l1_regularized(8, 0),
        make_skew_spectrum(3, 0.2, 1.0),
    ]


def affine_instances(count, seed0=0):
    out = []
    for s in range(count):
        if s % 3 == 0:
            out.append(make_affine_box_vi(6, seed0 + s))
        elif s % 3 == 1:
            out.append(make_affine_box_vi(6, seed0 + s, 0.4, n_active=2))
        else:
            out.append(make_l1_regularized(6, seed0 + s))
    return out


def _static_for(problem, x0, cfg, engine):
    d0 = solution_distance(problem, x0)
    D0 = d0 if d0 > 0 else d0_bar(engine.lam, cfg.rho, cfg.rho_bar, cfg.sigma)
    mu = mu_of(D0, cfg.rho, cfg.rho_bar, cfg.sigma)
    return static_solve(problem, RegularizationState(mu, x0, D0), cfg, engine, keep_points=True)


# ---------------------------------------------------------------------------


def test_criterion_01_certificate_validity():
    t0 = time.perf_counter()
    checked = failed = 0
    for p in matrix_problems():
        for eng in ENGINES:
            for sigma in SIGMAS:
                cfg = SolverConfig(sigma, 1e-4, 1e-6, max_inner=200000)
                e = make_engine(eng, p, sigma)
                reports = [
                    unregularized_hpe_solve(p, p.x0, cfg, e, keep_points=True),
                    _static_for(p, p.x0, cfg, e),
                    dr_hpe_solve(p, p.x0, cfg, e, keep_points=True),
                ]
                for r in reports:
                    t = r.trace
                    pts = t.points
                    for i in range(len(t)):
                        lam = t.lam[i]
                        x_prev = pts["x_prev"][i]
                        v = (x_prev - pts["x_next"][i]) / lam
                        c = HpeCertificate(pts["y"][i], v, v, t.eps[i], lam)
                        ok, _, _ = verify_hpe_condition(x_prev, c, sigma)
                        checked += 1
                        failed += not ok
    dt = time.perf_counter() - t0
    ok = failed == 0 and checked >= 100_000 and dt < 60
    report(1, ok, f"{checked} iterations re-verified, {failed} failures, {dt:.1f}s (need >= 1e5, 0, < 60s)")
    assert ok


def test_criterion_02_linear_rate():
    t0 = time.perf_counter()
    worst = -math.inf
    runs = 0
    for p in affine_instances(6) + [make_skew_rotation()]:
        for eng in ENGINES:
            for sigma in SIGMAS:
                for mu in (1e-2, 1e-1, 1.0):
                    e = make_engine(eng, p, sigma)
                    t = regularized_hpe_iterates(p, e, mu, p.x0, 200)
                    xs = p.solution_oracle(mu, p.x0)
                    d_mu = float(np.linalg.norm(p.x0 - xs))
                    lam_low = float(np.min(t.lam))
                    th = theta(lam_low, mu, sigma)
                    k = np.arange(1, len(t) + 1)
                    xdist = np.linalg.norm(t.points["x_next"] - xs, axis=1)
                    worst = max(worst, float(np.max(xdist - (1 - th) ** (k / 2) * d_mu)))
                    for i in range(len(t)):
                        vb, eb, _ = pointwise_rate_bounds(i + 1, d_mu, lam_low, mu, sigma)
                        worst = max(worst, t.v_norm[i] - vb, t.eps[i] - eb)
                    runs += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 30
    report(2, ok, f"{runs} runs x 200 steps, worst excess over bound {worst:.2e} (need <= 1e-8), {dt:.1f}s")
    assert ok


def test_criterion_03_static_iteration_bound():
    t0 = time.perf_counter()
    cases = bad = 0
    tightest = 0.0
    for p in affine_instances(24, 100):
        for eng in ENGINES:
            for mu in (1e-2, 1e-1, 1.0):
                sigma = 0.7
                cfg = SolverConfig(sigma, 1e-6, 1e-8)
                e = make_engine(eng, p, sigma)
                r = static_solve(p, RegularizationState(mu, p.x0), cfg, e)
                d_mu = regularized_distance(p, mu, p.x0)
                bound = math.ceil(static_iteration_bound(r.lam_min, mu, sigma, d_mu, cfg.rho, cfg.eps_bar))
                cases += 1
                if not (r.converged and r.inner_iterations <= bound):
                    bad += 1
                tightest = max(tightest, r.inner_iterations / bound)
    dt = time.perf_counter() - t0
    ok = bad == 0 and cases >= 20 and dt < 60
    report(3, ok, f"{cases} static runs on 24 instances, {bad} over bound, max count/bound {tightest:.3f}, {dt:.1f}s")
    assert ok


def test_criterion_04_d_mu_le_d0():
    worst = -math.inf
    n = 0
    for p in affine_instances(20, 200):
        rng = np.random.default_rng(n)
        x0 = p.x0 + rng.standard_normal(p.n)
        d0 = solution_distance(p, x0)
        for mu in (1e-3, 1.0, 1e3):
            worst = max(worst, regularized_distance(p, mu, x0) - d0)
        n += 1
    ok = worst <= 1e-8
    report(4, ok, f"20 instances x 3 mu, max(d_mu - d0) = {worst:.2e} (need <= 1e-8)")
    assert ok


def test_criterion_05_dr_hpe_correctness():
    runs = fails = 0
    for p in matrix_problems() + affine_instances(6, 300):
        for eng in ENGINES:
            for sigma in SIGMAS:
                for rb in (1e-3, 1e-5):
                    cfg = SolverConfig(sigma, rb, 1e-7)
                    e = make_engine(eng, p, sigma)
                    r = dr_hpe_solve(p, p.x0, cfg, e, keep_points=True)
                    if not r.converged:
                        continue
                    runs += 1
                    c = r.certificate
                    good = np.linalg.norm(c.b) <= rb and c.eps <= cfg.eps_bar
                    if eng == "tseng":
                        cv = c.b - p.F(c.y)
                        good &= c.eps == 0.0
                        good &= p.C.membership_test(cv, c.y, 1e-10 * max(1.0, float(np.max(np.abs(cv)))))
                    else:
                        # rebuild the final step from its recorded start point
                        x_prev = r.trace.points["x_prev"][-1]
                        s = korpelevich_step(p.F, p.C, r.mu, p.x0, x_prev, c.lam, sigma)
                        good &= np.allclose(s.cert.y, c.y, rtol=0, atol=1e-12)
                        good &= np.allclose(s.cert.b, c.b, rtol=0, atol=1e-10)
                        good &= s.cert.eps >= 0.0
                        good &= p.C.membership_test(s.q, s.x_next, 1e-10 * max(1.0, float(np.max(np.abs(s.q)))))
                    fails += not good
    ok = fails == 0 and runs > 0
    report(5, ok, f"{runs} converged DR-HPE runs, {fails} failing tolerance or membership checks")
    assert ok


def test_criterion_06_outer_round_bound():
    runs = bad = 0
    for p in matrix_problems() + affine_instances(6, 400):
        for sigma in SIGMAS:
            for rb in (1e-2, 1e-3, 1e-4):
                cfg = SolverConfig(sigma, rb, 1e-6)
                e = make_engine("tseng", p, sigma)
                r = dr_hpe_solve(p, p.x0, cfg, e)
                d0 = solution_distance(p, p.x0)
                K = outer_round_bound(d0, d0_bar(e.lam, cfg.rho, rb, sigma))
                runs += 1
                bad += not (r.converged and r.outer_iterations <= K)
    ok = bad == 0
    report(6, ok, f"{runs} DR-HPE runs, {bad} exceed 1 + ceil(log2+(d0/D0bar))")
    assert ok


def _sweep(problem, grid, sigma=0.9):
    rows = {"baseline": [], "dr-hpe": []}
    for rb in grid:
        cfg = SolverConfig(sigma, rb, rb, rho=rb / 2, max_inner=5_000_000)
        for name, fn in (("baseline", unregularized_hpe_solve), ("dr-hpe", dr_hpe_solve)):
            r = fn(problem, problem.x0, cfg, "tseng", record=False)
            rows[name].append(Row(problem.name, name, "tseng", rb, rb, sigma, rb / 2, r.mu, 1.0,
                                  r.outer_iterations, r.inner_iterations, r.b_norm, 0.0,
                                  str(r.termination), 0.0))
    return rows


def _separation(rows):
    base, dr = rows["baseline"], rows["dr-hpe"]
    sb, sd = fit_slope(base), fit_slope(dr)
    ratio = base[-1].inner_iters / dr[-1].inner_iters
    ok = 1.7 <= sb <= 2.3 and sd <= 1.3 and ratio > 10
    counts = f"baseline {[r.inner_iters for r in base]}, dr-hpe {[r.inner_iters for r in dr]}"
    return ok, sb, sd, ratio, counts


def test_criterion_07_complexity_separation():
    t0 = time.perf_counter()
    rows = _sweep(make_skew_rotation(), (1e-2, 1e-3, 1e-4, 1e-5))
    ok, sb, sd, ratio, counts = _separation(rows)
    dt = time.perf_counter() - t0
    ok = ok and dt < 300
    report(7, ok, f"skew rotation: baseline slope {sb:.2f} (need [1.7, 2.3]), dr-hpe slope {sd:.2f} "
                  f"(need <= 1.3), ratio at 1e-5 {ratio:.2f} (need > 10); {counts}; {dt:.1f}s")
    assert ok


def test_criterion_07_supplementary_multiscale_skew():
    """Same thresholds on a block rotation with frequencies spread over four decades."""
    t0 = time.perf_counter()
    rows = _sweep(make_skew_spectrum(16, 1e-4, 1.0), (1e-2, 3e-3, 1e-3, 3e-4))
    ok, sb, sd, ratio, counts = _separation(rows)
    dt = time.perf_counter() - t0
    report("7-supp", ok, f"multi-scale skew: baseline slope {sb:.2f}, dr-hpe slope {sd:.2f}, "
                         f"ratio at 3e-4 {ratio:.2f}; {counts}; {dt:.1f}s")
    assert ok


def test_criterion_08_tseng_equality_case():
    F = affine_map([[1.0]], [0.0])
    s = tseng_step(F, zero_operator(), whole_space(), 0.0, np.zeros(1), np.array([1.0]), 0.5)
    # hand oracle: y = 1 - 0.5 * 1, b = F(y), x_next = y - 0.5 (F(y) - F(1))
    y, b, xn = 0.5, 0.5, 0.5 - 0.5 * (0.5 - 1.0)
    gap = abs(abs(0.5 * s.cert.b[0] + s.cert.y[0] - 1.0) - 0.5 * abs(s.cert.y[0] - 1.0))
    ok = s.cert.y[0] == y and s.cert.b[0] == b and s.x_next[0] == xn and gap <= 1e-14
    report(8, ok, f"y={s.cert.y[0]}, b={s.cert.b[0]}, x_next={s.x_next[0]}, |lhs - rhs| = {gap:.1e}")
    assert ok


def test_criterion_09_reduction_identities():
    rng = np.random.default_rng(0)
    worst_res = 0.0
    for C in (zero_operator(), box_normal_cone(-np.ones(4), np.ones(4)), l1_subdifferential(0.3)):
        for lam in (0.1, 1.0, 10.0):
            x, x0 = 3 * rng.standard_normal((2, 4))
            worst_res = max(worst_res, float(np.max(np.abs(shifted_resolvent(C, lam, 0.0, x0, x) - C.resolvent(lam, x)))))
    F = affine_map([[0.5, 1.0, 0.0], [-1.0, 0.2, 0.3], [0.0, -0.3, 1.0]], [0.1, -0.2, 0.3])
    worst_eg = 0.0
    for _ in range(20):
        x = rng.standard_normal(3)
        lam = 0.5 / F.lipschitz_constant
        s = korpelevich_step(F, zero_operator(), 0.0, np.zeros(3), x, lam)
        y = x - lam * F(x)
        worst_eg = max(worst_eg, float(np.max(np.abs(s.cert.y - y))), float(np.max(np.abs(s.x_next - (x - lam * F(y))))))
    worst_g = 0.0
    for t in (1e-3, 0.1, 0.5, 0.9):
        g = gamma_sequence([t] * 500)
        worst_g = max(worst_g, float(np.max(np.abs(g - (1 - t) ** (np.arange(1, 501) / 2)))))
    ok = worst_res <= 1e-14 and worst_eg <= 1e-14 and worst_g <= 1e-14
    report(9, ok, f"resolvent {worst_res:.1e}, extragradient {worst_eg:.1e}, gamma {worst_g:.1e} (each <= 1e-14)")
    assert ok


def test_criterion_10_auxiliary_bounds():
    terminations = 0
    worst = -math.inf
    for p in matrix_problems() + affine_instances(6, 500):
        for eng in ENGINES:
            for sigma in SIGMAS:
                cfg = SolverConfig(sigma, 1e-4, 1e-6)
                e = make_engine(eng, p, sigma)
                dr = dr_hpe_solve(p, p.x0, cfg, e, record=False)
                mus = {rr.mu for rr in dr.rounds} | {1e-2, 1.0}
                for mu in sorted(mus):
                    r = static_solve(p, RegularizationState(mu, p.x0), cfg, e, record=False)
                    if not r.converged:
                        continue
                    terminations += 1
                    d_mu = regularized_distance(p, mu, p.x0)
                    ry, rb = auxiliary_bounds(d_mu, mu, cfg.rho, sigma)
                    c = r.certificate
                    worst = max(worst, float(np.linalg.norm(c.y - p.x0)) - ry, float(np.linalg.norm(c.b)) - rb)
    ok = worst <= 1e-8 and terminations > 0
    report(10, ok, f"{terminations} static terminations, worst excess {worst:.2e} (need <= 1e-8)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
