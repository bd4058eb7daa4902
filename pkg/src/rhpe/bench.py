"""Tolerance sweeps, CSV output, slope fits and sweep comparisons.

A :class:`RunSpec` names a problem, a method and a grid of ``rho_bar``
values. :func:`run` solves once per grid point, re-verifies every
certificate, and returns a :class:`SweepSummary` with a least-squares fit
of ``log(inner_iterations)`` against ``log(1/rho_bar)``.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import (
    CertificateViolationError,
    InvalidComparisonError,
    InvalidConfigError,
    RhpeError,
    UnsupportedProblemError,
)
from .inner_solvers import ENGINES, make_engine
from .problems import (
    ProblemInstance,
    load_problem,
    make_affine_box_vi,
    make_l1_regularized,
    make_skew_rotation,
    make_skew_spectrum,
    problem_to_dict,
    solution_distance,
)
from .regularized import (
    RegularizationState,
    SolveReport,
    SolverConfig,
    Termination,
    d0_bar,
    dr_hpe_solve,
    mu_of,
    static_solve,
    unregularized_hpe_solve,
)

CSV_HEADER = (
    "problem,method,engine,rho_bar,eps_bar,sigma,rho,mu_final,d0_oracle,"
    "outer_iters,inner_iters,b_norm,eps_final,terminated,wall_ms"
).split(",")
METHODS = ("baseline", "static", "dr-hpe")
#: label for a static run that met its own test but not ``||b|| <= rho_bar``
TOLERANCE_MISS = "tolerance_miss"

GENERATORS = {
    "skew-rotation": lambda seed, dim: make_skew_rotation(1.0),
    "skew-spectrum": lambda seed, dim: make_skew_spectrum(dim or 16),
    "affine-box": lambda seed, dim: make_affine_box_vi(dim or 10, seed),
    "affine-box-active": lambda seed, dim: make_affine_box_vi(dim or 10, seed, 0.5, n_active=max(1, (dim or 10) // 3)),
    "l1": lambda seed, dim: make_l1_regularized(dim or 8, seed),
}


class CertificateVerificationError(RhpeError):
    """A reported certificate failed its independent re-check."""


def make_problem(ref: str, seed: int = 0, dim: Optional[int] = None) -> ProblemInstance:
    """Problem from a generator name (see ``GENERATORS``) or a JSON file path."""
    if ref in GENERATORS:
        return GENERATORS[ref](seed, dim)
    if ref.endswith(".json") or os.path.exists(ref):
        return load_problem(ref)
    raise InvalidConfigError(f"unknown problem {ref!r}; expected a JSON path or one of {sorted(GENERATORS)}")


@dataclass(frozen=True)
class RunSpec:
    problem: str
    method: str = "dr-hpe"
    engine: str = "tseng"
    rho_bars: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    eps_bar: float = 1e-6
    sigma: float = 0.9
    rho_frac: float = 0.5
    seed: int = 0
    start: str = "default"
    dim: Optional[int] = None
    max_inner: Optional[int] = None
    timing: bool = True
    backend: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "rho_bars", tuple(float(r) for r in self.rho_bars))
        if self.method not in METHODS:
            raise InvalidConfigError(f"unknown method {self.method!r}")
        if self.engine not in ENGINES:
            raise InvalidConfigError(f"unknown engine {self.engine!r}")
        if not 0 < self.rho_frac < 1:
            raise InvalidConfigError("rho-frac must lie in (0, 1)")
        if not self.rho_bars:
            raise InvalidConfigError("need at least one rho_bar")
        if any(not (r > 0 and math.isfinite(r)) for r in self.rho_bars):
            raise InvalidConfigError("rho_bar values must be positive")
        if len(set(self.rho_bars)) != len(self.rho_bars):
            raise InvalidConfigError("rho_bar values must be distinct")
        if not (self.eps_bar > 0 and math.isfinite(self.eps_bar)):
            raise InvalidConfigError("eps-bar must be positive")
        if not 0 < self.sigma < 1:
            raise InvalidConfigError("sigma must lie in (0, 1)")

    def config(self, rho_bar: float) -> SolverConfig:
        return SolverConfig(self.sigma, rho_bar, self.eps_bar, rho=self.rho_frac * rho_bar,
                            max_inner=self.max_inner)


@dataclass
class Row:
    problem: str
    method: str
    engine: str
    rho_bar: float
    eps_bar: float
    sigma: float
    rho: float
    mu_final: float
    d0_oracle: float
    outer_iters: int
    inner_iters: int
    b_norm: float
    eps_final: float
    terminated: str
    wall_ms: float
    certificate: Optional[dict] = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.terminated == str(Termination.CONVERGED)

    def values(self) -> list:
        out = []
        for name in CSV_HEADER:
            v = getattr(self, name)
            out.append(repr(float(v)) if isinstance(v, float) else str(v))
        return out


@dataclass
class SweepSummary:
    rows: List[Row]
    slope: float

    @property
    def problem(self) -> str:
        return self.rows[0].problem if self.rows else ""

    @property
    def rho_bars(self) -> Tuple[float, ...]:
        return tuple(r.rho_bar for r in self.rows)


def start_point(problem: ProblemInstance, start: str) -> np.ndarray:
    """``default`` (problem x0 or zeros), ``solution`` or a comma-separated vector."""
    n = problem.n
    if start == "default":
        return problem.x0.copy() if problem.x0 is not None else np.zeros(n)
    if start == "solution":
        if problem.known_solution is None:
            raise UnsupportedProblemError(f"{problem.name} has no known solution")
        return problem.known_solution.copy()
    try:
        x = np.array([float(t) for t in start.split(",")])
    except ValueError as exc:
        raise InvalidConfigError(f"bad start point {start!r}") from exc
    if x.shape != (n,):
        raise InvalidConfigError(f"start point needs {n} coordinates")
    return x


def _d0(problem, x0) -> float:
    try:
        return solution_distance(problem, x0)
    except UnsupportedProblemError:
        return math.nan


def solve(problem: ProblemInstance, spec: RunSpec, rho_bar: float, x0=None) -> SolveReport:
    """Run ``spec.method`` once at ``rho_bar``.

    The static method uses ``D0 = d0`` when the problem knows its solution
    set, so its output meets ``rho_bar``; otherwise it falls back to the
    initial guess of the doubling scheme.
    """
    cfg = spec.config(rho_bar)
    x0 = start_point(problem, spec.start) if x0 is None else x0
    engine = make_engine(spec.engine, problem, cfg.sigma)
    if spec.method == "baseline":
        return unregularized_hpe_solve(problem, x0, cfg, engine, backend=spec.backend)
    if spec.method == "dr-hpe":
        return dr_hpe_solve(problem, x0, cfg, engine, backend=spec.backend)
    d0 = _d0(problem, x0)
    D0 = d0 if d0 > 0 else d0_bar(engine.lam, cfg.rho, cfg.rho_bar, cfg.sigma)
    mu = mu_of(D0, cfg.rho, cfg.rho_bar, cfg.sigma)
    return static_solve(problem, RegularizationState(mu, x0, D0), cfg, engine, backend=spec.backend)


def verify_report(report: SolveReport, rho_bar: float, eps_bar: float) -> None:
    """Re-check a converged report; raise :class:`CertificateVerificationError` on failure."""
    if not report.trace.all_pass():
        raise CertificateVerificationError("a recorded step fails the relative-error inequality")
    if report.termination is not Termination.CONVERGED:
        return
    c = report.certificate
    if report.mu == 0 or report.rounds:
        b_norm = float(np.linalg.norm(c.b))
        if not (b_norm <= rho_bar and c.eps <= eps_bar):
            raise CertificateVerificationError(f"converged certificate misses tolerances: ||b||={b_norm:.3e}")


def run_point(problem: ProblemInstance, spec: RunSpec, rho_bar: float, trace_path: Optional[str] = None) -> Row:
    x0 = start_point(problem, spec.start)
    t = time.perf_counter()
    rep = solve(problem, spec, rho_bar, x0)
    wall = (time.perf_counter() - t) * 1e3 if spec.timing else 0.0
    verify_report(rep, rho_bar, spec.eps_bar)
    c = rep.certificate
    b_norm = rep.b_norm
    eps = c.eps if c is not None else math.nan
    term = str(rep.termination)
    if rep.converged and not (b_norm <= rho_bar and eps <= spec.eps_bar):
        term = TOLERANCE_MISS
    if trace_path:
        rep.trace.write_csv(trace_path)
    cert = None
    if c is not None:
        cert = {"y": [float(v) for v in c.y], "b": [float(v) for v in c.b], "eps": float(c.eps),
                "x0": [float(v) for v in x0]}
    return Row(
        problem=problem.name,
        method=spec.method,
        engine=spec.engine,
        rho_bar=rho_bar,
        eps_bar=spec.eps_bar,
        sigma=spec.sigma,
        rho=spec.rho_frac * rho_bar,
        mu_final=float(rep.mu),
        d0_oracle=_d0(problem, x0),
        outer_iters=rep.outer_iterations,
        inner_iters=rep.inner_iterations,
        b_norm=b_norm,
        eps_final=float(eps),
        terminated=term,
        wall_ms=float(wall),
        certificate=cert,
    )


def _worker(args):
    spec, rho_bar, trace_path = args
    problem = make_problem(spec.problem, spec.seed, spec.dim)
    return run_point(problem, spec, rho_bar, trace_path)


def trace_paths(trace: Optional[str], n: int) -> List[Optional[str]]:
    """One trace file per grid point; ``name.csv`` becomes ``name_1.csv``... when ``n > 1``."""
    if not trace:
        return [None] * n
    if n == 1:
        return [trace]
    stem, ext = os.path.splitext(trace)
    return [f"{stem}_{i + 1}{ext or '.csv'}" for i in range(n)]


def fit_slope(rows: Sequence[Row]) -> float:
    """Least-squares slope of ``log(inner)`` on ``log(1/rho_bar)`` over converged rows (``nan`` if < 3)."""
    pts = [(r.rho_bar, r.inner_iters) for r in rows if r.converged and r.inner_iters > 0]
    if len(pts) < 3:
        return math.nan
    x = np.log([1.0 / p[0] for p in pts])
    y = np.log([float(p[1]) for p in pts])
    if np.ptp(x) == 0:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def run(spec: RunSpec, out: Optional[str] = None, trace: Optional[str] = None, jobs: int = 1,
        certs: Optional[str] = None) -> SweepSummary:
    """Solve at every grid point and optionally write the CSV, traces and certificates.

    Rows are written in grid order regardless of ``jobs``.
    """
    paths = trace_paths(trace, len(spec.rho_bars))
    if jobs > 1 and len(spec.rho_bars) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_worker, [(spec, r, p) for r, p in zip(spec.rho_bars, paths)]))
    else:
        problem = make_problem(spec.problem, spec.seed, spec.dim)
        rows = [run_point(problem, spec, r, p) for r, p in zip(spec.rho_bars, paths)]
    summary = SweepSummary(rows, fit_slope(rows))
    if out:
        write_csv(rows, out)
    if certs:
        problem = make_problem(spec.problem, spec.seed, spec.dim)
        write_certificates(rows, problem, spec, certs)
    return summary


def write_csv(rows: Sequence[Row], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.values())


def read_csv(path: str) -> List[Row]:
    ints = {"outer_iters", "inner_iters"}
    strs = {"problem", "method", "engine", "terminated"}
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise InvalidConfigError(f"{path} does not have the sweep CSV header")
        for rec in reader:
            kw = {}
            for k, v in rec.items():
                kw[k] = v if k in strs else int(v) if k in ints else float(v)
            rows.append(Row(**kw))
    return rows


def write_certificates(rows: Sequence[Row], problem: ProblemInstance, spec: RunSpec, path: str) -> None:
    data = {
        "engine": spec.engine,
        "problem": problem_to_dict(problem) if problem.is_affine else None,
        "rows": [{"rho_bar": r.rho_bar, "terminated": r.terminated, **(r.certificate or {})} for r in rows],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")


def verify_outputs(csv_path: str, certs_path: Optional[str] = None, trace_files: Sequence[str] = (),
                   tol: float = 1e-10) -> List[str]:
    """Independent check of serialized results; returns a list of failure messages.

    Uses only what was written to disk: the CSV tolerances, the stored
    certificate vectors (``||b||`` recomputed, and for Tseng runs on affine
    problems ``b - F(y)`` tested for membership in ``C(y)``) and trace rows.
    """
    from .problems import problem_from_dict

    failures = []
    rows = read_csv(csv_path)
    for i, r in enumerate(rows):
        if r.converged and not (r.b_norm <= r.rho_bar and r.eps_final <= r.eps_bar):
            failures.append(f"row {i + 1}: converged but b_norm={r.b_norm!r} eps={r.eps_final!r}")
    if certs_path:
        with open(certs_path) as fh:
            data = json.load(fh)
        problem = problem_from_dict(data["problem"]) if data.get("problem") else None
        for i, (r, c) in enumerate(zip(rows, data["rows"])):
            if not r.converged or "b" not in c:
                continue
            b = np.asarray(c["b"], dtype=float)
            if float(np.linalg.norm(b)) > r.rho_bar or c["eps"] > r.eps_bar:
                failures.append(f"row {i + 1}: stored certificate misses tolerances")
            if problem is not None and data["engine"] == "tseng":
                y = np.asarray(c["y"], dtype=float)
                cvec = b - problem.F(y)
                scale = max(1.0, float(np.max(np.abs(cvec))))
                if not problem.C.membership_test(cvec, y, tol * scale):
                    failures.append(f"row {i + 1}: b - F(y) is not in C(y)")
    for path in trace_files:
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                lhs, rhs = float(rec["lhs"]), float(rec["rhs"])
                if lhs > rhs + tol * max(1.0, abs(rhs)):
                    failures.append(f"{path} k={rec['k']}: lhs {lhs!r} > rhs {rhs!r}")
    return failures


@dataclass
class Comparison:
    rho_bars: Tuple[float, ...]
    iters_a: Tuple[int, ...]
    iters_b: Tuple[int, ...]
    ratios: Tuple[float, ...]
    trend: str


def _trend(ratios: Sequence[float]) -> str:
    d = np.diff(np.asarray(ratios, dtype=float))
    if d.size == 0 or np.all(d == 0):
        return "flat"
    if np.all(d >= 0):
        return "increasing"
    if np.all(d <= 0):
        return "decreasing"
    return "mixed"


def compare(a: SweepSummary, b: SweepSummary) -> Comparison:
    """Per-grid-point ratios ``inner_a / inner_b``, ordered from loose to tight ``rho_bar``.

    ``trend`` describes how the ratio moves as ``rho_bar`` shrinks.
    """
    if a.problem != b.problem:
        raise InvalidComparisonError(f"different problems: {a.problem!r} vs {b.problem!r}")
    if sorted(a.rho_bars) != sorted(b.rho_bars):
        raise InvalidComparisonError("the two sweeps use different rho_bar grids")
    ra = sorted(a.rows, key=lambda r: -r.rho_bar)
    rb = sorted(b.rows, key=lambda r: -r.rho_bar)
    ratios = tuple(x.inner_iters / y.inner_iters if y.inner_iters else math.inf for x, y in zip(ra, rb))
    return Comparison(
        tuple(r.rho_bar for r in ra),
        tuple(r.inner_iters for r in ra),
        tuple(r.inner_iters for r in rb),
        ratios,
        _trend(ratios),
    )
