"""Regularized HPE solvers: the static method and the doubling scheme.

The static method runs HPE on ``B + mu (. - x0)`` and stops as soon as
``||b + mu (y - x0)|| <= rho`` and ``eps <= eps``. Because the regularized
operator is strongly monotone the iterates contract linearly, so the
number of steps grows only logarithmically in the tolerances.

The dynamic method does not need ``d0 = dist(x0, B^{-1}(0))``. It guesses a
distance ``D0``, picks ``mu = mu_of(D0, ...)``, runs the static method from
``x0`` and accepts the result when ``mu ||y - x0|| <= rho_bar - rho``. If the
test fails it doubles ``D0`` (halving ``mu``) and restarts from ``x0``.

Affine problems with a box, l1 or empty constraint run through the
compiled kernel in :mod:`rhpe.kernels`; everything else steps through an
:class:`~rhpe.inner_solvers.InnerEngine` in Python.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import (
    BrokenConvexityError,
    CertificateViolationError,
    InvalidConfigError,
    InvalidInputError,
    NumericFailureError,
    UnsupportedProblemError,
)
from .hpe_core import HpeCertificate, Trace, gamma_from_stepsizes, tightest_sigma
from .inner_solvers import ENGINES, InnerEngine, make_engine
from .operators import as_vector
from .problems import ProblemInstance, kernel_constraint, regularized_distance, solution_distance
from . import kernels

#: iterates beyond ``DIVERGENCE_FACTOR * (1 + ||x0||)`` count as a numeric failure
DIVERGENCE_FACTOR = 1e12
#: inner cap used when no distance oracle is available
DEFAULT_MAX_INNER = 10**6
BACKENDS = ("auto", "cython", "python", "generic")


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    INNER_CAP = "inner_cap"
    OUTER_CAP = "outer_cap"
    NUMERIC_FAILURE = "numeric_failure"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and safety caps.

    Parameters
    ----------
    sigma : float
        Relative error of the inner steps, in ``[0, 1)``.
    rho_bar, eps_bar : float
        Target residual norm and enlargement.
    rho : float, optional
        Internal split ``0 < rho < rho_bar``; defaults to ``rho_bar / 2``.
    lam_bar : float, optional
        Stepsize scale in the initial distance guess. ``None`` means the
        engine stepsize ``sigma / L``.
    max_inner : int, optional
        Inner cap per static run. ``None`` picks ten times the static bound
        when a distance oracle exists, else ``DEFAULT_MAX_INNER``.
    max_outer : int
        Cap on doubling rounds.
    """

    sigma: float
    rho_bar: float
    eps_bar: float
    rho: Optional[float] = None
    lam_bar: Optional[float] = None
    max_inner: Optional[int] = None
    max_outer: int = 64

    def __post_init__(self):
        if self.rho is None:
            object.__setattr__(self, "rho", 0.5 * self.rho_bar)
        for name in ("sigma", "rho_bar", "eps_bar", "rho"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidConfigError(f"{name} must be finite")
        if not 0 <= self.sigma < 1:
            raise InvalidConfigError("sigma must lie in [0, 1)")
        if not self.rho_bar > 0 or not self.eps_bar > 0:
            raise InvalidConfigError("rho_bar and eps_bar must be positive")
        if not 0 < self.rho < self.rho_bar:
            raise InvalidConfigError("rho must lie in (0, rho_bar)")
        if self.lam_bar is not None and not (self.lam_bar > 0 and math.isfinite(self.lam_bar)):
            raise InvalidConfigError("lam_bar must be positive")
        if self.max_inner is not None and self.max_inner < 1:
            raise InvalidConfigError("max_inner must be a positive integer")
        if self.max_outer < 1:
            raise InvalidConfigError("max_outer must be a positive integer")


@dataclass(frozen=True)
class RegularizationState:
    mu: float
    x0: np.ndarray
    D0: float = math.nan

    def __post_init__(self):
        if not self.mu > 0 or not math.isfinite(self.mu):
            raise InvalidConfigError("mu must be positive and finite")
        object.__setattr__(self, "x0", as_vector(self.x0, "x0"))


@dataclass(frozen=True)
class RoundRecord:
    """One doubling round: guess, weight, work done and the exit test value."""

    D0: float
    mu: float
    inner_iterations: int
    mu_dist: float
    accepted: bool


@dataclass
class SolveReport:
    """Result of a solve.

    ``certificate`` holds the final ``(y, v, b, eps)``; ``b`` is the part in
    ``B^[eps](y)`` so ``termination == converged`` means ``||b|| <= rho_bar``
    and ``eps <= eps_bar`` (or ``rho`` and ``eps_bar`` on ``b + mu (y - x0)`` for a static
    run). ``predicted_bound`` is the static iteration bound at the final
    ``mu`` evaluated with the oracle distance, ``nan`` when no oracle
    exists and ``inf`` for the unregularized baseline.
    """

    certificate: Optional[HpeCertificate]
    inner_iterations: int
    outer_iterations: int
    termination: Termination
    trace: Trace
    predicted_bound: float
    mu: float
    x0: np.ndarray
    x_final: Optional[np.ndarray] = None
    lam_min: float = math.nan
    rho: float = math.nan
    eps: float = math.nan
    rounds: List[RoundRecord] = field(default_factory=list)
    d_mu: float = math.nan
    backend: str = ""

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    @property
    def b_norm(self) -> float:
        return float(np.linalg.norm(self.certificate.b)) if self.certificate else math.nan

    def to_record(self) -> dict:
        c = self.certificate
        return {
            "termination": str(self.termination),
            "inner_iterations": self.inner_iterations,
            "outer_iterations": self.outer_iterations,
            "mu": self.mu,
            "b_norm": self.b_norm,
            "eps": c.eps if c else math.nan,
            "predicted_bound": self.predicted_bound,
            "y": None if c is None else [float(t) for t in c.y],
            "b": None if c is None else [float(t) for t in c.b],
        }


# ---------------------------------------------------------------------------
# closed-form quantities


def _check_split(rho: float, rho_bar: float, sigma: float) -> None:
    if not 0 < rho < rho_bar:
        raise InvalidConfigError("need 0 < rho < rho_bar")
    if not 0 <= sigma < 1:
        raise InvalidConfigError("sigma must lie in [0, 1)")


def _kappa(sigma: float) -> float:
    return 1.0 + 1.0 / math.sqrt(1.0 - sigma * sigma)


def mu_of(D0: float, rho: float, rho_bar: float, sigma: float) -> float:
    """Regularization weight ``(rho_bar - rho) / ((1 + 1/sqrt(1 - sigma^2)) D0)``."""
    _check_split(rho, rho_bar, sigma)
    if not D0 > 0:
        raise InvalidConfigError("D0 must be positive")
    return (rho_bar - rho) / (_kappa(sigma) * D0)


def d0_bar(lam_bar: float, rho: float, rho_bar: float, sigma: float) -> float:
    """Initial distance guess ``2 lam_bar (rho_bar - rho) / ((1 - sigma^2)(1 + 1/sqrt(1 - sigma^2)))``."""
    _check_split(rho, rho_bar, sigma)
    if not lam_bar > 0:
        raise InvalidConfigError("lam_bar must be positive")
    return 2.0 * lam_bar * (rho_bar - rho) / ((1.0 - sigma * sigma) * _kappa(sigma))


def log_plus(t: float) -> float:
    return math.log(t) if t > 1.0 else 0.0


def log2_plus(t: float) -> float:
    return math.log2(t) if t > 1.0 else 0.0


def static_iteration_bound(lam_low: float, mu: float, sigma: float, d: float, rho: float, eps: float) -> float:
    """Worst-case step count of the static method (natural logarithm).

    ``(1/(2 lam mu) + 1/(1 - s^2)) * (2 + max(log+((1+s)/(1-s) d^2/(lam rho)^2),
    log+(s^2 d^2 / (2 (1 - s^2) lam eps))))``.
    """
    s2 = sigma * sigma
    lead = 1.0 / (2.0 * lam_low * mu) + 1.0 / (1.0 - s2)
    if d == 0:
        return 2.0 * lead
    t1 = (1.0 + sigma) / (1.0 - sigma) * d * d / (lam_low * lam_low * rho * rho)
    t2 = s2 * d * d / (2.0 * (1.0 - s2) * lam_low * eps)
    return lead * (2.0 + max(log_plus(t1), log_plus(t2)))


def outer_round_bound(d0: float, D0_bar: float) -> int:
    """Rounds needed until ``2^(K-1) D0_bar >= d0``: ``1 + ceil(log2+(d0 / D0_bar))``."""
    return 1 + math.ceil(log2_plus(d0 / D0_bar))


def outer_round_bound_natural(d0: float, D0_bar: float) -> int:
    """Same expression with the natural logarithm; smaller and not a valid bound in general."""
    return 1 + math.ceil(log_plus(d0 / D0_bar))


def dr_hpe_work_bound(d0: float, lam_bar: float, lam_low: float, rho: float, rho_bar: float, eps_bar: float) -> float:
    """Shape of the total inner work, ``(1 + d0/(lam_bar (rho_bar - rho))) (1 + log+ d0/(lam rho) + log+ d0/(lam eps))``.

    Constants are dropped; callers compare measured work against a multiple.
    """
    return (1.0 + d0 / (lam_bar * (rho_bar - rho))) * (
        1.0 + log_plus(d0 / (lam_low * rho)) + log_plus(d0 / (lam_low * eps_bar))
    )


# ---------------------------------------------------------------------------
# inner loop


@dataclass
class _Run:
    status: Termination
    k: int
    cert: Optional[HpeCertificate]
    x: np.ndarray
    lam_min: float
    trace: Trace
    backend: str


def _resolve_engine(problem: ProblemInstance, cfg: SolverConfig, engine) -> InnerEngine:
    if engine is None:
        return make_engine("tseng", problem, cfg.sigma)
    if isinstance(engine, str):
        return make_engine(engine, problem, cfg.sigma)
    if abs(engine.sigma - cfg.sigma) > 0:
        raise InvalidConfigError(f"engine sigma {engine.sigma} differs from config sigma {cfg.sigma}")
    return engine


def _use_kernel(problem: ProblemInstance, backend: str) -> bool:
    if backend not in BACKENDS:
        raise InvalidInputError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "generic":
        return False
    if not problem.is_affine:
        if backend != "auto":
            raise UnsupportedProblemError("kernel backends need an affine problem with a known constraint")
        return False
    return True


def _kernel_run(problem, engine, mu, x0, xstart, rho, eps, max_inner, backend, record, keep_points, div_limit):
    run = kernels.get_kernel("auto" if backend == "auto" else backend)
    name = kernels.BACKEND if backend == "auto" else backend
    n = problem.n
    lo, hi, ctype, alpha = kernel_constraint(problem.constraint, n)
    code = 0 if engine.kind == "tseng" else 1
    out = run(problem.F.matrix, problem.F.offset, ctype, lo, hi, alpha, code, float(mu), x0, xstart,
              engine.lam, engine.sigma, float(rho), float(eps), int(max_inner),
              engine.max_halvings, bool(record), bool(keep_points), float(div_limit))
    status = out["status"]
    if status == kernels.CERT_VIOLATION:
        raise CertificateViolationError(f"relative-error test failed at inner iteration {out['k']}")
    if status == kernels.BROKEN_CONVEXITY:
        raise BrokenConvexityError(f"negative convexity gap at inner iteration {out['k']}")
    term = {
        kernels.CONVERGED: Termination.CONVERGED,
        kernels.INNER_CAP: Termination.INNER_CAP,
        kernels.NUMERIC_FAILURE: Termination.NUMERIC_FAILURE,
    }[status]
    cert = None
    if out["k"] > 0:
        cert = HpeCertificate(out["y"], out["v"], out["b"], float(out["eps"]), float(out["lam"]),
                              float(out["sigma_used"]))
    cols = out["columns"] or {}
    if cols:
        cols["gamma"] = gamma_from_stepsizes(cols["lam"], mu, engine.sigma)
    return _Run(term, int(out["k"]), cert, out["x"], float(out["lam_min"]), Trace(cols, out["points"]), name)


def _generic_run(problem, engine, mu, x0, xstart, rho, eps_tol, max_inner, record, keep_points, div_limit):
    x = xstart.copy()
    sig2 = engine.sigma ** 2
    cols = {c: [] for c in ("lam", "lhs", "rhs", "v_norm", "b_norm", "eps", "y_dist_x0")}
    pts = {"x_prev": [], "x_next": [], "y": []}
    status = Termination.INNER_CAP
    cert = None
    lam_min = engine.lam
    sig_used = 0.0
    k = 0
    while k < max_inner:
        k += 1
        step = engine.step(problem, mu, x0, x)
        c = step.cert
        r = c.lam * c.v + c.y - x
        d = c.y - x
        dist2 = float(d @ d)
        lhs = float(r @ r) + 2.0 * c.lam * c.eps
        lam_min = min(lam_min, c.lam)
        sig_used = max(sig_used, tightest_sigma(lhs, dist2))
        cert = HpeCertificate(c.y, c.v, c.b, c.eps, c.lam, sig_used)
        vn = float(np.linalg.norm(c.v))
        x_next = x - c.lam * c.v
        if record:
            cols["lam"].append(c.lam)
            cols["lhs"].append(lhs)
            cols["rhs"].append(sig2 * dist2)
            cols["v_norm"].append(vn)
            cols["b_norm"].append(float(np.linalg.norm(c.b)))
            cols["eps"].append(c.eps)
            cols["y_dist_x0"].append(float(np.linalg.norm(c.y - x0)))
            if keep_points:
                pts["x_prev"].append(x)
                pts["x_next"].append(x_next)
                pts["y"].append(c.y)
        if vn <= rho and c.eps <= eps_tol:
            status = Termination.CONVERGED
            break
        x = x_next
        if not float(np.linalg.norm(x)) <= div_limit:
            status = Termination.NUMERIC_FAILURE
            break
    trace = Trace()
    if record:
        cols = {name: np.asarray(v, dtype=float) for name, v in cols.items()}
        cols["gamma"] = gamma_from_stepsizes(cols["lam"], mu, engine.sigma)
        points = None
        if keep_points:
            n = x.shape[0]
            points = {key: np.asarray(v, dtype=float).reshape(-1, n) for key, v in pts.items()}
        trace = Trace(cols, points)
    return _Run(status, k, cert, x, lam_min, trace, "generic")


def run_regularized(
    problem: ProblemInstance,
    engine: InnerEngine,
    mu: float,
    x0,
    rho: float,
    eps: float,
    max_inner: int,
    *,
    xstart=None,
    backend: str = "auto",
    record: bool = True,
    keep_points: bool = False,
) -> _Run:
    """HPE on ``B + mu (. - x0)`` until ``||v|| <= rho`` and ``eps_k <= eps``.

    ``mu = 0`` gives plain HPE. ``rho = 0`` runs exactly ``max_inner`` steps
    unless ``v`` vanishes. The returned object carries the raw status, final
    certificate, last iterate and trace.
    """
    x0 = as_vector(x0, "x0")
    xstart = x0 if xstart is None else as_vector(xstart, "xstart")
    if x0.shape[0] != problem.n or xstart.shape[0] != problem.n:
        raise InvalidInputError("start point has the wrong dimension")
    if not mu >= 0:
        raise InvalidInputError("mu must be nonnegative")
    div_limit = DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(x0)))
    if _use_kernel(problem, backend):
        return _kernel_run(problem, engine, mu, x0, xstart, rho, eps, max_inner, backend,
                           record, keep_points, div_limit)
    return _generic_run(problem, engine, mu, x0, xstart.copy(), rho, eps, max_inner,
                        record, keep_points, div_limit)


def _oracle_d_mu(problem: ProblemInstance, mu: float, x0: np.ndarray) -> float:
    if problem.solution_oracle is None:
        return math.nan
    return regularized_distance(problem, mu, x0)


def _default_cap(problem, engine, mu, x0, rho, eps, cfg) -> Tuple[int, float, float]:
    """Cap plus (predicted bound, oracle d_mu); oracle values are diagnostics only."""
    d_mu = _oracle_d_mu(problem, mu, x0)
    bound = math.nan
    if math.isfinite(d_mu):
        bound = static_iteration_bound(engine.lam, mu, engine.sigma, d_mu, rho, eps)
    if cfg.max_inner is not None:
        return cfg.max_inner, bound, d_mu
    if math.isfinite(bound):
        return max(10 * math.ceil(bound), 10), bound, d_mu
    return DEFAULT_MAX_INNER, bound, d_mu


# ---------------------------------------------------------------------------
# public solvers


def static_solve(
    problem: ProblemInstance,
    reg: RegularizationState,
    cfg: SolverConfig,
    engine=None,
    *,
    backend: str = "auto",
    record: bool = True,
    keep_points: bool = False,
) -> SolveReport:
    """Static regularized HPE with tolerances ``(cfg.rho, cfg.eps_bar)``.

    On convergence ``||b + mu (y - x0)|| <= cfg.rho`` and ``eps <= cfg.eps_bar``.
    """
    engine = _resolve_engine(problem, cfg, engine)
    cap, bound, d_mu = _default_cap(problem, engine, reg.mu, reg.x0, cfg.rho, cfg.eps_bar, cfg)
    run = run_regularized(problem, engine, reg.mu, reg.x0, cfg.rho, cfg.eps_bar, cap,
                          backend=backend, record=record, keep_points=keep_points)
    return SolveReport(
        certificate=run.cert,
        inner_iterations=run.k,
        outer_iterations=1,
        termination=run.status,
        trace=run.trace,
        predicted_bound=bound,
        mu=reg.mu,
        x0=reg.x0,
        x_final=run.x,
        lam_min=run.lam_min,
        rho=cfg.rho,
        eps=cfg.eps_bar,
        d_mu=d_mu,
        backend=run.backend,
    )


def dr_hpe_solve(
    problem: ProblemInstance,
    x0,
    cfg: SolverConfig,
    engine=None,
    *,
    backend: str = "auto",
    record: bool = True,
    keep_points: bool = False,
) -> SolveReport:
    """Doubling scheme over ``D0`` starting at ``d0_bar``.

    Every round calls :func:`static_solve` from the same ``x0``. A
    converged report satisfies ``||b|| <= rho_bar`` and ``eps <= eps_bar``.
    """
    engine = _resolve_engine(problem, cfg, engine)
    x0 = as_vector(x0, "x0")
    lam_bar = cfg.lam_bar if cfg.lam_bar is not None else engine.lam
    D0 = d0_bar(lam_bar, cfg.rho, cfg.rho_bar, cfg.sigma)
    rounds: List[RoundRecord] = []
    traces: List[Trace] = []
    total = 0
    rep = None
    for _ in range(cfg.max_outer):
        mu = mu_of(D0, cfg.rho, cfg.rho_bar, cfg.sigma)
        rep = static_solve(problem, RegularizationState(mu, x0, D0), cfg, engine,
                           backend=backend, record=record, keep_points=keep_points)
        total += rep.inner_iterations
        traces.append(rep.trace)
        if not rep.converged:
            rounds.append(RoundRecord(D0, mu, rep.inner_iterations, math.nan, False))
            return _dr_report(rep, rep.termination, total, rounds, traces)
        mu_dist = mu * float(np.linalg.norm(rep.certificate.y - x0))
        ok = mu_dist <= cfg.rho_bar - cfg.rho
        rounds.append(RoundRecord(D0, mu, rep.inner_iterations, mu_dist, ok))
        if ok:
            b_norm = float(np.linalg.norm(rep.certificate.b))
            if b_norm > cfg.rho_bar * (1.0 + 1e-12):
                raise NumericFailureError(f"accepted round has ||b|| = {b_norm:.3e} > rho_bar")
            return _dr_report(rep, Termination.CONVERGED, total, rounds, traces)
        D0 *= 2.0
    return _dr_report(rep, Termination.OUTER_CAP, total, rounds, traces)


def _dr_report(last: SolveReport, term, total, rounds, traces) -> SolveReport:
    return SolveReport(
        certificate=last.certificate,
        inner_iterations=total,
        outer_iterations=len(rounds),
        termination=term,
        trace=Trace.concat(traces),
        predicted_bound=last.predicted_bound,
        mu=last.mu,
        x0=last.x0,
        x_final=last.x_final,
        lam_min=last.lam_min,
        rho=last.rho,
        eps=last.eps,
        rounds=rounds,
        d_mu=last.d_mu,
        backend=last.backend,
    )


def unregularized_hpe_solve(
    problem: ProblemInstance,
    x0,
    cfg: SolverConfig,
    engine=None,
    *,
    backend: str = "auto",
    record: bool = True,
    keep_points: bool = False,
) -> SolveReport:
    """Plain HPE stopping at ``||b|| <= rho_bar`` and ``eps <= eps_bar``; the baseline."""
    engine = _resolve_engine(problem, cfg, engine)
    x0 = as_vector(x0, "x0")
    cap = cfg.max_inner if cfg.max_inner is not None else DEFAULT_MAX_INNER
    run = run_regularized(problem, engine, 0.0, x0, cfg.rho_bar, cfg.eps_bar, cap,
                          backend=backend, record=record, keep_points=keep_points)
    return SolveReport(
        certificate=run.cert,
        inner_iterations=run.k,
        outer_iterations=1,
        termination=run.status,
        trace=run.trace,
        predicted_bound=math.inf,
        mu=0.0,
        x0=x0,
        x_final=run.x,
        lam_min=run.lam_min,
        rho=cfg.rho_bar,
        eps=cfg.eps_bar,
        backend=run.backend,
    )


def regularized_hpe_iterates(
    problem: ProblemInstance,
    engine: InnerEngine,
    mu: float,
    x0,
    n_iter: int,
    backend: str = "auto",
) -> Trace:
    """Exactly ``n_iter`` regularized steps (no stopping test), with points kept."""
    run = run_regularized(problem, engine, mu, x0, 0.0, 0.0, n_iter, backend=backend,
                          record=True, keep_points=True)
    return run.trace


def d_mu_gap_check(problem: ProblemInstance, x0, mu: float) -> Tuple[float, float]:
    """Return ``(d_mu, d0)`` from the oracles and check ``d_mu <= d0 + 1e-8``."""
    if problem.solution_oracle is None or problem.distance_oracle is None:
        raise UnsupportedProblemError(f"{problem.name} lacks solution-set data")
    x0 = as_vector(x0, "x0")
    d_mu = regularized_distance(problem, mu, x0)
    d0 = solution_distance(problem, x0)
    if d_mu > d0 + 1e-8:
        raise NumericFailureError(f"oracle distances inconsistent: d_mu={d_mu:.3e} > d0={d0:.3e}")
    return d_mu, d0


def auxiliary_bounds(d_mu: float, mu: float, rho: float, sigma: float) -> Tuple[float, float]:
    """Bounds on ``||y - x0||`` and ``||b||`` at a static termination."""
    ry = _kappa(sigma) * d_mu
    return ry, rho + mu * ry


METHODS = {"baseline": unregularized_hpe_solve, "dr-hpe": dr_hpe_solve}

__all__ = [
    "ENGINES",
    "Termination",
    "SolverConfig",
    "RegularizationState",
    "RoundRecord",
    "SolveReport",
    "mu_of",
    "d0_bar",
    "static_iteration_bound",
    "outer_round_bound",
    "outer_round_bound_natural",
    "dr_hpe_work_bound",
    "run_regularized",
    "static_solve",
    "dr_hpe_solve",
    "unregularized_hpe_solve",
    "regularized_hpe_iterates",
    "d_mu_gap_check",
    "auxiliary_bounds",
]
