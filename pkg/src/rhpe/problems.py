"""Test problems ``0 in M x + q + C(x)`` with known solutions and distance oracles.

Every generator draws from ``numpy.random.default_rng(seed)`` (PCG64), so an
instance is a pure function of its arguments. Instances can be dumped to a
small JSON format and reloaded bit-exactly::

    {"name": ..., "n": ..., "M": [row-major floats], "q": [...],
     "constraint": {"type": "box" | "l1" | "none", "lo": [...], "hi": [...], "alpha": a},
     "known_solution": [...] | null, "x0": [...] | null}

The regularized-solution oracles below never call the solvers on the
common path; they solve the piecewise-linear optimality system directly.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import InvalidInputError, InvalidSetError, UnsupportedProblemError
from .operators import (
    ClosedConvexSet,
    LipschitzMap,
    ResolventMap,
    affine_map,
    as_vector,
    box_normal_cone,
    box_set,
    l1_subdifferential,
    whole_space,
    zero_operator,
)

CONSTRAINT_TYPES = ("none", "box", "l1")


@dataclass(frozen=True)
class Constraint:
    type: str = "none"
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.type not in CONSTRAINT_TYPES:
            raise InvalidInputError(f"unknown constraint type {self.type!r}")
        if self.type == "box" and (self.lo is None or self.hi is None):
            raise InvalidSetError("box constraint needs lo and hi")
        if self.type == "l1" and not (self.alpha is not None and self.alpha > 0):
            raise InvalidInputError("l1 constraint needs alpha > 0")


@dataclass(frozen=True)
class ProblemInstance:
    """Structured inclusion ``0 in F(x) + C(x)`` with optional oracle data.

    Attributes
    ----------
    F, C, omega
        Single-valued part, resolvent-accessible part, and the set on which
        ``F`` is Lipschitz (containing ``Dom(C)``).
    known_solution
        A point of the solution set, if one is known.
    solution_oracle
        ``(mu, x0) -> x*_mu``, the unique solution of the regularized
        inclusion ``0 in F(x) + C(x) + mu (x - x0)``.
    distance_oracle
        ``x0 -> d0``, the distance from ``x0`` to the solution set.
    x0
        Default starting point.
    constraint
        Description of ``C`` for affine problems; enables the compiled
        kernels and JSON export.
    """

    F: LipschitzMap
    C: ResolventMap
    omega: ClosedConvexSet
    name: str
    known_solution: Optional[np.ndarray] = None
    solution_oracle: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    distance_oracle: Optional[Callable[[np.ndarray], float]] = None
    x0: Optional[np.ndarray] = None
    constraint: Optional[Constraint] = None

    @property
    def n(self) -> int:
        if self.F.matrix is not None:
            return self.F.matrix.shape[0]
        if self.known_solution is not None:
            return self.known_solution.shape[0]
        if self.x0 is not None:
            return self.x0.shape[0]
        raise UnsupportedProblemError("dimension unknown for a callable-only problem")

    @property
    def is_affine(self) -> bool:
        return self.F.matrix is not None and self.constraint is not None

    @property
    def lipschitz(self) -> float:
        return self.F.lipschitz_constant


# ---------------------------------------------------------------------------
# oracles


def _resolve(constraint: Constraint, w: np.ndarray) -> np.ndarray:
    if constraint.type == "box":
        return np.minimum(np.maximum(w, constraint.lo), constraint.hi)
    if constraint.type == "l1":
        a = constraint.alpha
        return np.sign(w) * np.maximum(np.abs(w) - a, 0.0)
    return w


def _natural_residual(constraint, A, r, x) -> float:
    c = -(A @ x + r)
    return float(np.max(np.abs(x - _resolve(constraint, x + c))))


def _solve_pattern(constraint, A, r, state):
    """Solve the linear system for one active pattern.

    ``state[i]`` is -1 (at lower bound / negative), 0 (free / zero) or +1
    (at upper bound / positive). Returns ``None`` for a singular system.
    """
    n = r.shape[0]
    x = np.zeros(n)
    if constraint.type == "box":
        fixed = state != 0
        x[state < 0] = constraint.lo[state < 0]
        x[state > 0] = constraint.hi[state > 0]
        free = ~fixed
        rhs = -(r[free] + A[np.ix_(free, fixed)] @ x[fixed])
    else:
        free = state != 0
        rhs = -(r[free] + constraint.alpha * state[free])
    if np.any(free):
        try:
            x[free] = np.linalg.solve(A[np.ix_(free, free)], rhs)
        except np.linalg.LinAlgError:
            return None
    if not np.all(np.isfinite(x)):
        return None
    return x


def _pattern_from(constraint, x, c):
    z = x + c
    if constraint.type == "box":
        return np.where(z < constraint.lo, -1, np.where(z > constraint.hi, 1, 0))
    a = constraint.alpha
    return np.where(z > a, 1, np.where(z < -a, -1, 0))


def regularized_solution(M, q, constraint: Constraint, mu: float, x0, tol: float = 1e-12) -> np.ndarray:
    """Unique solution of ``0 in M x + q + C(x) + mu (x - x0)``.

    The inclusion is piecewise linear, so it is solved exactly once the
    right active pattern is known. A primal-dual active-set sweep finds it
    in a handful of linear solves on typical instances; if the sweep
    cycles, all ``3**n`` patterns are enumerated (``n <= 10``). The result
    is accepted only when its natural residual is below ``tol`` relative to
    the problem scale.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    x0 = as_vector(x0, "x0")
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    A = M + mu * np.eye(n)
    r = np.asarray(q, dtype=float) - mu * x0
    if constraint.type == "none":
        return np.linalg.solve(A, -r)

    scale = max(1.0, float(np.max(np.abs(r))), float(np.max(np.abs(x0))))
    state = np.zeros(n, dtype=int)
    seen = set()
    for _ in range(4 * n + 20):
        x = _solve_pattern(constraint, A, r, state)
        if x is None:
            break
        c = -(A @ x + r)
        if _natural_residual(constraint, A, r, x) <= tol * scale:
            return x
        nxt = _pattern_from(constraint, x, c)
        key = nxt.tobytes()
        if key in seen:
            break
        seen.add(key)
        state = nxt

    if n <= 10:
        best, best_res = None, np.inf
        for combo in itertools.product((0, -1, 1), repeat=n):
            x = _solve_pattern(constraint, A, r, np.array(combo))
            if x is None:
                continue
            res = _natural_residual(constraint, A, r, x)
            if res < best_res:
                best, best_res = x, res
            if res <= tol * scale:
                return x
        if best is not None and best_res <= 1e3 * tol * scale:
            return best
    return _iterative_regularized_solution(M, q, constraint, mu, x0)


def _iterative_regularized_solution(M, q, constraint, mu, x0):
    # large-n fallback: drive the Tseng kernel to a tiny residual
    from .kernels import run_affine, CONVERGED
    from .operators import spectral_norm

    n = M.shape[0]
    lo, hi, ctype, alpha = kernel_constraint(constraint, n)
    L = spectral_norm(M)
    lam = 0.5 / L
    out = run_affine(M, q, ctype, lo, hi, alpha, 0, mu, x0, x0, lam, 0.5, 1e-13, 0.0,
                     10**7, 0, False, False, np.inf)
    if out["status"] != CONVERGED:
        raise UnsupportedProblemError("iterative regularized-solution oracle did not converge")
    return out["y"]


def kernel_constraint(constraint: Constraint, n: int):
    from .kernels import C_BOX, C_L1, C_NONE

    if constraint.type == "box":
        return constraint.lo, constraint.hi, C_BOX, 0.0
    dummy = np.zeros(n)
    if constraint.type == "l1":
        return dummy, dummy, C_L1, float(constraint.alpha)
    return dummy, dummy, C_NONE, 0.0


def _null_space(M, rtol=1e-12):
    u, s, vt = np.linalg.svd(M)
    cutoff = rtol * max(1.0, s[0] if s.size else 0.0)
    return vt[s <= cutoff].T


def _dykstra(x0, proj_a, proj_b, iters=20000, tol=1e-14):
    x = x0.copy()
    p = np.zeros_like(x)
    qv = np.zeros_like(x)
    for _ in range(iters):
        y = proj_a(x + p)
        p = x + p - y
        x_new = proj_b(y + qv)
        qv = y + qv - x_new
        if np.linalg.norm(x_new - x) <= tol * max(1.0, np.linalg.norm(x)):
            return x_new
        x = x_new
    return x


def solution_set_distance(M, q, constraint: Constraint, x_star, x0) -> float:
    """Distance from ``x0`` to the solution set, given one solution ``x_star``.

    Cases handled exactly:

    * no constraint: the solution set is ``x_star + null(M)``;
    * box with ``x_star`` strictly inside: any solution ``x`` has
      ``F(x) = 0`` (monotonicity against the interior point), so the set
      is ``(x_star + null(M))`` intersected with the box;
    * ``M + M^T`` positive definite: the solution is unique.
    """
    M = np.asarray(M, dtype=float)
    x_star = as_vector(x_star, "x_star")
    x0 = as_vector(x0, "x0")
    N = _null_space(M)
    if N.shape[1] == 0:
        unique = constraint.type == "none" or (
            constraint.type == "box"
            and np.all(x_star > constraint.lo)
            and np.all(x_star < constraint.hi)
        )
        if unique or np.linalg.eigvalsh(M + M.T)[0] > 1e-9:
            return float(np.linalg.norm(x0 - x_star))
    if np.linalg.eigvalsh(M + M.T)[0] > 1e-9:
        return float(np.linalg.norm(x0 - x_star))

    def proj_affine(z):
        return x_star + N @ (N.T @ (z - x_star))

    if constraint.type == "none":
        return float(np.linalg.norm(x0 - proj_affine(x0)))
    if constraint.type == "box" and np.all(x_star > constraint.lo) and np.all(x_star < constraint.hi):
        lo, hi = constraint.lo, constraint.hi
        p = _dykstra(x0, proj_affine, lambda z: np.minimum(np.maximum(z, lo), hi))
        return float(np.linalg.norm(x0 - p))
    raise UnsupportedProblemError("cannot compute the solution-set distance for this instance")


# ---------------------------------------------------------------------------
# construction


def affine_problem(
    M,
    q,
    constraint: Optional[Constraint] = None,
    name: str = "affine",
    known_solution=None,
    x0=None,
) -> ProblemInstance:
    """Wrap ``F(x) = M x + q`` and a constraint description into a problem.

    Oracles are attached automatically; the distance oracle only when a
    known solution is supplied.
    """
    constraint = constraint or Constraint("none")
    F = affine_map(M, q)
    n = F.matrix.shape[0]
    if constraint.type == "box":
        lo = np.broadcast_to(np.asarray(constraint.lo, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(constraint.hi, dtype=float), (n,)).copy()
        constraint = Constraint("box", lo, hi)
        C = box_normal_cone(lo, hi)
        omega = box_set(lo, hi)
    elif constraint.type == "l1":
        C = l1_subdifferential(constraint.alpha)
        omega = whole_space()
    else:
        C = zero_operator()
        omega = whole_space()
    Mf, qf = F.matrix, F.offset

    def oracle(mu, x0_):
        return regularized_solution(Mf, qf, constraint, mu, x0_)

    dist = None
    if known_solution is not None:
        known_solution = as_vector(known_solution, "known_solution").copy()
        ks = known_solution

        def dist(x0_):
            return solution_set_distance(Mf, qf, constraint, ks, x0_)

    return ProblemInstance(
        F=F,
        C=C,
        omega=omega,
        name=name,
        known_solution=known_solution,
        solution_oracle=oracle,
        distance_oracle=dist,
        x0=None if x0 is None else as_vector(x0, "x0").copy(),
        constraint=constraint,
    )


def _mixed_matrix(rng, n, skew_fraction):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    S = (Q * rng.uniform(0.1, 1.0, n)) @ Q.T
    S = (S + S.T) / 2
    S /= np.linalg.norm(S, 2)
    K = rng.standard_normal((n, n))
    A = K - K.T
    na = np.linalg.norm(A, 2)
    if na > 0:
        A /= na
    return (1.0 - skew_fraction) * S + skew_fraction * A


def make_affine_box_vi(
    n: int,
    seed: int = 0,
    skew_fraction: float = 0.5,
    box=(-10.0, 10.0),
    n_active: int = 0,
) -> ProblemInstance:
    """Affine monotone VI over a box with a planted solution.

    ``M = (1-s) S/||S|| + s A/||A||`` with ``S`` positive definite
    (eigenvalues drawn in ``[0.1, 1]`` before normalisation) and ``A``
    skew. The solution ``x*`` is drawn in the middle half of the box and
    ``q = -M x*`` so that ``F(x*) = 0``. With ``n_active > 0`` that many
    coordinates of ``x*`` are moved to a bound with a strictly
    complementary multiplier instead (requires ``s < 1`` for uniqueness).
    The default start ``x0`` is uniform in the box.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if not 0 <= skew_fraction <= 1:
        raise InvalidInputError("skew_fraction must lie in [0, 1]")
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (n,)).copy()
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(lo >= hi):
        raise InvalidSetError("box must be finite with lo < hi")
    if n_active and skew_fraction >= 1:
        raise InvalidInputError("active constraints need skew_fraction < 1")
    if not 0 <= n_active <= n:
        raise InvalidInputError("n_active must lie in [0, n]")
    rng = np.random.default_rng(seed)
    M = _mixed_matrix(rng, n, skew_fraction)
    x_star = lo + (hi - lo) * (0.25 + 0.5 * rng.uniform(size=n))
    f_star = np.zeros(n)
    active = rng.choice(n, size=n_active, replace=False) if n_active else np.array([], dtype=int)
    for i in active:
        size = rng.uniform(0.1, 1.0)
        if rng.uniform() < 0.5:
            x_star[i] = lo[i]
            f_star[i] = size
        else:
            x_star[i] = hi[i]
            f_star[i] = -size
    q = f_star - M @ x_star
    x0 = lo + (hi - lo) * rng.uniform(size=n)
    name = f"affine-box-n{n}-s{seed}"
    return affine_problem(M, q, Constraint("box", lo, hi), name, x_star, x0)


def make_skew_rotation(scale: float = 1.0) -> ProblemInstance:
    """``F(x) = scale * [[0, 1], [-1, 0]] x`` on the plane; the only zero is the origin."""
    if not scale > 0:
        raise InvalidInputError("scale must be positive")
    M = scale * np.array([[0.0, 1.0], [-1.0, 0.0]])
    return affine_problem(M, np.zeros(2), Constraint("none"), "skew-rotation", np.zeros(2), [1.0, 0.0])


def make_skew_spectrum(n_blocks: int = 16, omega_min: float = 1e-4, omega_max: float = 1.0) -> ProblemInstance:
    """Block-diagonal rotations with frequencies log-spaced in ``[omega_min, omega_max]``.

    The start has equal weight ``1/sqrt(n_blocks)`` on every block, so
    ``d0 = 1``. Slow blocks keep the unregularized iterates from
    contracting linearly, which is the regime where regularization pays.
    """
    if n_blocks < 1 or not 0 < omega_min <= omega_max:
        raise InvalidInputError("need n_blocks >= 1 and 0 < omega_min <= omega_max")
    freqs = np.geomspace(omega_min, omega_max, n_blocks)
    n = 2 * n_blocks
    M = np.zeros((n, n))
    for i, w in enumerate(freqs):
        M[2 * i, 2 * i + 1] = w
        M[2 * i + 1, 2 * i] = -w
    x0 = np.zeros(n)
    x0[0::2] = 1.0 / math.sqrt(n_blocks)
    return affine_problem(M, np.zeros(n), Constraint("none"), f"skew-spectrum-{n_blocks}", np.zeros(n), x0)


def l1_problem(M, x_star, subgradient, alpha: float, name: str = "l1", x0=None) -> ProblemInstance:
    """Problem with ``C = alpha * d||.||_1`` whose solution is ``x_star``.

    ``subgradient`` must lie in ``alpha * d||.||_1(x_star)``; then
    ``q = -M x_star - subgradient`` gives ``0 in F(x_star) + C(x_star)``.
    """
    M = np.asarray(M, dtype=float)
    x_star = as_vector(x_star, "x_star")
    s = as_vector(subgradient, "subgradient")
    q = -M @ x_star - s
    return affine_problem(M, q, Constraint("l1", alpha=float(alpha)), name, x_star, x0)


def make_l1_regularized(n: int, seed: int = 0, alpha: float = 1.0, skew_fraction: float = 0.5) -> ProblemInstance:
    """Affine monotone ``F`` plus ``alpha ||x||_1`` with a sparse planted solution.

    ``x*`` has ``ceil(n/4)`` nonzeros of magnitude in ``[0.5, 2]``; the
    subgradient is ``alpha * sign(x*_i)`` on the support and uniform in
    ``[-0.9 alpha, 0.9 alpha]`` off it, so the zero pattern is strict.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    if not 0 <= skew_fraction < 1:
        raise InvalidInputError("skew_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    M = _mixed_matrix(rng, n, skew_fraction)
    k = math.ceil(n / 4)
    support = rng.choice(n, size=k, replace=False)
    x_star = np.zeros(n)
    x_star[support] = rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 2.0, size=k)
    s = rng.uniform(-0.9 * alpha, 0.9 * alpha, size=n)
    s[support] = alpha * np.sign(x_star[support])
    x0 = rng.standard_normal(n)
    return l1_problem(M, x_star, s, alpha, f"l1-n{n}-s{seed}", x0)


# ---------------------------------------------------------------------------
# checks


def verify_solution(problem: ProblemInstance, x, tol: float = 1e-8) -> bool:
    """Class-specific exact test of ``0 in F(x) + C(x)`` within ``tol``."""
    x = as_vector(x)
    kind = problem.C.kind
    if kind not in ("zero", "box", "l1"):
        raise UnsupportedProblemError(f"no solution test for C of kind {kind!r}")
    c = -problem.F(x)
    if kind == "zero":
        return bool(np.max(np.abs(c)) <= tol)
    return problem.C.membership_test(c, x, tol)


def regularized_distance(problem: ProblemInstance, mu: float, x0) -> float:
    """``d_mu = ||x*_mu - x0||`` from the problem's oracle."""
    if problem.solution_oracle is None:
        raise UnsupportedProblemError(f"{problem.name} has no regularized-solution oracle")
    x0 = as_vector(x0, "x0")
    return float(np.linalg.norm(problem.solution_oracle(mu, x0) - x0))


def solution_distance(problem: ProblemInstance, x0) -> float:
    """``d0`` from the problem's oracle."""
    if problem.distance_oracle is None:
        raise UnsupportedProblemError(f"{problem.name} has no known solution set")
    return float(problem.distance_oracle(as_vector(x0, "x0")))


# ---------------------------------------------------------------------------
# JSON


def _floats(a):
    return None if a is None else [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def problem_to_dict(problem: ProblemInstance) -> dict:
    if not problem.is_affine:
        raise UnsupportedProblemError("only affine problems can be serialized")
    con = problem.constraint
    return {
        "name": problem.name,
        "n": problem.n,
        "M": _floats(problem.F.matrix),
        "q": _floats(problem.F.offset),
        "constraint": {
            "type": con.type,
            "lo": _floats(con.lo),
            "hi": _floats(con.hi),
            "alpha": con.alpha,
        },
        "known_solution": _floats(problem.known_solution),
        "x0": _floats(problem.x0),
    }


def problem_from_dict(data: dict) -> ProblemInstance:
    try:
        n = int(data["n"])
        M = np.asarray(data["M"], dtype=float).reshape(n, n)
        q = np.asarray(data["q"], dtype=float)
        con = data.get("constraint") or {"type": "none"}
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidInputError(f"malformed problem description: {exc}") from exc
    ctype = con.get("type", "none")
    if ctype == "box":
        constraint = Constraint("box", np.asarray(con["lo"], dtype=float), np.asarray(con["hi"], dtype=float))
    elif ctype == "l1":
        constraint = Constraint("l1", alpha=float(con["alpha"]))
    else:
        constraint = Constraint(ctype)
    return affine_problem(
        M, q, constraint, data.get("name", "problem"), data.get("known_solution"), data.get("x0")
    )


def dump_problem(problem: ProblemInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=1)
        fh.write("\n")


def load_problem(path) -> ProblemInstance:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
