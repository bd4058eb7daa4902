r"""Operators for structured monotone inclusions :math:`0 \in F(x) + C(x)`.

Three small value types carry everything the solvers need:

``ClosedConvexSet``
    projection and membership of the set :math:`\Omega` on which ``F`` is
    Lipschitz.
``LipschitzMap``
    the single-valued monotone part ``F`` together with its constant ``L``.
``ResolventMap``
    the set-valued part ``C`` accessed only through
    :math:`(I + \lambda C)^{-1}` and, when ``C`` is a subdifferential, the
    underlying convex function.

All of them are frozen and safe to share between concurrent solves.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InvalidInputError, InvalidSetError, NotMonotoneError

PSD_TOL = 1e-9


def as_vector(x, name: str = "x") -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array (a copy is made only if needed)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} must have at least one coordinate")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite coordinates")
    return arr


def _same_dim(*vecs: np.ndarray) -> None:
    n = vecs[0].shape[0]
    for v in vecs[1:]:
        if v.shape[0] != n:
            raise InvalidInputError(f"dimension mismatch: {n} vs {v.shape[0]}")


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True)
class ClosedConvexSet:
    """A closed convex set given by its projection and a membership test.

    ``kind`` is ``"whole"`` for the full space, ``"box"`` for a (possibly
    unbounded) box described by ``lo``/``hi``, or ``"custom"``.
    """

    project: Callable[[np.ndarray], np.ndarray]
    contains: Callable[[np.ndarray, float], bool]
    kind: str = "custom"
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None


def _check_box(lo, hi) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    if lo.shape != hi.shape:
        raise InvalidSetError("box bounds have different lengths")
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
        raise InvalidSetError("box bounds contain NaN")
    if np.any(lo > hi):
        raise InvalidSetError("box has lo_i > hi_i")
    return lo, hi


def project_box(lo, hi, x) -> np.ndarray:
    """Clamp ``x`` componentwise into ``[lo, hi]``."""
    lo, hi = _check_box(lo, hi)
    x = as_vector(x)
    _same_dim(lo, x)
    return np.minimum(np.maximum(x, lo), hi)


def whole_space() -> ClosedConvexSet:
    return ClosedConvexSet(
        project=lambda x: np.array(x, dtype=float),
        contains=lambda x, tol=0.0: bool(np.all(np.isfinite(x))),
        kind="whole",
    )


def box_set(lo, hi) -> ClosedConvexSet:
    lo, hi = _check_box(lo, hi)

    def project(x):
        return np.minimum(np.maximum(x, lo), hi)

    def contains(x, tol=0.0):
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    return ClosedConvexSet(project=project, contains=contains, kind="box", lo=lo, hi=hi)


# ---------------------------------------------------------------------------
# single-valued part


@dataclass(frozen=True)
class LipschitzMap:
    """Monotone map ``F`` that is ``lipschitz_constant``-Lipschitz on ``domain``.

    ``matrix``/``offset`` are set for affine maps; the compiled kernels use
    them, everything else goes through ``evaluate``.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    lipschitz_constant: float
    domain: ClosedConvexSet = field(default_factory=whole_space)
    matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)


def spectral_norm(M, max_iter: int = 200, rtol: float = 1e-12, seed: int = 0) -> float:
    """Largest singular value of ``M`` by power iteration on ``M^T M``.

    Iterates until the relative change of the estimate drops below ``rtol``
    or ``max_iter`` sweeps are done. Power iteration only approaches the
    norm from below, so when it stalls (clustered top singular values) the
    exact value from an SVD is returned instead.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[1]
    if not np.any(M):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        new = np.sqrt(nw)
        v = w / nw
        if est > 0.0 and abs(new - est) <= rtol * new:
            return float(new)
        est = new
    return float(np.linalg.norm(M, 2))


def affine_map(M, q, tol: float = PSD_TOL) -> LipschitzMap:
    """Build ``F(x) = M x + q`` after checking ``M + M^T`` is positive semidefinite.

    Raises
    ------
    NotMonotoneError
        If the smallest eigenvalue of ``M + M^T`` is below ``-tol``.
    """
    M = np.array(M, dtype=float, ndmin=2)
    q = as_vector(q, "q").copy()
    if M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"M must be square, got {M.shape}")
    if M.shape[0] != q.shape[0]:
        raise InvalidInputError("M and q have different dimensions")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("M has non-finite entries")
    lam_min = float(np.linalg.eigvalsh(M + M.T)[0])
    if lam_min < -tol:
        raise NotMonotoneError(f"M + M^T has eigenvalue {lam_min:.3e} < 0")
    M.setflags(write=False)
    q.setflags(write=False)
    L = spectral_norm(M)
    return LipschitzMap(
        evaluate=lambda x: M @ x + q,
        lipschitz_constant=L,
        matrix=M,
        offset=q,
    )


# ---------------------------------------------------------------------------
# set-valued part


@dataclass(frozen=True)
class ResolventMap:
    """Maximal monotone ``C`` accessed through ``resolvent(lam, x) = (I + lam C)^{-1} x``.

    ``value_function`` is the convex ``g`` when ``C`` is its subdifferential;
    ``membership_test(c, y, tol)`` decides ``c in C(y)`` for the supported
    classes. ``kind`` is one of ``"zero"``, ``"box"``, ``"l1"`` or
    ``"custom"``.
    """

    resolvent: Callable[[float, np.ndarray], np.ndarray]
    value_function: Optional[Callable[[np.ndarray], float]] = None
    membership_test: Optional[Callable[[np.ndarray, np.ndarray, float], bool]] = None
    kind: str = "custom"
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    alpha: Optional[float] = None


def zero_operator() -> ResolventMap:
    return ResolventMap(
        resolvent=lambda lam, x: np.array(x, dtype=float),
        value_function=lambda x: 0.0,
        membership_test=lambda c, y, tol=0.0: bool(np.all(np.abs(c) <= tol)),
        kind="zero",
    )


def box_normal_cone(lo, hi, feas_tol: float = 1e-10) -> ResolventMap:
    """Normal cone of a box; its resolvent is the projection for every ``lam``.

    The value function is the indicator of the box, with feasibility
    decided at ``feas_tol``.
    """
    lo, hi = _check_box(lo, hi)

    def resolvent(lam, x):
        return np.minimum(np.maximum(x, lo), hi)

    def indicator(x):
        if np.all(x >= lo - feas_tol) and np.all(x <= hi + feas_tol):
            return 0.0
        return np.inf

    def member(c, y, tol=0.0):
        if np.any(y < lo - tol) or np.any(y > hi + tol):
            return False
        at_lo = np.abs(y - lo) <= tol
        at_hi = np.abs(y - hi) <= tol
        interior = ~(at_lo | at_hi)
        ok = np.abs(c[interior]) <= tol
        # at a lower bound the normal cone is (-inf, 0], at an upper bound [0, inf)
        ok_lo = c[at_lo & ~at_hi] <= tol
        ok_hi = c[at_hi & ~at_lo] >= -tol
        return bool(np.all(ok) and np.all(ok_lo) and np.all(ok_hi))

    return ResolventMap(
        resolvent=resolvent,
        value_function=indicator,
        membership_test=member,
        kind="box",
        lo=lo,
        hi=hi,
    )


def soft_threshold(alpha: float, lam: float, x) -> np.ndarray:
    """Prox of ``lam * alpha * ||.||_1``: shrink each coordinate toward 0 by ``lam*alpha``."""
    if not alpha > 0 or not lam > 0:
        raise InvalidInputError("soft_threshold needs alpha > 0 and lam > 0")
    x = as_vector(x)
    return np.sign(x) * np.maximum(np.abs(x) - lam * alpha, 0.0)


def l1_subdifferential(alpha: float) -> ResolventMap:
    """Subdifferential of ``alpha * ||.||_1`` with soft thresholding as resolvent."""
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    alpha = float(alpha)

    def resolvent(lam, x):
        return np.sign(x) * np.maximum(np.abs(x) - lam * alpha, 0.0)

    def member(c, y, tol=0.0):
        nz = np.abs(y) > tol
        on_support = np.abs(c[nz] - alpha * np.sign(y[nz])) <= tol
        off_support = np.abs(c[~nz]) <= alpha + tol
        return bool(np.all(on_support) and np.all(off_support))

    return ResolventMap(
        resolvent=resolvent,
        value_function=lambda x: alpha * float(np.sum(np.abs(x))),
        membership_test=member,
        kind="l1",
        alpha=alpha,
    )


def shifted_resolvent(C: ResolventMap, lam: float, mu: float, x0, x) -> np.ndarray:
    r"""Resolvent of ``C + mu (. - x0)`` at ``x`` with stepsize ``lam``.

    Uses the identity

    .. math:: (I + \lambda C_\mu)^{-1} x
              = \Big(I + \tfrac{\lambda}{1+\lambda\mu} C\Big)^{-1}
                \Big(\tfrac{x + \lambda\mu x_0}{1+\lambda\mu}\Big)

    so only the resolvent of ``C`` itself is needed. With ``mu == 0`` this
    is exactly ``C.resolvent(lam, x)``.
    """
    if not lam > 0:
        raise InvalidInputError("lam must be positive")
    if not mu >= 0:
        raise InvalidInputError("mu must be nonnegative")
    x = as_vector(x)
    if mu == 0:
        return C.resolvent(lam, x)
    x0 = as_vector(x0, "x0")
    _same_dim(x, x0)
    s = 1.0 + lam * mu
    return C.resolvent(lam / s, (x + lam * mu * x0) / s)


# ---------------------------------------------------------------------------
# enlargement diagnostics


class EmptySampleWarning(UserWarning):
    pass


def sample_enlargement_violation(
    pairs: Iterable[Tuple[Sequence[float], Sequence[float]]], y, v, eps: float
) -> float:
    """Largest ``-<v - v', y - y'> - eps`` over sampled graph points ``(y', v')``.

    A value ``<= 0`` means no sample contradicts ``v in B^[eps](y)``. This is
    a falsification test: a nonpositive score does not prove membership.
    """
    y = as_vector(y, "y")
    v = as_vector(v, "v")
    pairs = list(pairs)
    if not pairs:
        warnings.warn("no graph samples given; violation score is 0", EmptySampleWarning)
        return 0.0
    worst = -np.inf
    for yp, vp in pairs:
        yp = np.asarray(yp, dtype=float)
        vp = np.asarray(vp, dtype=float)
        worst = max(worst, -float(np.dot(v - vp, y - yp)) - eps)
    return float(worst)
