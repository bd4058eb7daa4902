"""The HPE step contract and its linear-rate machinery.

A step of the hybrid proximal extragradient scheme produces a triple
``(y, v, eps)`` and a stepsize ``lam`` with

    ||lam*v + y - x_prev||^2 + 2*lam*eps <= sigma^2 ||y - x_prev||^2

and then moves to ``x_prev - lam*v``. When the operator carries a
``mu``-strongly monotone part, the iterates contract at a rate governed by
``theta`` below; the functions here evaluate those rates so that solver
traces can be checked against them at run time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DegenerateRegularizationError, InvalidInputError
from .operators import as_vector

#: relative slack used by every inequality check
REL_SLACK = 1e-10

TRACE_COLUMNS = ("k", "lambda", "lhs", "rhs", "v_norm", "b_norm", "eps", "y_dist_x0", "gamma_k")


def within(lhs: float, rhs: float, slack: float = REL_SLACK) -> bool:
    """``lhs <= rhs`` up to ``slack * max(1, |rhs|)``."""
    return lhs <= rhs + slack * max(1.0, abs(rhs))


@dataclass(frozen=True)
class HpeCertificate:
    """Output of one inexact proximal step.

    Attributes
    ----------
    y : ndarray
        Candidate point.
    v : ndarray
        Full residual, an element of ``A(y) + B^[eps](y)``.
    b : ndarray
        The part of ``v`` belonging to ``B^[eps](y)``. Equals ``v`` when
        there is no regularization.
    eps : float
        Enlargement parameter.
    lam : float
        Stepsize that was actually used.
    sigma_used : float
        Smallest relative error for which the step passes, always at most
        the configured ``sigma``.
    """

    y: np.ndarray
    v: np.ndarray
    b: np.ndarray
    eps: float
    lam: float
    sigma_used: float = 0.0


def hpe_residual(x_prev, cert: HpeCertificate) -> Tuple[float, float]:
    """Return ``(||lam*v + y - x_prev||^2 + 2*lam*eps, ||y - x_prev||^2)``."""
    r = cert.lam * cert.v + cert.y - x_prev
    d = cert.y - x_prev
    return float(r @ r) + 2.0 * cert.lam * cert.eps, float(d @ d)


def verify_hpe_condition(x_prev, cert: HpeCertificate, sigma: float) -> Tuple[bool, float, float]:
    """Check the relative-error inequality for ``cert`` produced from ``x_prev``.

    Returns ``(ok, lhs, rhs)`` where ``rhs = sigma**2 * ||y - x_prev||**2``.
    """
    x_prev = as_vector(x_prev, "x_prev")
    for name, arr in (("y", cert.y), ("v", cert.v)):
        as_vector(arr, name)
        if arr.shape != x_prev.shape:
            raise InvalidInputError(f"{name} has shape {arr.shape}, expected {x_prev.shape}")
    if not cert.lam > 0 or not cert.eps >= 0 or not math.isfinite(cert.eps):
        raise InvalidInputError("certificate needs lam > 0 and finite eps >= 0")
    if not 0 <= sigma < 1:
        raise InvalidInputError("sigma must lie in [0, 1)")
    lhs, dist2 = hpe_residual(x_prev, cert)
    rhs = sigma * sigma * dist2
    return within(lhs, rhs), lhs, rhs


def tightest_sigma(lhs: float, dist2: float) -> float:
    """Smallest ``sigma_k`` for which a step with the given residuals passes."""
    if dist2 == 0.0:
        return 0.0
    return math.sqrt(lhs / dist2)


def extragradient_update(x_prev, lam: float, v) -> np.ndarray:
    """``x_prev - lam * v``."""
    if not lam > 0:
        raise InvalidInputError("lam must be positive")
    return np.asarray(x_prev, dtype=float) - lam * np.asarray(v, dtype=float)


def lemma_sandwich(x_prev, cert: HpeCertificate, sigma: float) -> bool:
    """``(1-sigma)||y - x_prev|| <= ||lam v|| <= (1+sigma)||y - x_prev||`` within slack."""
    d = float(np.linalg.norm(cert.y - x_prev))
    lv = cert.lam * float(np.linalg.norm(cert.v))
    return within((1.0 - sigma) * d, lv) and within(lv, (1.0 + sigma) * d)


# ---------------------------------------------------------------------------
# rates


def _check_sigma(sigma: float) -> None:
    if not 0 <= sigma < 1:
        raise InvalidInputError("sigma must lie in [0, 1)")


def theta(lam_low: float, mu: float, sigma: float) -> float:
    """Contraction constant ``(1/(2 lam mu) + 1/(1 - sigma^2))^{-1}``.

    ``lam_low`` may be a lower bound on the stepsizes (headline rate) or the
    stepsize of a single iteration (per-step rate); the formula is the same.
    """
    if mu == 0:
        raise DegenerateRegularizationError("theta is zero without regularization (mu = 0)")
    if not lam_low > 0 or not mu > 0:
        raise InvalidInputError("theta needs lam_low > 0 and mu > 0")
    _check_sigma(sigma)
    return 1.0 / (1.0 / (2.0 * lam_low * mu) + 1.0 / (1.0 - sigma * sigma))


@dataclass(frozen=True)
class RateConstants:
    theta: float
    lam_low: float
    mu: float
    sigma: float

    @classmethod
    def from_params(cls, lam_low: float, mu: float, sigma: float) -> "RateConstants":
        return cls(theta(lam_low, mu, sigma), lam_low, mu, sigma)


def pointwise_rate_bounds(
    k: int, d0: float, lam_low: float, mu: float, sigma: float
) -> Tuple[float, float, float]:
    """Bounds on ``||v_k||``, ``eps_k`` and ``||x* - x_k|| / ||x* - x_0||`` times ``d0``.

    Returns
    -------
    v_bound, eps_bound, x_bound : float
        ``sqrt((1+s)/(1-s)) (1-theta)^((k-1)/2) d0 / lam_low``,
        ``s^2/(2(1-s^2)) (1-theta)^(k-1) d0^2 / lam_low`` and
        ``(1-theta)^(k/2) d0``.
    """
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    th = theta(lam_low, mu, sigma)
    s2 = sigma * sigma
    decay = 1.0 - th
    v_bound = math.sqrt((1.0 + sigma) / (1.0 - sigma)) * decay ** ((k - 1) / 2) * d0 / lam_low
    eps_bound = s2 / (2.0 * (1.0 - s2)) * decay ** (k - 1) * d0 * d0 / lam_low
    x_bound = decay ** (k / 2) * d0
    return v_bound, eps_bound, x_bound


def gamma_sequence(theta_values: Sequence[float]) -> np.ndarray:
    """``Gamma_k = sqrt(prod_{j<=k} (1 - theta_j))`` for ``k = 1..len(theta_values)``."""
    th = np.asarray(theta_values, dtype=float).reshape(-1)
    if np.any(~np.isfinite(th)) or np.any(th <= 0) or np.any(th >= 1):
        raise InvalidInputError("every theta_j must lie in (0, 1)")
    return np.sqrt(np.cumprod(1.0 - th))


def gamma_from_stepsizes(lams: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    """``Gamma_k`` of a run with stepsizes ``lams``; all ones when ``mu == 0``."""
    lams = np.asarray(lams, dtype=float)
    if mu == 0 or lams.size == 0:
        return np.ones_like(lams)
    th = 1.0 / (1.0 / (2.0 * lams * mu) + 1.0 / (1.0 - sigma * sigma))
    return np.sqrt(np.cumprod(1.0 - th))


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class IterationRecord:
    k: int
    lam: float
    lhs: float
    rhs: float
    v_norm: float
    b_norm: float
    eps: float
    y_dist_x0: float
    gamma: float
    x_prev: Optional[np.ndarray] = None
    x_next: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None


class Trace:
    """Per-iteration diagnostics stored column-wise.

    Points (``x_prev``, ``x_next``, ``y``) are kept only when the solver was
    asked for them; they are ``None`` otherwise. ``x_next`` is always
    ``x_prev - lam * v``, including at the final iteration where the solver
    stops instead of moving there.
    """

    _scalar = ("lam", "lhs", "rhs", "v_norm", "b_norm", "eps", "y_dist_x0", "gamma")

    def __init__(self, columns: Optional[dict] = None, points: Optional[dict] = None):
        columns = columns or {}
        self.columns = {
            name: np.asarray(columns.get(name, ()), dtype=float) for name in self._scalar
        }
        size = {len(c) for c in self.columns.values()}
        if len(size) > 1:
            raise InvalidInputError("trace columns have different lengths")
        self.points = points

    def __len__(self) -> int:
        return len(self.columns["lam"])

    def __getattr__(self, name):
        cols = self.__dict__.get("columns", {})
        if name in cols:
            return cols[name]
        raise AttributeError(name)

    def _record(self, i: int) -> IterationRecord:
        extra = {}
        if self.points is not None:
            extra = {key: self.points[key][i] for key in ("x_prev", "x_next", "y")}
        return IterationRecord(i + 1, *(float(self.columns[c][i]) for c in self._scalar), **extra)

    def __iter__(self) -> Iterator[IterationRecord]:
        for i in range(len(self)):
            yield self._record(i)

    def __getitem__(self, i: int) -> IterationRecord:
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        return self._record(i)

    @classmethod
    def concat(cls, traces: List["Trace"]) -> "Trace":
        traces = [t for t in traces if len(t)]
        if not traces:
            return cls()
        cols = {c: np.concatenate([t.columns[c] for t in traces]) for c in cls._scalar}
        points = None
        if all(t.points is not None for t in traces):
            points = {
                key: np.concatenate([t.points[key] for t in traces])
                for key in ("x_prev", "x_next", "y")
            }
        return cls(cols, points)

    def all_pass(self) -> bool:
        lhs, rhs = self.columns["lhs"], self.columns["rhs"]
        return bool(np.all(lhs <= rhs + REL_SLACK * np.maximum(1.0, np.abs(rhs))))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            c = self.columns
            for i in range(len(self)):
                w.writerow(
                    [i + 1]
                    + [repr(float(c[name][i])) for name in self._scalar]
                )
