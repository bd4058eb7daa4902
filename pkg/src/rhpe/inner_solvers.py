"""One-step inner engines producing HPE certificates for ``F + C``.

Both engines use the constant stepsize ``lam = sigma / L``:

* ``tseng`` -- forward-backward-forward step; the certificate is exact
  (``eps = 0``) and its extragradient update coincides with Tseng's
  correction step.
* ``korpelevich`` -- two prox steps for ``C = dg``; the certificate lives in
  ``F + d_eps g`` with ``eps`` the convexity gap of ``g`` between the two
  prox points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import (
    BrokenConvexityError,
    CertificateViolationError,
    InvalidInputError,
    UnsupportedProblemError,
)
from .hpe_core import HpeCertificate, hpe_residual, tightest_sigma, within
from .operators import ClosedConvexSet, LipschitzMap, ResolventMap, shifted_resolvent, whole_space

ENGINES = ("tseng", "korpelevich")


class TsengStep(NamedTuple):
    cert: HpeCertificate
    c: np.ndarray
    x_next: np.ndarray


class KorpelevichStep(NamedTuple):
    cert: HpeCertificate
    x_next: np.ndarray
    q: np.ndarray


def _certify(x_prev, y, b, eps, lam, mu, x0, sigma):
    v = b + mu * (y - x0) if mu else b
    cert = HpeCertificate(y=y, v=v, b=b, eps=eps, lam=lam)
    lhs, dist2 = hpe_residual(x_prev, cert)
    if not within(lhs, sigma * sigma * dist2):
        raise CertificateViolationError(
            f"relative-error test failed: {lhs:.3e} > {sigma * sigma * dist2:.3e} (lam={lam:g})"
        )
    return HpeCertificate(y=y, v=v, b=b, eps=eps, lam=lam, sigma_used=tightest_sigma(lhs, dist2))


def tseng_step(
    F: LipschitzMap,
    C: ResolventMap,
    omega: Optional[ClosedConvexSet],
    mu: float,
    x0: np.ndarray,
    x_prev: np.ndarray,
    lam: float,
    sigma: Optional[float] = None,
) -> TsengStep:
    """One modified forward-backward step on ``F + C + mu (. - x0)``.

    Computes ``p = P_omega(x_prev)``, ``y = (I + lam C_mu)^{-1}(x_prev - lam F(p))``
    and ``x_next = y - lam (F(y) - F(p))``. The returned ``c`` lies in ``C(y)``
    by construction and ``b = F(y) + c``.

    Raises
    ------
    CertificateViolationError
        If the relative-error inequality fails, which means ``lam`` is too
        large for the true Lipschitz constant of ``F``.
    """
    if sigma is None:
        sigma = lam * F.lipschitz_constant
    omega = omega or whole_space()
    p = omega.project(x_prev)
    fp = F(p)
    y = shifted_resolvent(C, lam, mu, x0, x_prev - lam * fp)
    fy = F(y)
    c = (x_prev - y) / lam - fp - mu * (y - x0)
    b = fy + c
    cert = _certify(x_prev, y, b, 0.0, lam, mu, x0, sigma)
    return TsengStep(cert, c, y - lam * (fy - fp))


def korpelevich_step(
    F: LipschitzMap,
    g: ResolventMap,
    mu: float,
    x0: np.ndarray,
    x_prev: np.ndarray,
    lam: float,
    sigma: Optional[float] = None,
) -> KorpelevichStep:
    """One extragradient step with prox of ``g + (mu/2)||. - x0||^2``.

    ``y`` is the prox point of the forward step at ``x_prev`` and ``x_next``
    the prox point of the forward step using ``F(y)``. Prox optimality at
    ``x_next`` gives ``q in dg(x_next)``; the gap
    ``eps = g(y) - g(x_next) - <q, y - x_next>`` then makes
    ``q in d_eps g(y)`` and the certificate is ``b = F(y) + q``.
    """
    if g.value_function is None:
        raise UnsupportedProblemError("korpelevich_step needs the value function of g")
    if sigma is None:
        sigma = lam * F.lipschitz_constant
    y = shifted_resolvent(g, lam, mu, x0, x_prev - lam * F(x_prev))
    fy = F(y)
    w = x_prev - lam * fy
    x_next = shifted_resolvent(g, lam, mu, x0, w)
    q = (w - x_next) / lam - mu * (x_next - x0)
    gy = float(g.value_function(y))
    gx = float(g.value_function(x_next))
    ip = float(q @ (y - x_next))
    if not (np.isfinite(gy) and np.isfinite(gx)):
        raise UnsupportedProblemError("g is infinite at a prox point")
    eps = gy - gx - ip
    if eps < -1e-12 * max(1.0, abs(gy) + abs(gx) + abs(ip)):
        raise BrokenConvexityError(f"negative convexity gap {eps:.3e}")
    cert = _certify(x_prev, y, fy + q, max(eps, 0.0), lam, mu, x0, sigma)
    return KorpelevichStep(cert, x_next, q)


@dataclass(frozen=True)
class InnerEngine:
    """Stepping rule for the inner problem of the static regularized method.

    ``lam`` is the nominal stepsize ``sigma / L``. The Korpelevich engine
    halves it (at most ``max_halvings`` times) when a step fails its
    runtime check; the stepsize actually used is stored on the certificate.
    """

    kind: str
    lam: float
    sigma: float
    max_halvings: int = 30

    def __post_init__(self):
        if self.kind not in ENGINES:
            raise InvalidInputError(f"unknown engine {self.kind!r}; expected one of {ENGINES}")
        if not self.lam > 0 or not 0 < self.sigma < 1:
            raise InvalidInputError("engine needs lam > 0 and sigma in (0, 1)")

    def step(self, problem, mu: float, x0: np.ndarray, x_prev: np.ndarray):
        if self.kind == "tseng":
            return tseng_step(problem.F, problem.C, problem.omega, mu, x0, x_prev, self.lam, self.sigma)
        lam = self.lam
        for attempt in range(self.max_halvings + 1):
            try:
                return korpelevich_step(problem.F, problem.C, mu, x0, x_prev, lam, self.sigma)
            except BrokenConvexityError:
                raise
            except CertificateViolationError:
                if attempt == self.max_halvings:
                    raise
                lam *= 0.5


def make_engine(kind: str, problem, sigma: float, max_halvings: int = 30) -> InnerEngine:
    """Engine of the given kind for ``problem`` with ``lam = sigma / L``."""
    if not 0 < sigma < 1:
        raise InvalidInputError("inner engines need sigma in (0, 1)")
    L = problem.F.lipschitz_constant
    if not L > 0:
        raise UnsupportedProblemError("F must have a positive Lipschitz constant")
    if kind == "korpelevich" and problem.C.value_function is None:
        raise UnsupportedProblemError("the Korpelevich engine needs C = dg with g evaluable")
    return InnerEngine(kind=kind, lam=sigma / L, sigma=sigma, max_halvings=max_halvings)
