"""Pure numpy version of the affine inner loop.

Mirrors ``_affine.pyx`` statement for statement; used when the compiled
module is missing or ``RHPE_PURE_PYTHON`` is set.
"""
import math

import numpy as np

from .codes import (
    BROKEN_CONVEXITY,
    C_BOX,
    C_L1,
    CERT_VIOLATION,
    CONVERGED,
    ENGINE_TSENG,
    INNER_CAP,
    NUMERIC_FAILURE,
    REL_SLACK,
)


def _resolvent(ctype, lo, hi, alpha, lam, w):
    if ctype == C_BOX:
        return np.minimum(np.maximum(w, lo), hi)
    if ctype == C_L1:
        return np.sign(w) * np.maximum(np.abs(w) - lam * alpha, 0.0)
    return w


def _shifted(ctype, lo, hi, alpha, lam, mu, x0, z):
    if mu == 0.0:
        return _resolvent(ctype, lo, hi, alpha, lam, z)
    s = 1.0 + lam * mu
    return _resolvent(ctype, lo, hi, alpha, lam / s, (z + lam * mu * x0) / s)


def _gval(ctype, alpha, x):
    if ctype == C_L1:
        return alpha * float(np.sum(np.abs(x)))
    return 0.0


def run_affine(M, q, ctype, lo, hi, alpha, engine, mu, x0, xstart, lam, sigma, rho,
               eps_tol, max_iter, max_halvings=30, record=True, keep_points=False,
               div_limit=np.inf):
    """Run the regularized HPE loop for ``F(x) = M x + q``.

    Stops at the first iteration with ``||b + mu (y - x0)|| <= rho`` and
    ``eps <= eps_tol``; otherwise moves to ``x - lam_k (b + mu (y - x0))``.
    Returns a dict with the final certificate pieces, a status code and,
    when ``record`` is set, per-iteration columns.
    """
    M = np.ascontiguousarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    x = np.array(xstart, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    sig2 = sigma * sigma

    cols = {name: [] for name in ("lam", "lhs", "rhs", "v_norm", "b_norm", "eps", "y_dist_x0")}
    pts = {"x_prev": [], "x_next": [], "y": []}
    status = INNER_CAP
    k = 0
    lam_min = lam
    y = x.copy()
    b = np.zeros_like(x)
    v = np.zeros_like(x)
    eps = 0.0
    sig_used = 0.0

    while k < max_iter:
        k += 1
        lam_k = lam
        for attempt in range(max_halvings + 1):
            if engine == ENGINE_TSENG:
                p = np.minimum(np.maximum(x, lo), hi) if ctype == C_BOX else x
                fp = M @ p + q
                y = _shifted(ctype, lo, hi, alpha, lam_k, mu, x0, x - lam_k * fp)
                fy = M @ y + q
                c = (x - y) / lam_k - fp - mu * (y - x0)
                b = fy + c
                eps = 0.0
            else:
                fx = M @ x + q
                y = _shifted(ctype, lo, hi, alpha, lam_k, mu, x0, x - lam_k * fx)
                fy = M @ y + q
                w = x - lam_k * fy
                xk = _shifted(ctype, lo, hi, alpha, lam_k, mu, x0, w)
                qg = (w - xk) / lam_k - mu * (xk - x0)
                gy = _gval(ctype, alpha, y)
                gx = _gval(ctype, alpha, xk)
                ip = float(qg @ (y - xk))
                eps = gy - gx - ip
                if eps < -1e-12 * max(1.0, abs(gy) + abs(gx) + abs(ip)):
                    status = BROKEN_CONVEXITY
                    break
                eps = max(eps, 0.0)
                b = fy + qg
            v = b + mu * (y - x0)
            r = lam_k * v + y - x
            d = y - x
            dist2 = float(d @ d)
            lhs = float(r @ r) + 2.0 * lam_k * eps
            rhs = sig2 * dist2
            if lhs <= rhs + REL_SLACK * max(1.0, rhs):
                break
            if engine == ENGINE_TSENG or attempt == max_halvings:
                status = CERT_VIOLATION
                break
            lam_k *= 0.5
        if status in (CERT_VIOLATION, BROKEN_CONVEXITY):
            break
        lam_min = min(lam_min, lam_k)
        sig_used = max(sig_used, math.sqrt(lhs / dist2) if dist2 > 0 else 0.0)
        vn = float(np.sqrt(v @ v))
        x_next = x - lam_k * v
        if record:
            cols["lam"].append(lam_k)
            cols["lhs"].append(lhs)
            cols["rhs"].append(rhs)
            cols["v_norm"].append(vn)
            cols["b_norm"].append(float(np.sqrt(b @ b)))
            cols["eps"].append(eps)
            cols["y_dist_x0"].append(float(np.linalg.norm(y - x0)))
            if keep_points:
                pts["x_prev"].append(x.copy())
                pts["x_next"].append(x_next)
                pts["y"].append(y.copy())
        if vn <= rho and eps <= eps_tol:
            status = CONVERGED
            break
        x = x_next
        xn = float(np.sqrt(x @ x))
        if not xn <= div_limit:
            status = NUMERIC_FAILURE
            break

    out = {
        "status": status,
        "k": k,
        "y": y,
        "b": b,
        "v": v,
        "eps": eps,
        "x": x,
        "lam": lam_k if k else lam,
        "lam_min": lam_min,
        "sigma_used": sig_used,
        "columns": None,
        "points": None,
    }
    if record:
        out["columns"] = {name: np.asarray(val, dtype=float) for name, val in cols.items()}
        if keep_points:
            n = x.shape[0]
            out["points"] = {
                key: np.asarray(val, dtype=float).reshape(-1, n) for key, val in pts.items()
            }
    return out
