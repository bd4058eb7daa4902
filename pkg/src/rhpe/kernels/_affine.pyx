# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled affine inner loop; see ``_affine_py.run_affine`` for the contract."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite

cnp.import_array()

cdef enum:
    C_BOX = 1
    C_L1 = 2
    ENGINE_TSENG = 0
    CONVERGED = 0
    INNER_CAP = 1
    NUMERIC_FAILURE = 2
    CERT_VIOLATION = 3
    BROKEN_CONVEXITY = 4
    NCOLS = 7

cdef double REL_SLACK = 1e-10


cdef inline void matvec(const double[:, ::1] M, const double[::1] q,
                        const double[::1] x, double[::1] out, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += M[i, j] * x[j]
        out[i] = s + q[i]


cdef inline void resolvent(int ctype, const double[::1] lo, const double[::1] hi,
                           double alpha, double lam, double[::1] w, Py_ssize_t n) nogil:
    # in place on w
    cdef Py_ssize_t i
    cdef double t, a
    if ctype == C_BOX:
        for i in range(n):
            a = w[i]
            if a < lo[i]:
                a = lo[i]
            if a > hi[i]:
                a = hi[i]
            w[i] = a
    elif ctype == C_L1:
        t = lam * alpha
        for i in range(n):
            a = w[i]
            if a > t:
                w[i] = a - t
            elif a < -t:
                w[i] = a + t
            else:
                w[i] = 0.0


cdef inline void shifted(int ctype, const double[::1] lo, const double[::1] hi, double alpha,
                         double lam, double mu, const double[::1] x0, double[::1] w,
                         Py_ssize_t n) nogil:
    # (I + lam C_mu)^{-1} applied in place to w
    cdef Py_ssize_t i
    cdef double s
    if mu == 0.0:
        resolvent(ctype, lo, hi, alpha, lam, w, n)
        return
    s = 1.0 + lam * mu
    for i in range(n):
        w[i] = (w[i] + lam * mu * x0[i]) / s
    resolvent(ctype, lo, hi, alpha, lam / s, w, n)


cdef inline double gval(int ctype, double alpha, const double[::1] x, Py_ssize_t n) nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    if ctype != C_L1:
        return 0.0
    for i in range(n):
        s += fabs(x[i])
    return alpha * s


def run_affine(M, q, int ctype, lo, hi, double alpha, int engine, double mu, x0, xstart,
               double lam, double sigma, double rho, double eps_tol, long max_iter,
               int max_halvings=30, bint record=True, bint keep_points=False,
               double div_limit=np.inf):
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef const double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t n = qv.shape[0]

    x_arr = np.array(xstart, dtype=np.float64)
    y_arr = x_arr.copy()
    b_arr = np.zeros(n)
    v_arr = np.zeros(n)
    cdef double[::1] x = x_arr
    cdef double[::1] y = y_arr
    cdef double[::1] b = b_arr
    cdef double[::1] v = v_arr
    cdef double[::1] p = np.empty(n)
    cdef double[::1] fp = np.empty(n)
    cdef double[::1] fy = np.empty(n)
    cdef double[::1] w = np.empty(n)
    cdef double[::1] xk = np.empty(n)
    cdef double[::1] qg = np.empty(n)

    cdef Py_ssize_t cap = 0
    if record:
        cap = max_iter if max_iter < 1024 else 1024
        if cap < 1:
            cap = 1
    cols_arr = np.empty((NCOLS, cap))
    cdef double[:, ::1] cols = cols_arr
    pts_arr = np.empty((3, cap if keep_points else 0, n))
    cdef double[:, :, ::1] pts = pts_arr

    cdef int status = INNER_CAP
    cdef long k = 0
    cdef int attempt
    cdef Py_ssize_t i
    cdef double lam_k = lam, lam_min = lam, eps = 0.0, sig_used = 0.0
    cdef double sig2 = sigma * sigma
    cdef double lhs = 0.0, rhs = 0.0, dist2 = 0.0, rr, di, ip, gy, gx, vn, bn, yd, xn, t

    while k < max_iter:
        k += 1
        lam_k = lam
        attempt = 0
        while True:
            if engine == ENGINE_TSENG:
                for i in range(n):
                    t = x[i]
                    if ctype == C_BOX:
                        if t < lov[i]:
                            t = lov[i]
                        if t > hiv[i]:
                            t = hiv[i]
                    p[i] = t
                matvec(Mv, qv, p, fp, n)
                for i in range(n):
                    y[i] = x[i] - lam_k * fp[i]
                shifted(ctype, lov, hiv, alpha, lam_k, mu, x0v, y, n)
                matvec(Mv, qv, y, fy, n)
                for i in range(n):
                    b[i] = fy[i] + ((x[i] - y[i]) / lam_k - fp[i] - mu * (y[i] - x0v[i]))
                eps = 0.0
            else:
                matvec(Mv, qv, x, fp, n)
                for i in range(n):
                    y[i] = x[i] - lam_k * fp[i]
                shifted(ctype, lov, hiv, alpha, lam_k, mu, x0v, y, n)
                matvec(Mv, qv, y, fy, n)
                for i in range(n):
                    w[i] = x[i] - lam_k * fy[i]
                    xk[i] = w[i]
                shifted(ctype, lov, hiv, alpha, lam_k, mu, x0v, xk, n)
                ip = 0.0
                for i in range(n):
                    qg[i] = (w[i] - xk[i]) / lam_k - mu * (xk[i] - x0v[i])
                    ip += qg[i] * (y[i] - xk[i])
                gy = gval(ctype, alpha, y, n)
                gx = gval(ctype, alpha, xk, n)
                eps = gy - gx - ip
                if eps < -1e-12 * max(1.0, fabs(gy) + fabs(gx) + fabs(ip)):
                    status = BROKEN_CONVEXITY
                    break
                if eps < 0.0:
                    eps = 0.0
                for i in range(n):
                    b[i] = fy[i] + qg[i]
            rr = 0.0
            dist2 = 0.0
            for i in range(n):
                v[i] = b[i] + mu * (y[i] - x0v[i])
                t = lam_k * v[i] + y[i] - x[i]
                rr += t * t
                di = y[i] - x[i]
                dist2 += di * di
            lhs = rr + 2.0 * lam_k * eps
            rhs = sig2 * dist2
            if lhs <= rhs + REL_SLACK * max(1.0, rhs):
                break
            if engine == ENGINE_TSENG or attempt == max_halvings:
                status = CERT_VIOLATION
                break
            lam_k *= 0.5
            attempt += 1
        if status == CERT_VIOLATION or status == BROKEN_CONVEXITY:
            break
        if lam_k < lam_min:
            lam_min = lam_k
        if dist2 > 0.0:
            t = sqrt(lhs / dist2)
            if t > sig_used:
                sig_used = t
        vn = 0.0
        bn = 0.0
        yd = 0.0
        for i in range(n):
            vn += v[i] * v[i]
            bn += b[i] * b[i]
            yd += (y[i] - x0v[i]) * (y[i] - x0v[i])
        vn = sqrt(vn)
        if record:
            if k > cap:
                cap *= 2
                cols_arr = np.concatenate([cols_arr, np.empty((NCOLS, cap - cols_arr.shape[1]))], axis=1)
                cols_arr = np.ascontiguousarray(cols_arr)
                cols = cols_arr
                if keep_points:
                    pts_arr = np.ascontiguousarray(np.concatenate(
                        [pts_arr, np.empty((3, cap - pts_arr.shape[1], n))], axis=1))
                    pts = pts_arr
            cols[0, k - 1] = lam_k
            cols[1, k - 1] = lhs
            cols[2, k - 1] = rhs
            cols[3, k - 1] = vn
            cols[4, k - 1] = sqrt(bn)
            cols[5, k - 1] = eps
            cols[6, k - 1] = sqrt(yd)
            if keep_points:
                for i in range(n):
                    pts[0, k - 1, i] = x[i]
                    pts[1, k - 1, i] = x[i] - lam_k * v[i]
                    pts[2, k - 1, i] = y[i]
        if vn <= rho and eps <= eps_tol:
            status = CONVERGED
            break
        xn = 0.0
        for i in range(n):
            x[i] = x[i] - lam_k * v[i]
            xn += x[i] * x[i]
        xn = sqrt(xn)
        if not xn <= div_limit:
            status = NUMERIC_FAILURE
            break

    out = {
        "status": status,
        "k": k,
        "y": y_arr,
        "b": b_arr,
        "v": v_arr,
        "eps": eps,
        "x": x_arr,
        "lam": lam_k,
        "lam_min": lam_min,
        "sigma_used": sig_used,
        "columns": None,
        "points": None,
    }
    if record:
        nrec = k
        if status == CERT_VIOLATION or status == BROKEN_CONVEXITY:
            nrec = k - 1
        names = ("lam", "lhs", "rhs", "v_norm", "b_norm", "eps", "y_dist_x0")
        out["columns"] = {names[j]: cols_arr[j, :nrec].copy() for j in range(NCOLS)}
        if keep_points:
            out["points"] = {
                "x_prev": pts_arr[0, :nrec].copy(),
                "x_next": pts_arr[1, :nrec].copy(),
                "y": pts_arr[2, :nrec].copy(),
            }
    return out
