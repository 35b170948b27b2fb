# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the grid-oracle hot loops.

Same signatures and results as :mod:`robustfeas._kernels_py`.
"""

import numpy as np

from libc.math cimport fabs


cdef inline double _h(const double[:, ::1] phi, Py_ssize_t r, const Py_ssize_t[::1] cyc,
                      const double[::1] beta, double q) nogil:
    cdef double acc = 0.0, t
    cdef Py_ssize_t k
    for k in range(cyc.shape[0]):
        t = q - beta[k]
        acc -= phi[r, cyc[k]] * t * fabs(t)
    return acc


def cycle_flows(phi, cyc, beta, double lo, double hi, double tol=1e-10, int max_iter=200):
    """Root of ``q -> -sum_k phi[r, cyc[k]] f(q - beta[k])`` on ``[lo, hi]`` for every row ``r``."""
    cdef const double[:, ::1] P = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const Py_ssize_t[::1] C = np.ascontiguousarray(cyc, dtype=np.intp)
    cdef const double[::1] B = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], r
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double a, b, mid, hm
    cdef int it
    with nogil:
        for r in range(n):
            a = lo
            b = hi
            if _h(P, r, C, B, a) == 0.0:
                out[r] = a
                continue
            if _h(P, r, C, B, b) == 0.0:
                out[r] = b
                continue
            for it in range(max_iter):
                mid = 0.5 * (a + b)
                hm = _h(P, r, C, B, mid)
                if hm == 0.0:
                    a = mid
                    b = mid
                    break
                if hm > 0.0:
                    a = mid
                else:
                    b = mid
                if b - a <= tol:
                    break
            out[r] = 0.5 * (a + b)
    return out_arr


def pressure_violation(g, lb, ub, double root_lb, double root_ub):
    """``max(root_lb, max_i lb_i + g_i) - min(root_ub, min_i ub_i + g_i)`` per row of ``g``."""
    cdef const double[:, ::1] G = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[::1] L = np.ascontiguousarray(lb, dtype=np.float64)
    cdef const double[::1] U = np.ascontiguousarray(ub, dtype=np.float64)
    cdef Py_ssize_t n = G.shape[0], m = G.shape[1], r, i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double lo, hi, v
    with nogil:
        for r in range(n):
            lo = root_lb
            hi = root_ub
            for i in range(m):
                v = L[i] + G[r, i]
                if v > lo:
                    lo = v
                v = U[i] + G[r, i]
                if v < hi:
                    hi = v
            out[r] = lo - hi
    return out_arr
