"""NumPy implementations of the grid-oracle hot loops (fallback for ``_kernels``)."""

import numpy as np


def _h(phi_c, beta, q):
    t = q[:, None] - beta[None, :]
    return -(phi_c * t * np.abs(t)).sum(axis=1)


def cycle_flows(phi, cyc, beta, lo, hi, tol=1e-10, max_iter=200):
    """Root of ``q -> -sum_k phi[r, cyc[k]] f(q - beta[k])`` on ``[lo, hi]`` for every row ``r``.

    Vectorized bisection: all rows advance together and each row freezes once
    its bracket is below ``tol`` or it hits an exact zero.
    """
    phi = np.ascontiguousarray(phi, dtype=float)
    beta = np.asarray(beta, dtype=float)
    phi_c = phi[:, np.asarray(cyc, dtype=np.intp)]
    n = phi.shape[0]
    a = np.full(n, float(lo))
    b = np.full(n, float(hi))
    hit_lo = _h(phi_c, beta, a) == 0.0
    hit_hi = (_h(phi_c, beta, b) == 0.0) & ~hit_lo
    b[hit_lo] = a[hit_lo]
    a[hit_hi] = b[hit_hi]
    live = ~(hit_lo | hit_hi) & (b - a > tol)
    for _ in range(max_iter):
        if not live.any():
            break
        idx = np.flatnonzero(live)
        mid = 0.5 * (a[idx] + b[idx])
        hm = _h(phi_c[idx], beta, mid)
        exact = hm == 0.0
        up = hm > 0.0
        a[idx[up | exact]] = mid[up | exact]
        b[idx[~up | exact]] = mid[~up | exact]
        live[idx] = ~exact & (b[idx] - a[idx] > tol)
    return 0.5 * (a + b)


def pressure_violation(g, lb, ub, root_lb, root_ub):
    """``max(root_lb, max_i lb_i + g_i) - min(root_ub, min_i ub_i + g_i)`` per row of ``g``."""
    g = np.asarray(g, dtype=float)
    if g.shape[1] == 0:
        return np.full(g.shape[0], float(root_lb) - float(root_ub))
    lo = np.maximum(root_lb, (g + np.asarray(lb)[None, :]).max(axis=1))
    hi = np.minimum(root_ub, (g + np.asarray(ub)[None, :]).min(axis=1))
    return lo - hi
