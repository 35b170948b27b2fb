"""Compiled kernels vs the NumPy fallback on grid-oracle workloads.

    python benchmarks/bench_kernels.py [--points 200000] [--repeat 3]

Both backends are imported directly, so the comparison does not depend on
which one ``robustfeas.kernels`` selected.
"""

import argparse
import time

import numpy as np

from robustfeas import _kernels_py
from robustfeas.gasnet import choose_spanning_tree, ring_network, signed_square

try:
    from robustfeas import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workload(n_nodes, points, seed=0):
    net = ring_network(n_nodes, 4.0)
    red = choose_spanning_tree(net)
    rng = np.random.default_rng(seed)
    phis = rng.uniform(1.0, 4.0, size=(points, n_nodes))
    cyc = np.array(red.cycle_arcs, dtype=np.intp)
    bs = red.beta_sorted()
    return net, red, phis, cyc, bs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [("numpy", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    if _kernels_c is None:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':<20}{'n':>3}{'backend':>9}{'seconds':>10}{'speedup':>9}")
    for n in (3, 5, 7):
        net, red, phis, cyc, bs = workload(n, args.points)
        beta = red.beta[cyc]
        base = None
        ref_q = None
        for name, mod in backends:
            t, q = best_of(lambda: mod.cycle_flows(phis, cyc, beta, bs[0], bs[-1]), args.repeat)
            if ref_q is None:
                ref_q, base = q, t
            else:
                assert np.max(np.abs(q - ref_q)) < 1e-8, "backends disagree on cycle flows"
            print(f"{'cycle_flows':<20}{n:>3}{name:>9}{t:>10.4f}{base / t:>9.1f}")
        flows = ref_q[:, None] * red.lam_matrix[:, 0][None, :] + red.lam_offset[None, :]
        B = list(red.basis)
        g = np.ascontiguousarray((phis[:, B] * signed_square(flows[:, B])) @ red.path.T)
        lb = np.array([net.node(v).psqr_lo for v in red.rows])
        ub = np.array([net.node(v).psqr_hi for v in red.rows])
        r = net.node(red.root)
        base = ref = None
        for name, mod in backends:
            t, v = best_of(lambda: mod.pressure_violation(g, lb, ub, r.psqr_lo, r.psqr_hi), args.repeat)
            if ref is None:
                ref, base = v, t
            else:
                assert np.allclose(v, ref), "backends disagree on violations"
            print(f"{'pressure_violation':<20}{n:>3}{name:>9}{t:>10.4f}{base / t:>9.1f}")


if __name__ == "__main__":
    main()
