"""Seeded instance generators shared by the test modules."""

from collections import deque

import numpy as np

from robustfeas.gasnet import Arc, Network, Node

# criterion key ("3" or "3.2" for one instance of criterion 3) -> (passed, detail);
# conftest.py prints one line per criterion in the terminal summary
ACCEPTANCE_LINES = {}


def random_tree(rng, n_nodes=None, u_hi=3.0):
    """Random tree with integer demands summing to zero and one supply node."""
    n = int(n_nodes or rng.integers(2, 7))
    arcs = []
    for v in range(2, n + 1):
        w = int(rng.integers(1, v))
        tail, head = (w, v) if rng.random() < 0.7 else (v, w)
        arcs.append(Arc(tail, head, 1.0, float(rng.uniform(1.2, u_hi))))
    demand = -rng.integers(0, 5, size=n).astype(float)
    demand[0] = -demand[1:].sum()
    nodes = []
    for i in range(n):
        lo = 0.0 if i == 0 else float(rng.choice([0.0, rng.uniform(20, 160)]))
        hi = float(rng.choice([200.0, rng.uniform(160, 220)]))
        nodes.append(Node(i + 1, float(demand[i]), lo, max(hi, lo)))
    return Network(tuple(nodes), tuple(arcs), name="tree").validate()


def random_cycle(rng, k=None, pendants=None, max_nodes=4):
    """Random single-cycle network: a ``k``-ring, some arcs flipped, optional pendant nodes."""
    k = int(k or rng.integers(2, max_nodes + 1))
    extra = int(rng.integers(0, max_nodes - k + 1) if pendants is None else pendants)
    n = k + extra
    arcs = []
    for i in range(k):
        a, b = i + 1, (i + 1) % k + 1
        if k > 2 and rng.random() < 0.25:
            a, b = b, a
        arcs.append((a, b))
    for v in range(k + 1, n + 1):
        arcs.append((int(rng.integers(1, v)), v))
    while True:
        demand = -rng.integers(0, 9, size=n).astype(float)
        demand[0] = -demand[1:].sum()
        if demand[1:k].any() or demand[0] != 0:
            break
    c = float(rng.uniform(1.5, 4.0))
    nodes = []
    for i in range(n):
        lo = 0.0 if i == 0 else float(rng.choice([0.0, rng.uniform(40, 170)]))
        nodes.append(Node(i + 1, float(demand[i]), lo, 200.0))
    net = Network(tuple(nodes), tuple(Arc(a, b, 1.0, c) for a, b in arcs), name="cycle")
    return net.validate()


def quad_monomial(alpha, limits, epsrel=1e-13):
    """Adaptive quadrature of ``x^alpha`` with ``scipy.integrate.nquad``.

    ``limits`` follows nquad: innermost variable first, each entry a pair or
    a callable of the outer variables.
    """
    from scipy import integrate

    def f(*x):
        v = 1.0
        for xi, a in zip(x, alpha):
            v *= xi ** a
        return v

    val, _ = integrate.nquad(f, limits, opts={"epsabs": 0.0, "epsrel": epsrel, "limit": 200})
    return val


def path_drops(net, root):
    """Independent drop formula: g_w = g_u + phi_a D|D|, D the withdrawal beyond the arc."""
    adj = {v: [] for v in net.node_ids}
    for k, a in enumerate(net.arcs):
        adj[a.tail].append((a.head, k))
        adj[a.head].append((a.tail, k))
    parent, order, seen = {}, [root], {root}
    dq = deque([root])
    while dq:
        u = dq.popleft()
        for w, k in adj[u]:
            if w not in seen:
                seen.add(w)
                parent[w] = (u, k)
                order.append(w)
                dq.append(w)
    below = {v: net.node(v).demand for v in net.node_ids}
    for w in reversed(order[1:]):
        below[parent[w][0]] += below[w]
    m = len(net.arcs)
    drops = {root: np.zeros(m)}
    for w in order[1:]:
        u, k = parent[w]
        d = drops[u].copy()
        d[k] += below[w] * abs(below[w])
        drops[w] = d
    return drops


def interval_by_formula(net, root):
    box = net.phi_box()
    lo_b, hi_b = np.array(box.lower), np.array(box.upper)
    drops = path_drops(net, root)
    r = net.node(root)
    lo, hi = r.psqr_lo, r.psqr_hi
    for v in net.node_ids:
        if v == root:
            continue
        c = drops[v]
        nv = net.node(v)
        lo = max(lo, nv.psqr_lo + float(np.maximum(c * lo_b, c * hi_b).sum()))
        hi = min(hi, nv.psqr_hi + float(np.minimum(c * lo_b, c * hi_b).sum()))
    return (lo, hi) if lo <= hi + 1e-9 else None
