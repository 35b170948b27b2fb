"""Passive gas networks: model, spanning-tree reduction and the nominal solver.

Conventions
-----------
* Flow conservation: ``sum_out q - sum_in q = d_v`` at every node.
* Pressure relation, per arc ``a = (v, w)``:  ``pi_v - pi_w = -phi_a f(q_a)``
  with ``f(x) = x|x|`` (squared pressures ``pi``).
* The root (lowest node id) is eliminated; ``pi_i = pi_root - g_i``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .semialg import BoxSet

BISECT_TOL = 1e-10
BISECT_MAXITER = 200
FEAS_TOL = 1e-9


class NetworkError(ValueError):
    pass


class DisconnectedError(NetworkError):
    pass


class TopologyError(NetworkError):
    """Operation needs a tree or a single cycle."""


class BracketError(RuntimeError):
    pass


def signed_square(x):
    return x * np.abs(x)


@dataclass(frozen=True)
class Node:
    id: int
    demand: float
    psqr_lo: float
    psqr_hi: float
    folded: bool = False


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    phi_lo: float
    phi_hi: float


@dataclass(frozen=True)
class Network:
    nodes: Tuple[Node, ...]
    arcs: Tuple[Arc, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", tuple(self.arcs))

    # -- validation ---------------------------------------------------------
    def validate(self, demand_tol: float = 1e-9) -> "Network":
        ids = [v.id for v in self.nodes]
        if len(set(ids)) != len(ids):
            raise NetworkError("node ids are not unique")
        if not self.nodes:
            raise NetworkError("network has no nodes")
        idset = set(ids)
        for a in self.arcs:
            if a.tail not in idset or a.head not in idset:
                raise NetworkError(f"arc ({a.tail},{a.head}) references an unknown node")
            if a.tail == a.head:
                raise NetworkError(f"self loop at node {a.tail}")
            if not 0 < a.phi_lo <= a.phi_hi:
                raise NetworkError(f"arc ({a.tail},{a.head}) needs 0 < phi_lo <= phi_hi")
        for v in self.nodes:
            # folded nodes carry worst-case bounds of a removed subtree, which
            # may cross; their own lo <= hi pair is never a real constraint
            if v.psqr_lo < 0 or (v.psqr_lo > v.psqr_hi and not v.folded):
                raise NetworkError(f"node {v.id} needs 0 <= psqr_lo <= psqr_hi")
        total = sum(v.demand for v in self.nodes)
        if abs(total) > demand_tol * max(1.0, sum(abs(v.demand) for v in self.nodes)):
            raise NetworkError(f"demands sum to {total}, not zero")
        if not self.is_connected():
            raise DisconnectedError("graph is not weakly connected")
        return self

    # -- structure ----------------------------------------------------------
    @property
    def node_ids(self) -> List[int]:
        return [v.id for v in self.nodes]

    def node(self, node_id: int) -> Node:
        for v in self.nodes:
            if v.id == node_id:
                return v
        raise KeyError(node_id)

    def index_of(self) -> Dict[int, int]:
        return {v.id: i for i, v in enumerate(self.nodes)}

    def incidence(self) -> np.ndarray:
        """Full node-arc incidence matrix: +1 at the tail, -1 at the head."""
        idx = self.index_of()
        A = np.zeros((len(self.nodes), len(self.arcs)))
        for k, a in enumerate(self.arcs):
            A[idx[a.tail], k] = 1.0
            A[idx[a.head], k] = -1.0
        return A

    @property
    def demands(self) -> np.ndarray:
        return np.array([v.demand for v in self.nodes], dtype=float)

    def cyclomatic_number(self) -> int:
        return len(self.arcs) - len(self.nodes) + 1

    def is_connected(self) -> bool:
        adj = {v.id: set() for v in self.nodes}
        for a in self.arcs:
            adj[a.tail].add(a.head)
            adj[a.head].add(a.tail)
        start = min(adj)
        seen = {start}
        todo = [start]
        while todo:
            for w in adj[todo.pop()]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(adj)

    def is_tree(self) -> bool:
        return self.cyclomatic_number() == 0

    def phi_box(self) -> BoxSet:
        return BoxSet(tuple(a.phi_lo for a in self.arcs), tuple(a.phi_hi for a in self.arcs))

    def with_phi_box(self, lower, upper) -> "Network":
        arcs = tuple(replace(a, phi_lo=float(lo), phi_hi=float(hi))
                     for a, lo, hi in zip(self.arcs, lower, upper))
        return replace(self, arcs=arcs)

    def with_u_scale(self, c: float) -> "Network":
        """Every arc's coefficient interval becomes ``[1, c]``."""
        m = len(self.arcs)
        return self.with_phi_box([1.0] * m, [float(c)] * m)

    def without_pressure_bounds(self) -> "Network":
        return replace(self, nodes=tuple(replace(v, psqr_lo=0.0, psqr_hi=math.inf) for v in self.nodes))


# ---------------------------------------------------------------------------
# reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reduction:
    root: int
    rows: Tuple[int, ...]            # non-root node ids, row order of A_B / A_N / g
    basis: Tuple[int, ...]           # arc indices
    nonbasis: Tuple[int, ...]
    A_B: np.ndarray
    A_N: np.ndarray
    d: np.ndarray                    # reduced demand vector
    lam_matrix: np.ndarray           # |A| x |N|
    lam_offset: np.ndarray           # |A|
    path: np.ndarray                 # (A_B^T)^{-1}, rows x |B|
    cycle_sign: Optional[np.ndarray] = None   # per arc: +1/-1 on the cycle, 0 elsewhere
    beta: Optional[np.ndarray] = None         # per arc; meaningful on cycle arcs

    @property
    def n_arcs(self) -> int:
        return self.lam_matrix.shape[0]

    @property
    def is_single_cycle(self) -> bool:
        return len(self.nonbasis) == 1

    @property
    def cycle_arcs(self) -> List[int]:
        if self.cycle_sign is None:
            return []
        return [k for k, s in enumerate(self.cycle_sign) if s != 0]

    def flows(self, qN) -> np.ndarray:
        """Flow extension map: all arc flows from the nonbasis flows."""
        qN = np.atleast_1d(np.asarray(qN, dtype=float))
        if qN.shape != (len(self.nonbasis),):
            raise ValueError(f"qN must have length {len(self.nonbasis)}")
        return self.lam_matrix @ qN + self.lam_offset

    def beta_sorted(self) -> np.ndarray:
        return np.sort(self.beta[self.cycle_arcs])


def choose_spanning_tree(network: Network) -> Reduction:
    """BFS spanning tree from the lowest node id; arcs scanned by index."""
    if not network.is_connected():
        raise DisconnectedError("graph is not weakly connected")
    ids = network.node_ids
    root = min(ids)
    incident: Dict[int, List[int]] = {v: [] for v in ids}
    for k, a in enumerate(network.arcs):
        incident[a.tail].append(k)
        incident[a.head].append(k)
    seen = {root}
    tree: List[int] = []
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for k in sorted(incident[v]):
            a = network.arcs[k]
            w = a.head if a.tail == v else a.tail
            if w not in seen:
                seen.add(w)
                tree.append(k)
                queue.append(w)
    basis = tuple(sorted(tree))
    nonbasis = tuple(k for k in range(len(network.arcs)) if k not in set(basis))
    idx = network.index_of()
    rows = tuple(v for v in ids if v != root)
    keep = [idx[v] for v in rows]
    A = network.incidence()[keep]
    A_B = A[:, list(basis)]
    A_N = A[:, list(nonbasis)]
    if len(rows) and abs(np.linalg.det(A_B)) < 1e-9:
        raise NetworkError("basis matrix is singular")
    d = network.demands[keep]
    m = len(network.arcs)
    lam = np.zeros((m, len(nonbasis)))
    off = np.zeros(m)
    if len(rows):
        inv = np.linalg.inv(A_B)
        lam[list(basis)] = -inv @ A_N
        off[list(basis)] = inv @ d
        path = np.linalg.inv(A_B.T)
    else:
        path = np.zeros((0, 0))
    for j, k in enumerate(nonbasis):
        lam[k, j] = 1.0
    lam = np.where(np.abs(lam) < 1e-12, 0.0, lam)
    sign = beta = None
    if len(nonbasis) == 1:
        sign = np.rint(lam[:, 0])
        beta = np.where(sign != 0, -sign * off, 0.0)
    return Reduction(root, rows, basis, nonbasis, A_B, A_N, d, lam, off, path, sign, beta)


# ---------------------------------------------------------------------------
# flow and pressure evaluation
# ---------------------------------------------------------------------------

def reduction_g(reduction: Reduction, phi, qN) -> np.ndarray:
    """``g = (A_B^T)^{-1} Phi_B F_B(q_B)``; ``pi_i = pi_root - g_i``."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (reduction.n_arcs,):
        raise ValueError(f"phi must have length {reduction.n_arcs}")
    q = reduction.flows(qN)
    B = list(reduction.basis)
    return reduction.path @ (phi[B] * signed_square(q[B]))


def cycle_h(reduction: Reduction, phi, q: float) -> float:
    """Cycle flow function ``-sum_a phi_a f(q - beta_a)`` over the cycle arcs."""
    if not reduction.is_single_cycle:
        raise TopologyError("cycle_h needs exactly one nonbasis arc")
    phi = np.asarray(phi, dtype=float)
    cyc = reduction.cycle_arcs
    return float(-np.sum(phi[cyc] * signed_square(q - reduction.beta[cyc])))


def cycle_h_many(reduction: Reduction, phi, qs) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    cyc = reduction.cycle_arcs
    qs = np.asarray(qs, dtype=float)
    return -(signed_square(qs[:, None] - reduction.beta[cyc][None, :]) * phi[cyc]).sum(axis=1)


def cycle_h_coeffs(reduction: Reduction, q: float) -> np.ndarray:
    """``h(., q)`` is linear in phi: the coefficient vector over all arcs."""
    out = np.zeros(reduction.n_arcs)
    cyc = reduction.cycle_arcs
    out[cyc] = -signed_square(q - reduction.beta[cyc])
    return out


def solve_cycle_flow(reduction: Reduction, phi, tol: float = BISECT_TOL,
                     max_iter: int = BISECT_MAXITER) -> float:
    """Unique root of the decreasing function ``h(phi, .)`` by bisection on
    ``[min beta, max beta]``."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("pressure-loss coefficients must be positive")
    bs = reduction.beta_sorted()
    lo, hi = float(bs[0]), float(bs[-1])
    hlo, hhi = cycle_h(reduction, phi, lo), cycle_h(reduction, phi, hi)
    if hlo == 0.0:
        return lo
    if hhi == 0.0:
        return hi
    if not (hlo > 0 > hhi):
        raise BracketError(f"h does not change sign on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        hm = cycle_h(reduction, phi, mid)
        if hm == 0.0:
            return mid
        if hm > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def tree_drops(network: Network, root: int | None = None) -> Dict[int, np.ndarray]:
    """Per node ``i`` a vector ``c_i`` with ``pi_root - pi_i = c_i . phi`` on a tree.

    Flows on a tree do not depend on ``phi``, so every pressure difference is
    linear in the coefficients.
    """
    if not network.is_tree():
        raise TopologyError("tree_drops needs a tree")
    ids = network.node_ids
    root = min(ids) if root is None else root
    if root not in ids:
        raise NetworkError(f"unknown root {root}")
    red = choose_spanning_tree(network)
    fq = signed_square(red.flows(np.zeros(0)))
    m = len(network.arcs)
    adj: Dict[int, List[int]] = {v: [] for v in ids}
    for k, a in enumerate(network.arcs):
        adj[a.tail].append(k)
        adj[a.head].append(k)
    out = {root: np.zeros(m)}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for k in adj[v]:
            a = network.arcs[k]
            w, sign = (a.head, 1.0) if a.tail == v else (a.tail, -1.0)
            if w in out:
                continue
            c = out[v].copy()
            c[k] -= sign * fq[k]  # same convention as reduction_g: g_tail - g_head = phi * f(q)
            out[w] = c
            queue.append(w)
    return out


def unique_flow(network: Network, reduction: Reduction, phi) -> np.ndarray:
    """Arc flows of the (unique) pressure-bound-free solution."""
    if not reduction.nonbasis:
        return reduction.flows(np.zeros(0))
    if reduction.is_single_cycle:
        return reduction.flows([solve_cycle_flow(reduction, phi)])
    raise TopologyError("nominal solver handles trees and single cycles only")


@dataclass
class NominalResult:
    feasible: bool
    eta_interval: Tuple[float, float]   # feasible root pressures
    pressures: Optional[np.ndarray]     # squared pressures in node order (if feasible)
    flows: np.ndarray
    g: np.ndarray
    violation: float                    # lo - hi of the root interval (<= 0 when feasible)


def root_interval(network: Network, reduction: Reduction, g) -> Tuple[float, float]:
    """Feasible root pressures: ``[max(lb_i + g_i), min(ub_i + g_i)]`` with the root's own bounds."""
    root = network.node(reduction.root)
    lo, hi = root.psqr_lo, root.psqr_hi
    for v, gi in zip(reduction.rows, g):
        nd = network.node(v)
        lo = max(lo, nd.psqr_lo + gi)
        hi = min(hi, nd.psqr_hi + gi)
    return lo, hi


def nominal_check(network: Network, reduction: Reduction, phi, tol: float = FEAS_TOL) -> NominalResult:
    phi = np.asarray(phi, dtype=float)
    q = unique_flow(network, reduction, phi)
    qN = q[list(reduction.nonbasis)]
    g = reduction_g(reduction, phi, qN)
    lo, hi = root_interval(network, reduction, g)
    feasible = lo <= hi + tol
    pressures = None
    if feasible:
        pi0 = 0.5 * (lo + hi) if hi >= lo else lo
        idx = network.index_of()
        pressures = np.empty(len(network.nodes))
        pressures[idx[reduction.root]] = pi0
        for v, gi in zip(reduction.rows, g):
            pressures[idx[v]] = pi0 - gi
    return NominalResult(bool(feasible), (lo, hi), pressures, q, g, lo - hi)


def potn_residual(network: Network, phi, flows, pressures) -> float:
    """Max violation of the full model (conservation, pressure loss, bounds)."""
    A = network.incidence()
    r1 = np.abs(A @ flows - network.demands).max(initial=0.0)
    r2 = np.abs(A.T @ pressures + np.asarray(phi) * signed_square(flows)).max(initial=0.0)
    lo = np.array([v.psqr_lo for v in network.nodes])
    hi = np.array([v.psqr_hi for v in network.nodes])
    r3 = max(np.max(lo - pressures, initial=0.0), np.max(pressures - hi, initial=0.0), 0.0)
    return float(max(r1, r2, r3))


# ---------------------------------------------------------------------------
# Benchmark instances
# ---------------------------------------------------------------------------

TABLE_INSTANCES = {
    2: ([-10, 10], [(0, 200), (140, 200)]),
    3: ([-10, 2, 8], [(0, 200), (0, 200), (130, 200)]),
    4: ([-10, 2, 6, 2], [(0, 200), (0, 200), (115, 200), (0, 200)]),
    5: ([-10, 1, 1, 6, 2], [(0, 200), (0, 200), (0, 200), (100, 200), (0, 200)]),
    6: ([-10, 1, 1, 6, 1, 1], [(0, 200), (0, 200), (0, 200), (70, 200), (0, 200), (0, 200)]),
    7: ([-10, 1, 1, 1, 4, 2, 1], [(0, 200), (0, 200), (0, 200), (0, 200), (50, 200), (0, 200), (0, 200)]),
}


def ring_network(n: int, c: float = 2.0) -> Network:
    """The ``n``-node benchmark ring: arcs (1,2), ..., (n,1), coefficients in ``[1, c]``."""
    demands, bounds = TABLE_INSTANCES[n]
    nodes = tuple(Node(i + 1, float(d), float(lo), float(hi))
                  for i, (d, (lo, hi)) in enumerate(zip(demands, bounds)))
    arcs = tuple(Arc(i + 1, (i + 1) % n + 1, 1.0, float(c)) for i in range(n))
    return Network(nodes, arcs, name=f"ring{n}")
