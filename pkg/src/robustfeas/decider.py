"""Decision orchestration.

* Trees are decided exactly with one polyhedral-containment LP.
* Pendant subtrees of a cyclic network are folded into the node where they
  attach, leaving a bare cycle.
* A single cycle is split into elimination cells; per cell, every pressure
  row is bounded from below with moment relaxations (feasibility side) and
  all rows together are tested with an SOS separation program (infeasibility
  side), interleaved by ascending level.
* :func:`oracle_grid` is the brute-force reference used by the tests.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import kernels
from .absval import EliminationCell, h_rows, single_cycle_subdivide
from .conic import SolverSettings, Status
from .gasnet import (
    FEAS_TOL,
    Network,
    Node,
    TopologyError,
    choose_spanning_tree,
    nominal_check,
    signed_square,
    tree_drops,
)
from .poly import Polynomial
from .relax import (
    AffineScaling,
    SosCertificate,
    VerificationReport,
    moment_lower_bound,
    normalize_rows,
    psd_side_lengths,
    separation_search,
    verify_certificate,
)
from .semialg import BoxSet, PolytopeSet, SemialgebraicSet, polytope_moments

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (2, 3, 4)
EPS_POS = 1e-6
EPS_CERT = 1e-6          # per unit of scaled cell volume
MAX_PSD_SIDE = 170       # larger moment/Gram blocks are skipped as "too large"
GRID_CAP = 10 ** 6
REFINE_STEPS = 8
LP_TOL = 1e-9


class VerdictKind(str, enum.Enum):
    FEASIBLE = "RobustFeasible"
    INFEASIBLE = "RobustInfeasible"
    UNDECIDED = "Undecided"


class MultiCycleError(TopologyError):
    """More than one independent cycle: outside what the decider handles."""


class GridBudgetError(ValueError):
    """The oracle grid would exceed the configured point budget."""


@dataclass
class DecideConfig:
    levels: Tuple[int, ...] = DEFAULT_LEVELS
    eps_pos: float = EPS_POS
    eps_cert: float = EPS_CERT
    threads: int = 1
    max_psd_side: int = MAX_PSD_SIDE
    solver: SolverSettings = field(default_factory=SolverSettings)
    feasibility: bool = True
    infeasibility: bool = True

    def __post_init__(self):
        self.levels = tuple(sorted(set(int(d) for d in self.levels)))
        if not self.levels or self.levels[0] < 1:
            raise ValueError("levels must be positive integers")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class SubproblemReport:
    """One attempted subproblem.

    ``constraint`` is the 1-based pressure-row index for feasibility
    subproblems and 0 for the combined infeasibility program of a cell.
    """

    cell: int
    constraint: int
    level: int
    objective: Optional[float]
    status: str
    time: float
    method: str = "feas"
    note: str = ""

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.cell, self.constraint, self.level)


@dataclass
class Verdict:
    kind: VerdictKind
    evidence: dict = field(default_factory=dict)
    reports: List[SubproblemReport] = field(default_factory=list)
    level: Optional[int] = None
    reasons: Dict[int, List[str]] = field(default_factory=dict)

    @property
    def certificate(self) -> Optional[SosCertificate]:
        return self.evidence.get("certificate")

    def sorted_reports(self) -> List[SubproblemReport]:
        return sorted(self.reports, key=lambda r: r.key)


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------

def _as_polytope(U) -> PolytopeSet:
    if isinstance(U, BoxSet):
        return U.as_polytope()
    if isinstance(U, PolytopeSet):
        return U
    raise TypeError(f"unsupported uncertainty set {type(U).__name__}")


def tree_rows(network: Network, root: int | None = None):
    """Pressure-compatibility rows of a tree as affine functions of ``phi``.

    Returns ``(labels, const, A)`` with row ``k`` reading
    ``const[k] + A[k] @ phi >= 0``. Row order: per non-root node the
    ``root_lo``/``root_hi`` pair, then all ordered pairs (lower-bound node in
    the outer loop). Rows with an infinite constant are dropped.
    """
    ids = network.node_ids
    root = min(ids) if root is None else root
    drops = tree_drops(network, root)
    r = network.node(root)
    others = [v for v in ids if v != root]
    labels, const, coef = [], [], []

    def add(label, c, a):
        if math.isfinite(c):
            labels.append(label)
            const.append(c)
            coef.append(a)

    for v in others:
        nv = network.node(v)
        add(("root_lo", v, root), nv.psqr_hi - r.psqr_lo, drops[v])
        add(("root_hi", v, root), r.psqr_hi - nv.psqr_lo, -drops[v])
    for j in others:
        for i in others:
            if i != j:
                add(("pair", i, j), network.node(i).psqr_hi - network.node(j).psqr_lo,
                    drops[i] - drops[j])
    m = len(network.arcs)
    A = np.array(coef) if coef else np.zeros((0, m))
    return labels, np.array(const, dtype=float), A


def _support_min(P: PolytopeSet, a: np.ndarray):
    """``min a.phi`` over ``P`` and a minimizer."""
    res = linprog(a, A_ub=P.A, b_ub=P.b, bounds=[(None, None)] * len(a), method="highs")
    if res.status == 2:
        raise ValueError("uncertainty set is empty")
    if res.status == 3:
        raise ValueError("uncertainty set is unbounded in a direction that matters")
    return float(res.fun), np.asarray(res.x)


def _containment_lp(P: PolytopeSet, A: np.ndarray):
    """Solve for ``W >= 0`` with ``A + W T = 0`` minimizing ``sum_k W_k t``.

    By LP duality the optimal ``W_k t`` equals ``-min_{phi in P} A_k phi``;
    the row is robustly satisfied iff ``const_k - W_k t >= 0``. Returns the
    per-row values ``W_k t`` and ``W``.
    """
    K, m = A.shape
    T, t = P.A, P.b
    r = T.shape[0]
    if K == 0:
        return np.zeros(0), np.zeros((0, r))
    # vec(W) row-major: W[k, l] -> k * r + l ; W_k T = -A_k  <=>  T^T W_k^T = -A_k^T
    A_eq = sp.kron(sp.identity(K, format="csr"), sp.csr_matrix(T.T))
    b_eq = -A.reshape(-1)
    c = np.tile(t, K)
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        raise ValueError("containment LP infeasible: uncertainty set unbounded or empty")
    if res.status != 0:
        raise RuntimeError(f"containment LP failed: {res.message}")
    W = res.x.reshape(K, r)
    return W @ t, W


def decide_tree(network: Network, U=None) -> Verdict:
    """Exact robust decision for a tree network over a polyhedral ``U``."""
    if not network.is_tree():
        raise TopologyError("decide_tree needs a tree network")
    P = _as_polytope(network.phi_box() if U is None else U)
    if P.dim != len(network.arcs):
        raise ValueError("uncertainty set dimension differs from the arc count")
    t0 = time.perf_counter()
    labels, const, A = tree_rows(network)
    worst, W = _containment_lp(P, A)
    slack = const - worst
    elapsed = time.perf_counter() - t0
    reports = [SubproblemReport(0, k + 1, 0, float(s), "Optimal", elapsed / max(1, len(slack)), "lp")
               for k, s in enumerate(slack)]
    if np.all(slack >= -LP_TOL):
        return Verdict(VerdictKind.FEASIBLE, {"method": "lp", "slack": slack, "rows": labels, "W": W},
                       reports)
    k = int(np.argmin(slack))
    _, phi = _support_min(P, A[k])
    return Verdict(VerdictKind.INFEASIBLE,
                   {"method": "lp", "slack": slack, "rows": labels, "row": labels[k],
                    "witness": phi, "violation": float(-(const[k] + A[k] @ phi))},
                   reports)


def tree_pressure_interval(network: Network, U=None, root: int | None = None):
    """Root pressures that keep the tree feasible for every ``phi`` in ``U``.

    The root pressure is held fixed while ``phi`` varies. Returns
    ``(lo, hi)``, or ``None`` when no such pressure exists; ``hi`` may be
    ``inf`` when no upper bound is active.
    """
    if not network.is_tree():
        raise TopologyError("tree_pressure_interval needs a tree network")
    P = _as_polytope(network.phi_box() if U is None else U)
    ids = network.node_ids
    root = min(ids) if root is None else root
    drops = tree_drops(network, root)
    r = network.node(root)
    # rows: const + e * pi0 + a . phi >= 0
    const, e, coef = [], [], []
    for v in ids:
        if v == root:
            continue
        nv = network.node(v)
        const.append(-nv.psqr_lo)
        e.append(1.0)
        coef.append(-drops[v])           # pi0 - g_v - lb_v >= 0
        if math.isfinite(nv.psqr_hi):
            const.append(nv.psqr_hi)
            e.append(-1.0)
            coef.append(drops[v])        # ub_v - pi0 + g_v >= 0
    K, m, rr = len(const), len(network.arcs), P.A.shape[0]
    hi_bound = r.psqr_hi if math.isfinite(r.psqr_hi) else None
    if K == 0:
        return (r.psqr_lo, r.psqr_hi) if r.psqr_lo <= r.psqr_hi else None
    A = np.array(coef)
    # variables: [pi0, vec(W)]
    A_eq = sp.hstack([sp.csr_matrix((K * m, 1)),
                      sp.kron(sp.identity(K, format="csr"), sp.csr_matrix(P.A.T))]).tocsr()
    b_eq = -A.reshape(-1)
    # W_k t - e_k pi0 <= const_k
    A_ub = sp.hstack([sp.csr_matrix(-np.array(e)[:, None]),
                      sp.kron(sp.identity(K, format="csr"), sp.csr_matrix(P.b[None, :]))]).tocsr()
    b_ub = np.array(const)
    bounds = [(r.psqr_lo, hi_bound)] + [(0, None)] * (K * rr)
    out = []
    for sense in (1.0, -1.0):
        c = np.zeros(1 + K * rr)
        c[0] = sense
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status == 2:
            return None
        if res.status == 3:
            out.append(math.inf * -sense)
            continue
        if res.status != 0:
            raise RuntimeError(f"pressure interval LP failed: {res.message}")
        out.append(float(res.x[0]))
    lo, hi = out
    if lo == -math.inf:
        raise ValueError("pressure interval LP unbounded below: missing uncertainty bounds")
    return lo, hi


# ---------------------------------------------------------------------------
# pendant subtrees
# ---------------------------------------------------------------------------

@dataclass
class CollapseResult:
    network: Network
    attachments: Dict[int, Tuple[int, ...]]   # core node -> folded pendant nodes
    short_circuit: Optional[Verdict] = None


def _degrees(network: Network, alive: set, arcs: Iterable[int]) -> Dict[int, int]:
    deg = {v: 0 for v in alive}
    for k in arcs:
        a = network.arcs[k]
        deg[a.tail] += 1
        deg[a.head] += 1
    return deg


def collapse_subtrees(network: Network) -> CollapseResult:
    """Fold every pendant subtree into the node where it attaches.

    Leaves are peeled until every remaining node has degree at least two
    (a bare cycle) or one node is left. For each attachment node ``v`` with
    pendant part ``T``:

    1. the subnetwork ``T + v`` is decided exactly with :func:`decide_tree`
       (``v`` keeps its own bounds, pressures adjust to ``phi``); failure
       means the whole network is robust infeasible;
    2. ``v``'s bounds become ``[max(lb_v, max_phi max_i lb_i + g_i),
       min(ub_v, min_phi min_i ub_i + g_i)]`` over ``i`` in ``T`` with ``g``
       relative to ``v``, and ``v`` absorbs the pendant demand.

    With box uncertainty the folded network is robust feasible iff the
    original is. Folded bounds may cross: the only pair they would violate
    is ``v`` against itself, which never enters the pressure rows, and the
    node is flagged ``folded``.
    """
    ids = network.node_ids
    alive = set(ids)
    arcs_alive = set(range(len(network.arcs)))
    removed_via: Dict[int, int] = {}   # pendant node -> arc that attached it
    while len(alive) > 1:
        deg = _degrees(network, alive, arcs_alive)
        leaves = sorted(v for v in alive if deg[v] == 1)
        if not leaves:
            break
        if len(alive) == 2 and len(leaves) == 2:
            leaves = leaves[1:]          # keep the lower id as the last node
        for w in leaves:
            if len(alive) == 1:
                break
            k = next(k for k in arcs_alive if w in (network.arcs[k].tail, network.arcs[k].head))
            removed_via[w] = k
            alive.discard(w)
            arcs_alive.discard(k)
    if not removed_via:
        return CollapseResult(network, {})

    # group pendant nodes by the core node they hang from
    def anchor(w):
        while w in removed_via:
            a = network.arcs[removed_via[w]]
            w = a.head if a.tail == w else a.tail
        return w

    groups: Dict[int, List[int]] = {}
    for w in sorted(removed_via):
        groups.setdefault(anchor(w), []).append(w)

    new_nodes = {v.id: v for v in network.nodes if v.id in alive}
    for v, pend in sorted(groups.items()):
        members = set(pend) | {v}
        sub_arcs = [network.arcs[removed_via[w]] for w in pend]
        arc_ids = [removed_via[w] for w in pend]
        base = network.node(v)
        pend_demand = sum(network.node(w).demand for w in pend)
        sub_nodes = [replace(base, demand=-pend_demand)] + [network.node(w) for w in pend]
        sub = Network(tuple(sorted(sub_nodes, key=lambda n: n.id)), tuple(sub_arcs),
                      name=f"{network.name}:pendant@{v}")
        verdict = decide_tree(sub)
        if verdict.kind == VerdictKind.INFEASIBLE:
            phi = np.array([a.phi_lo for a in network.arcs])
            phi[arc_ids] = verdict.evidence["witness"]
            verdict.evidence.update(witness=phi, subtree=tuple(sorted(members)), attachment=v)
            return CollapseResult(network, {v: tuple(pend)}, verdict)
        drops = tree_drops(sub, v)
        box = sub.phi_box()
        lo_b, hi_b = np.array(box.lower), np.array(box.upper)
        lb, ub = base.psqr_lo, base.psqr_hi
        for w in pend:
            c = drops[w]
            gmax = float(np.sum(np.maximum(c * lo_b, c * hi_b)))
            gmin = float(np.sum(np.minimum(c * lo_b, c * hi_b)))
            nw = network.node(w)
            lb = max(lb, nw.psqr_lo + gmax)
            ub = min(ub, nw.psqr_hi + gmin)
        new_nodes[v] = Node(v, base.demand + pend_demand, lb, ub, folded=True)
    core = Network(tuple(new_nodes[v] for v in sorted(new_nodes)),
                   tuple(network.arcs[k] for k in sorted(arcs_alive)),
                   name=network.name)
    return CollapseResult(core, {v: tuple(p) for v, p in groups.items()})


# ---------------------------------------------------------------------------
# single cycle: per-cell problems
# ---------------------------------------------------------------------------

@dataclass
class CellProblem:
    """A cell in scaled coordinates: both the ``phi`` box and the flow interval map to ``[-1, 1]``."""

    cell: EliminationCell
    scaling: AffineScaling
    gset: SemialgebraicSet
    objectives: Tuple[Polynomial, ...]
    phi_set: SemialgebraicSet
    region: PolytopeSet
    _moments: Dict[int, dict] = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, cell: EliminationCell, U: BoxSet) -> "CellProblem":
        m = U.dim
        lo = list(U.lower) + [cell.flow_interval[0]]
        hi = list(U.upper) + [cell.flow_interval[1]]
        sc = AffineScaling.from_bounds(lo, hi)
        gset = normalize_rows(sc.set(cell.constraints))
        objectives = tuple(sc.polynomial(h) for h in cell.h_rows)
        phi_set = normalize_rows(sc.set(cell.constraints.with_inequalities(cell.h_rows)))
        region = cell.uncertainty_cell.affine_image(sc.half[:m], sc.center[:m])
        return cls(cell, sc, gset, objectives, phi_set, region)

    @property
    def index(self) -> int:
        return self.cell.index

    @property
    def full_dimensional(self) -> bool:
        return self.region.is_full_dimensional()

    def moments(self, degree: int) -> dict:
        if degree not in self._moments:
            self._moments[degree] = polytope_moments(self.region, degree)
        return self._moments[degree]

    def volume(self) -> float:
        return float(self.moments(0)[(0,) * self.region.dim])


def _status_name(status: Status, raw: str | None = None) -> str:
    if status == Status.NUMERICAL_FAILURE and raw:
        return f"NumericalFailure({raw})"
    return status.value


def _feasibility_subproblem(cp: CellProblem, i: int, level: int, config: DecideConfig):
    t0 = time.perf_counter()
    if max(psd_side_lengths(cp.gset, level)) > config.max_psd_side:
        return SubproblemReport(cp.index, i, level, None, "TooLarge", 0.0, "feas",
                                "PSD block above the size cap"), None
    res = moment_lower_bound(cp.objectives[i - 1], cp.gset, level, config.solver)
    dt = time.perf_counter() - t0
    obj = res.bound if res.bound is not None else res.solution.approx_objective
    rep = SubproblemReport(cp.index, i, level, obj, _status_name(res.status, res.solution.raw_status),
                           dt, "feas", "repaired dual bound" if res.verified else "")
    return rep, res.bound


def _infeasibility_subproblem(cp: CellProblem, level: int, config: DecideConfig):
    t0 = time.perf_counter()
    if not cp.full_dimensional:
        return SubproblemReport(cp.index, 0, level, 0.0, "Skipped", 0.0, "infeas",
                                "degenerate cell"), None, None
    if max(psd_side_lengths(cp.phi_set, level)) > config.max_psd_side:
        return SubproblemReport(cp.index, 0, level, None, "TooLarge", 0.0, "infeas",
                                "PSD block above the size cap"), None, None
    mom = cp.moments(2 * level)
    m = cp.region.dim
    eps = config.eps_cert * cp.volume()
    # large SOS programs: one attempt first, the fallback chain only if needed
    quick = replace(config.solver, retry=False)
    best = None
    for settings in ((quick, config.solver) if config.solver.retry else (quick,)):
        sep = separation_search(cp.phi_set, level, list(range(m)), mom, settings)
        rep = verify_certificate(sep.certificate, cp.phi_set, mom, eps) if sep.certificate else None
        best = (sep, rep)
        if rep is not None and rep.passed:
            break
        if sep.status in (Status.OPTIMAL, Status.INFEASIBLE):
            break
    sep, rep = best
    dt = time.perf_counter() - t0
    obj = rep.integral if rep is not None else (sep.objective if sep.objective is not None
                                                 else sep.solution.approx_objective)
    note = ""
    if rep is not None and not rep.passed and obj is not None and obj < -eps:
        note = "negative objective but certificate failed verification"
    report = SubproblemReport(cp.index, 0, level, obj, _status_name(sep.status, sep.solution.raw_status),
                              dt, "infeas", note)
    return report, sep.certificate, rep


def _run(tasks, fn, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


class _CycleRun:
    """State of one single-cycle decision, advanced level by level."""

    def __init__(self, network: Network, config: DecideConfig):
        if network.cyclomatic_number() != 1:
            raise TopologyError("expected exactly one cycle")
        self.network = network
        self.config = config
        self.U = network.phi_box()
        self.reduction = choose_spanning_tree(network)
        self.labels = h_rows(network, self.reduction)
        cells = single_cycle_subdivide(network, self.reduction, self.U)
        self.cells = [CellProblem.build(c, self.U) for c in cells]
        self.open = sorted((cp.index, i) for cp in self.cells for i in range(1, len(self.labels) + 1))
        self.confirmed: Dict[Tuple[int, int], Tuple[int, float]] = {}
        self.bounds: Dict[Tuple[int, int], List[Tuple[int, Optional[float]]]] = {}
        self.reports: List[SubproblemReport] = []
        self.reasons: Dict[int, List[str]] = {}

    def feasibility_round(self, level: int) -> bool:
        """Try every open (cell, row) at ``level``; True when nothing is left open."""
        by_index = {cp.index: cp for cp in self.cells}
        tasks = list(self.open)
        results = _run(tasks, lambda key: _feasibility_subproblem(by_index[key[0]], key[1], level,
                                                                   self.config), self.config.threads)
        still_open = []
        for key, (rep, bound) in zip(tasks, results):
            self.reports.append(rep)
            self.bounds.setdefault(key, []).append((level, bound))
            if bound is not None and bound >= self.config.eps_pos:
                self.confirmed[key] = (level, bound)
            else:
                still_open.append(key)
                why = (rep.note or rep.status) if bound is None else f"bound {bound:.6g} not positive"
                self.reasons.setdefault(level, []).append(f"cell {key[0]} row {key[1]}: {why}")
        self.open = still_open
        return not self.open

    def infeasibility_round(self, level: int):
        """Run the separation program on every cell; returns evidence of the first verified certificate."""
        results = _run(self.cells, lambda cp: _infeasibility_subproblem(cp, level, self.config),
                       self.config.threads)
        found = None
        for cp, (rep, cert, ver) in zip(self.cells, results):
            self.reports.append(rep)
            if ver is not None and ver.passed:
                if found is None:
                    found = {"method": "sos", "cell": cp.index, "certificate": cert, "verification": ver,
                             "scaling": cp.scaling, "region": cp.region, "objective": rep.objective}
                continue
            eps = self.config.eps_cert * cp.volume() if cp.full_dimensional else 0.0
            if rep.note:
                why = rep.note
            elif rep.objective is not None and rep.status == Status.OPTIMAL.value and abs(rep.objective) <= max(eps, 1e-8):
                why = "zero obj."
            else:
                why = rep.status if rep.objective is None else f"{rep.status}, objective {rep.objective:.6g}"
            self.reasons.setdefault(level, []).append(f"cell {cp.index} separation: {why}")
        return found


def decide_feasibility(network: Network, U: BoxSet | None = None, levels: Sequence[int] = DEFAULT_LEVELS,
                       config: DecideConfig | None = None) -> Verdict:
    """Feasibility side only, over all requested levels; never returns RobustInfeasible."""
    config = replace(config or DecideConfig(), levels=tuple(levels))
    net = network if U is None else network.with_phi_box(U.lower, U.upper)
    run = _CycleRun(net, config)
    for d in config.levels:
        if run.feasibility_round(d):
            return Verdict(VerdictKind.FEASIBLE, _feasible_evidence(run), run.reports, d, run.reasons)
    return Verdict(VerdictKind.UNDECIDED, _feasible_evidence(run), run.reports, None, run.reasons)


def decide_infeasibility(network: Network, U: BoxSet | None = None, levels: Sequence[int] = DEFAULT_LEVELS,
                         config: DecideConfig | None = None) -> Verdict:
    """Infeasibility side only; RobustInfeasible carries a verified certificate."""
    config = replace(config or DecideConfig(), levels=tuple(levels))
    net = network if U is None else network.with_phi_box(U.lower, U.upper)
    run = _CycleRun(net, config)
    for d in config.levels:
        found = run.infeasibility_round(d)
        if found:
            return Verdict(VerdictKind.INFEASIBLE, found, run.reports, d, run.reasons)
    return Verdict(VerdictKind.UNDECIDED, {}, run.reports, None, run.reasons)


def _feasible_evidence(run: _CycleRun) -> dict:
    return {"method": "moment", "confirmed": dict(sorted(run.confirmed.items())),
            "open": list(run.open), "bounds": dict(sorted(run.bounds.items())),
            "rows": run.labels, "cells": len(run.cells)}


def decide_robust(network: Network, U=None, config: DecideConfig | None = None) -> Verdict:
    """Full pipeline: tree LP, or subtree folding followed by the interleaved cycle methods."""
    config = config or DecideConfig()
    net = network
    if U is not None:
        if isinstance(U, BoxSet):
            net = network.with_phi_box(U.lower, U.upper)
        elif not network.is_tree():
            raise TypeError("cyclic networks need box uncertainty")
    mu = net.cyclomatic_number()
    if mu == 0:
        return decide_tree(net, U if isinstance(U, PolytopeSet) else None)
    if mu > 1:
        raise MultiCycleError(f"{mu} independent cycles; only trees and single cycles are supported")
    idle = _idle_cycle_tree(net)
    if idle is not None:
        return idle
    collapsed = collapse_subtrees(net)
    if collapsed.short_circuit is not None:
        return collapsed.short_circuit
    run = _CycleRun(collapsed.network, config)
    for d in config.levels:
        if config.feasibility and run.feasibility_round(d):
            ev = _feasible_evidence(run)
            ev["attachments"] = collapsed.attachments
            return Verdict(VerdictKind.FEASIBLE, ev, run.reports, d, run.reasons)
        if config.infeasibility:
            found = run.infeasibility_round(d)
            if found:
                found["attachments"] = collapsed.attachments
                found["core"] = collapsed.network
                return Verdict(VerdictKind.INFEASIBLE, found, run.reports, d, run.reasons)
    ev = _feasible_evidence(run)
    ev["attachments"] = collapsed.attachments
    return Verdict(VerdictKind.UNDECIDED, ev, run.reports, None, run.reasons)


def _idle_cycle_tree(network: Network) -> Optional[Verdict]:
    """Decide a cycle that carries no flow through the tree without its nonbasis arc.

    When every ``beta`` on the cycle coincides the unique cycle flow puts
    zero flow on each cycle arc, so dropping one of them changes neither
    flows nor pressure relations. Returns ``None`` for a regular cycle.
    """
    red = choose_spanning_tree(network)
    if np.ptp(red.beta[red.cycle_arcs]) > 1e-12:
        return None
    k = red.nonbasis[0]
    keep = [a for a in range(len(network.arcs)) if a != k]
    tree = replace(network, arcs=tuple(network.arcs[a] for a in keep))
    v = decide_tree(tree)
    ev = dict(v.evidence, dropped_arc=k)
    if ev.get("witness") is not None:
        full = np.full(len(network.arcs), network.arcs[k].phi_lo)
        full[keep] = ev["witness"]
        ev["witness"] = full
    return Verdict(v.kind, ev, v.reports, v.level, v.reasons)


def certificate_witness(verdict: Verdict, network: Network, samples: int = 4096, seed: int = 0):
    """A concrete infeasible ``phi`` near where the certificate polynomial is most negative.

    Works on the network the certificate was built for (the collapsed core
    when pendant subtrees were folded). Returns ``None`` if none of the
    sampled points is infeasible.
    """
    cert = verdict.certificate
    if cert is None:
        return None
    region: PolytopeSet = verdict.evidence["region"]
    sc: AffineScaling = verdict.evidence["scaling"]
    m = region.dim
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, size=(samples * 4, m))
    z = z[region.contains_many(z)][:samples]
    if not len(z):
        return None
    vals = cert.p_in_mask().eval_many(z)
    red = choose_spanning_tree(network)
    for idx in np.argsort(vals)[:64]:
        phi = sc.from_scaled(np.r_[z[idx], 0.0])[:m]
        if not nominal_check(network, red, phi).feasible:
            return phi
    return None


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

@dataclass
class OracleResult:
    all_feasible: bool
    witness: Optional[np.ndarray]          # refined infeasible phi (closest found to the boundary)
    grid_witness: Optional[np.ndarray]     # most violated grid point
    n_points: int
    n_infeasible: int
    max_violation: float


def _oracle_setup(network: Network):
    mu = network.cyclomatic_number()
    if mu > 1:
        raise MultiCycleError("oracle handles trees and single cycles only")
    if any(v.folded and v.psqr_lo > v.psqr_hi for v in network.nodes):
        raise ValueError("oracle needs an unfolded network")
    return choose_spanning_tree(network)


def violations(network: Network, phis, reduction=None) -> np.ndarray:
    """Root-interval violation ``lo - hi`` at every row of ``phis`` (``<= 0`` means feasible)."""
    red = reduction or _oracle_setup(network)
    phis = np.ascontiguousarray(np.atleast_2d(phis), dtype=float)
    if red.nonbasis:
        cyc = np.array(red.cycle_arcs, dtype=np.intp)
        bs = red.beta_sorted()
        q = kernels.cycle_flows(phis, cyc, red.beta[cyc], float(bs[0]), float(bs[-1]))
        flows = q[:, None] * red.lam_matrix[:, 0][None, :] + red.lam_offset[None, :]
    else:
        flows = np.broadcast_to(red.lam_offset, phis.shape)
    B = list(red.basis)
    g = (phis[:, B] * signed_square(flows[:, B])) @ red.path.T
    lb = np.array([network.node(v).psqr_lo for v in red.rows])
    ub = np.array([network.node(v).psqr_hi for v in red.rows])
    r = network.node(red.root)
    return kernels.pressure_violation(np.ascontiguousarray(g), lb, ub, r.psqr_lo, r.psqr_hi)


def _grid_axes(U: BoxSet, resolution: int):
    axes = []
    for lo, hi in zip(U.lower, U.upper):
        if hi <= lo:
            axes.append(np.array([lo]))
        elif resolution <= 1:
            axes.append(np.array([lo, hi]))
        else:
            axes.append(np.linspace(lo, hi, resolution))
    return axes


def oracle_grid(network: Network, U: BoxSet | None = None, resolution: int = 9,
                cap: int = GRID_CAP, refine_steps: int = REFINE_STEPS, tol: float = FEAS_TOL,
                chunk: int = 1 << 15) -> OracleResult:
    """Nominal check on a regular grid over ``U`` plus its corners.

    Resolution 1 means corners only. Any infeasible point is a sound witness;
    an all-feasible grid is evidence, not proof.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    U = network.phi_box() if U is None else U
    net = network.with_phi_box(U.lower, U.upper)
    red = _oracle_setup(net)
    axes = _grid_axes(U, resolution)
    shape = tuple(len(a) for a in axes)
    n_grid = int(np.prod(shape))
    corners = np.array(U.corners())
    extra = 0 if resolution in (1, 2) else len(corners)
    if n_grid + extra > cap:
        raise GridBudgetError(f"{n_grid + extra} grid points exceed the cap {cap}")
    worst, worst_phi, n_bad = -math.inf, None, 0
    feasible_pts = []

    def consume(P):
        nonlocal worst, worst_phi, n_bad
        v = violations(net, P, red)
        bad = v > tol
        n_bad += int(bad.sum())
        k = int(np.argmax(v))
        if v[k] > worst:
            worst, worst_phi = float(v[k]), P[k].copy()
        if (~bad).any() and len(feasible_pts) < 4096:
            feasible_pts.extend(P[~bad][: 4096 - len(feasible_pts)])

    for start in range(0, n_grid, chunk):
        idx = np.unravel_index(np.arange(start, min(n_grid, start + chunk)), shape)
        consume(np.column_stack([axes[d][idx[d]] for d in range(len(axes))]))
    if extra:
        consume(corners)
    n_points = n_grid + extra
    if worst <= tol:
        return OracleResult(True, None, None, n_points, 0, worst)
    witness = worst_phi
    if feasible_pts and refine_steps > 0:
        F = np.array(feasible_pts)
        span = np.maximum(np.array(U.upper) - np.array(U.lower), 1e-300)
        near = F[np.argmin((((F - worst_phi) / span) ** 2).sum(axis=1))]
        bad_pt, good_pt = worst_phi.copy(), near
        for _ in range(refine_steps):
            mid = 0.5 * (bad_pt + good_pt)
            if violations(net, mid[None, :], red)[0] > tol:
                bad_pt = mid
            else:
                good_pt = mid
        witness = bad_pt
    return OracleResult(False, witness, worst_phi, n_points, n_bad, worst)


# ---------------------------------------------------------------------------
# sweeps over U(c)
# ---------------------------------------------------------------------------

@dataclass
class SweepPoint:
    c: float
    kind: VerdictKind
    level: Optional[int]
    verdict: Verdict


@dataclass
class SweepSummary:
    points: List[SweepPoint]
    levels: Tuple[int, ...]
    c_feas: Dict[int, Optional[float]]
    c_infeas: Dict[int, Optional[float]]

    def gap(self, level: int) -> Optional[float]:
        a, b = self.c_feas.get(level), self.c_infeas.get(level)
        return None if a is None or b is None else round(b - a, 10)


def sweep_values(c_from: float, c_to: float, step: float) -> List[float]:
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(math.floor((c_to - c_from) / step + 1e-9))
    return [round(c_from + k * step, 10) for k in range(max(n, 0) + 1)]


def sweep_u_scale(network: Network, cs: Sequence[float], config: DecideConfig | None = None) -> SweepSummary:
    """Decide ``U(c) = [1, c]^arcs`` for every ``c`` and summarize the gap per level.

    ``c_feas[L]`` is the largest ``c`` proven feasible using levels ``<= L``,
    ``c_infeas[L]`` the smallest ``c`` certified infeasible using levels ``<= L``.
    """
    config = config or DecideConfig()
    points = []
    for c in cs:
        v = decide_robust(network.with_u_scale(c), None, config)
        points.append(SweepPoint(float(c), v.kind, v.level, v))
    c_feas, c_infeas = {}, {}
    for L in config.levels:
        fe = [p.c for p in points if p.kind == VerdictKind.FEASIBLE and (p.level or 0) <= L]
        inf = [p.c for p in points if p.kind == VerdictKind.INFEASIBLE and (p.level or 0) <= L]
        c_feas[L] = max(fe) if fe else None
        c_infeas[L] = min(inf) if inf else None
    return SweepSummary(points, config.levels, c_feas, c_infeas)
