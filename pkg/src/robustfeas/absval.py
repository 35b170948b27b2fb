"""Removing the signed squares ``x|x|`` from the network constraints.

Three routes:

* :func:`eliminate_binary` -- one binary-like variable per signed square,
  ``y = (2b - 1) x^2``, ``(b - 1) M <= x <= b M``, ``b^2 = b``.
* :func:`enumerate_orthant_cells` -- sign patterns of the arc flows over the
  nonbasis-flow space (at most two nonbasis arcs).
* :func:`single_cycle_subdivide` -- for one cycle, split the coefficient box
  into polyhedral cells on which every flow direction is fixed.

Polynomial descriptions use the variable order ``(phi_1, ..., phi_m, q_N...)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .gasnet import Network, Reduction, TopologyError, cycle_h_coeffs, signed_square
from .poly import Polynomial
from .semialg import BoxSet, PolytopeSet, SemialgebraicSet

EMPTY_TOL = 1e-9
MAX_ORTHANT_NONBASIS = 2


class EnumerationCapError(ValueError):
    pass


# ---------------------------------------------------------------------------
# constraint families
# ---------------------------------------------------------------------------

def h_rows(network: Network, reduction: Reduction):
    """Index triples of the pressure-bound rows, in reporting order.

    Each entry is ``(kind, i, j)`` with node ids; kinds are ``"root_lo"``
    (``ub_i + g_i - lb_root >= 0``), ``"root_hi"`` (``ub_root - lb_i - g_i >= 0``)
    and ``"pair"`` (``ub_i + g_i - lb_j - g_j >= 0``). The two root rows of a
    node are adjacent; pairs list the lower-bound node ``j`` in the outer loop.
    """
    rows = []
    for v in reduction.rows:
        rows.append(("root_lo", v, reduction.root))
        rows.append(("root_hi", v, reduction.root))
    for j in reduction.rows:
        for i in reduction.rows:
            if i != j:
                rows.append(("pair", i, j))
    return rows


def h_row_polynomials(network: Network, reduction: Reduction, g_polys: Sequence[Polynomial]):
    """The pressure-bound rows as polynomials, given ``g`` as polynomials."""
    pos = {v: k for k, v in enumerate(reduction.rows)}
    root = network.node(reduction.root)
    out = []
    for kind, i, j in h_rows(network, reduction):
        ni = network.node(i)
        gi = g_polys[pos[i]]
        if kind == "root_lo":
            out.append(gi + (ni.psqr_hi - root.psqr_lo))
        elif kind == "root_hi":
            out.append((root.psqr_hi - ni.psqr_lo) - gi)
        else:
            nj = network.node(j)
            out.append(gi - g_polys[pos[j]] + (ni.psqr_hi - nj.psqr_lo))
    return out


def h_row_values(network: Network, reduction: Reduction, g) -> np.ndarray:
    """Numeric row values at a given ``g`` vector."""
    pos = {v: k for k, v in enumerate(reduction.rows)}
    root = network.node(reduction.root)
    vals = []
    for kind, i, j in h_rows(network, reduction):
        ni = network.node(i)
        gi = g[pos[i]]
        if kind == "root_lo":
            vals.append(gi + ni.psqr_hi - root.psqr_lo)
        elif kind == "root_hi":
            vals.append(root.psqr_hi - ni.psqr_lo - gi)
        else:
            nj = network.node(j)
            vals.append(gi - g[pos[j]] + ni.psqr_hi - nj.psqr_lo)
    return np.array(vals)


def _flow_polys(reduction: Reduction) -> List[Polynomial]:
    """Arc flows as affine polynomials in the ``(phi, q_N)`` variable space."""
    m = reduction.n_arcs
    k = len(reduction.nonbasis)
    nv = m + k
    out = []
    for a in range(m):
        coeffs = [0.0] * nv
        for j in range(k):
            coeffs[m + j] = reduction.lam_matrix[a, j]
        out.append(Polynomial.linear(coeffs, reduction.lam_offset[a]))
    return out


def _phi(nv: int, a: int) -> Polynomial:
    return Polynomial.variable(nv, a)


def g_polynomials(reduction: Reduction, signs: Sequence[int]) -> List[Polynomial]:
    """``g_i`` with every ``f(q_a)`` replaced by ``sign_a * q_a^2``."""
    m = reduction.n_arcs
    nv = m + len(reduction.nonbasis)
    flows = _flow_polys(reduction)
    drops = {a: _phi(nv, a) * (flows[a] * flows[a]) * float(signs[a]) for a in reduction.basis}
    out = []
    for row in reduction.path:
        p = Polynomial.zero(nv)
        for coef, a in zip(row, reduction.basis):
            if abs(coef) > 0:
                p = p + drops[a] * float(coef)
        out.append(p)
    return out


def cycle_equations(reduction: Reduction, signs: Sequence[int]) -> List[Polynomial]:
    """``A_N^T g - Phi_N F_N(q_N) = 0`` with fixed signs (one row per nonbasis arc)."""
    m = reduction.n_arcs
    nv = m + len(reduction.nonbasis)
    flows = _flow_polys(reduction)
    g = g_polynomials(reduction, signs)
    out = []
    for j, a in enumerate(reduction.nonbasis):
        p = Polynomial.zero(nv)
        for coef, gi in zip(reduction.A_N[:, j], g):
            if coef:
                p = p + gi * float(coef)
        p = p - _phi(nv, a) * (flows[a] * flows[a]) * float(signs[a])
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# binary elimination
# ---------------------------------------------------------------------------

def eliminate_binary(set_: SemialgebraicSet, abs_args: Sequence[Polynomial], bigM: float) -> SemialgebraicSet:
    """Replace signed squares by polynomial constraints with 0/1 variables.

    ``set_`` is expressed in ``base + k`` variables where the last ``k``
    variables ``y_1..y_k`` stand for ``f(x_1)..f(x_k)`` and ``abs_args[t]``
    is ``x_t`` (a polynomial in the same space, not involving the ``y``).
    The result appends ``b_1..b_k`` and adds, per argument,
    ``y = (2b - 1) x^2``, ``x - (b - 1) M >= 0``, ``b M - x >= 0``, ``b^2 - b = 0``.
    """
    if bigM <= 0:
        raise ValueError("bigM must be positive")
    k = len(abs_args)
    nv = set_.nvars
    base = nv - k
    if base < 0:
        raise ValueError("set has fewer variables than signed-square placeholders")
    new_nv = nv + k
    pos = list(range(nv))
    eqs = [p.embed(new_nv, pos) for p in set_.equalities]
    ineqs = [p.embed(new_nv, pos) for p in set_.inequalities]
    for t, x in enumerate(abs_args):
        if x.nvars != nv:
            raise ValueError("abs argument lives in a different variable space")
        if any(x.degree_in(base + s) > 0 for s in range(k)):
            raise ValueError("abs arguments may not involve the placeholder variables")
        xe = x.embed(new_nv, pos)
        y = Polynomial.variable(new_nv, base + t)
        b = Polynomial.variable(new_nv, nv + t)
        eqs.append(y - (2.0 * b - 1.0) * xe * xe)
        eqs.append(b * b - b)
        ineqs.append(xe - (b - 1.0) * bigM)
        ineqs.append(b * bigM - xe)
    return SemialgebraicSet(new_nv, tuple(eqs), tuple(ineqs))


def default_bigM(network: Network, reduction: Reduction) -> float:
    inject = sum(max(v.demand, 0.0) for v in network.nodes)
    if reduction.beta is not None and reduction.cycle_arcs:
        bs = reduction.beta_sorted()
        return inject + float(bs[-1] - bs[0])
    return inject


def binary_formulation(network: Network, reduction: Reduction, box: BoxSet,
                       bigM: Optional[float] = None):
    """Abs-free description via binaries.

    Variables: ``phi (m)``, ``q_N (k)``, ``y (m)``, ``b (m)``. Returns
    ``(G-set, H-rows)``; the G-set contains the coefficient box and the
    nonbasis-flow bounds ``|q_N| <= M``.
    """
    m = reduction.n_arcs
    k = len(reduction.nonbasis)
    M = default_bigM(network, reduction) if bigM is None else float(bigM)
    nv = m + k + m
    flows = [p.embed(nv, list(range(m + k))) for p in _flow_polys(reduction)]
    ys = [Polynomial.variable(nv, m + k + a) for a in range(m)]
    phis = [Polynomial.variable(nv, a) for a in range(m)]
    g = []
    for row in reduction.path:
        p = Polynomial.zero(nv)
        for coef, a in zip(row, reduction.basis):
            if coef:
                p = p + phis[a] * ys[a] * float(coef)
        g.append(p)
    eqs = []
    for j, a in enumerate(reduction.nonbasis):
        p = Polynomial.zero(nv)
        for coef, gi in zip(reduction.A_N[:, j], g):
            if coef:
                p = p + gi * float(coef)
        eqs.append(p - phis[a] * ys[a])
    ineqs = box.inequalities(nv, list(range(m)))
    for j in range(k):
        x = Polynomial.variable(nv, m + j)
        ineqs += [x + M, M - x]
    base = SemialgebraicSet(nv, tuple(eqs), tuple(ineqs))
    full = eliminate_binary(base, flows, M)
    rows = [r.embed(full.nvars, list(range(nv))) for r in h_row_polynomials(network, reduction, g)]
    return full, rows


# ---------------------------------------------------------------------------
# orthant cells
# ---------------------------------------------------------------------------

def enumerate_orthant_cells(reduction: Reduction, tol: float = EMPTY_TOL) -> List[Tuple[int, ...]]:
    """Sign vectors ``s`` with a full-dimensional region ``{s_a lambda_a(q_N) > 0}``.

    Arcs whose flow is constant get their fixed sign (zero-flow arcs get +1).
    """
    k = len(reduction.nonbasis)
    if k > MAX_ORTHANT_NONBASIS:
        raise EnumerationCapError(f"{k} nonbasis arcs exceed the cap of {MAX_ORTHANT_NONBASIS}")
    L, c = reduction.lam_matrix, reduction.lam_offset
    varying = [a for a in range(L.shape[0]) if np.any(np.abs(L[a]) > 0)]
    fixed = {a: (1 if c[a] >= 0 else -1) for a in range(L.shape[0]) if a not in varying}
    if k == 0:
        return [tuple(fixed[a] for a in range(L.shape[0]))]
    # distinct hyperplanes only; parallel duplicates share the sign
    out = []
    for pattern in itertools.product((1, -1), repeat=len(varying)):
        # s_a (L_a x + c_a) >= r with slack r maximized; full-dimensional iff r > tol
        A_ub = []
        b_ub = []
        for s, a in zip(pattern, varying):
            nrm = np.linalg.norm(L[a])
            A_ub.append(np.concatenate([-s * L[a] / nrm, [1.0]]))
            b_ub.append(s * c[a] / nrm)
        cost = np.zeros(k + 1)
        cost[-1] = -1.0
        res = linprog(cost, A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                      bounds=[(None, None)] * k + [(None, 1.0)], method="highs")
        if res.status == 0 and -res.fun > tol:
            signs = dict(fixed)
            signs.update(zip(varying, pattern))
            out.append(tuple(signs[a] for a in range(L.shape[0])))
    return out


def orthant_region(reduction: Reduction, signs: Sequence[int]) -> List[Polynomial]:
    """``sign_a * lambda_a(q_N) >= 0`` rows for the varying arcs."""
    flows = _flow_polys(reduction)
    return [f * float(s) for f, s, row in zip(flows, signs, reduction.lam_matrix) if np.any(row)]


# ---------------------------------------------------------------------------
# single cycle shortcut
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EliminationCell:
    index: int
    uncertainty_cell: PolytopeSet
    sign_pattern: Tuple[int, ...]        # sign of f(q_a), i.e. of the arc flow, per arc
    constraints: SemialgebraicSet        # G-set of the cell (equality + bounds), vars (phi, q)
    h_rows: Tuple[Polynomial, ...]       # pressure rows, same variables
    flow_interval: Tuple[float, float]

    @property
    def nvars(self) -> int:
        return self.constraints.nvars


def cell_signs(reduction: Reduction, lo: float, hi: float) -> Tuple[int, ...]:
    """Arc flow signs when the cycle flow ranges over ``[lo, hi]``."""
    mid = 0.5 * (lo + hi)
    q = reduction.flows([mid])
    return tuple(1 if v > 0 else -1 if v < 0 else 1 for v in q)


def single_cycle_subdivide(network: Network, reduction: Reduction, U: BoxSet,
                           tol: float = EMPTY_TOL) -> List[EliminationCell]:
    """One cell per consecutive pair of sorted ``beta`` values whose
    coefficient region ``{h(phi, b_hi) <= 0 <= h(phi, b_lo)} within U`` is nonempty."""
    if not reduction.is_single_cycle:
        raise TopologyError("single-cycle subdivision needs exactly one nonbasis arc")
    if U.dim != reduction.n_arcs:
        raise ValueError("uncertainty box dimension differs from the arc count")
    if np.any(np.array(U.lower) <= 0):
        raise ValueError("coefficient box must be strictly positive")
    m = reduction.n_arcs
    nv = m + 1
    bs = np.unique(reduction.beta_sorted())
    if len(bs) < 2:
        raise ValueError("all beta coincide: zero demand on the cycle")
    box = U.as_polytope()
    cells = []
    for lo, hi in zip(bs[:-1], bs[1:]):
        h_lo = cycle_h_coeffs(reduction, lo)
        h_hi = cycle_h_coeffs(reduction, hi)
        poly = box.add_halfspace(-h_lo, 0.0).add_halfspace(h_hi, 0.0)
        if poly.is_empty(tol):
            continue
        signs = cell_signs(reduction, lo, hi)
        eq = cycle_equations(reduction, signs)
        ineqs = U.inequalities(nv, list(range(m)))
        ineqs.append(Polynomial(nv, {_unit(nv, a): c for a, c in enumerate(h_lo)}))
        ineqs.append(Polynomial(nv, {_unit(nv, a): -c for a, c in enumerate(h_hi)}))
        qv = Polynomial.variable(nv, m)
        ineqs += [qv - float(lo), float(hi) - qv]
        gset = SemialgebraicSet(nv, tuple(eq), tuple(ineqs))
        rows = h_row_polynomials(network, reduction, g_polynomials(reduction, signs))
        cells.append(EliminationCell(len(cells), poly, signs, gset, tuple(rows), (float(lo), float(hi))))
    return cells


def _unit(nv: int, a: int):
    e = [0] * nv
    e[a] = 1
    return tuple(e)


def cell_of(cells: Sequence[EliminationCell], phi, tol: float = 1e-9) -> List[int]:
    return [c.index for c in cells if c.uncertainty_cell.contains(phi, tol)]
