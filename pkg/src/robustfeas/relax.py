"""Lasserre moment relaxations and SOS membership programs.

Both builders emit a :class:`~robustfeas.conic.ConicProblem`:

* :func:`build_moment_relaxation` is the moment side of ``min f over S``;
  its optimum is a lower bound on the true minimum that is non-decreasing
  in the level.
* :func:`build_sos_membership` searches for a polynomial ``p`` in a subset of
  the variables with ``p = sigma_0 + sum sigma_i g_i + sum tau_k e_k`` (SOS
  ``sigma``, free ``tau``) minimizing ``sum p_alpha m_alpha`` for a given
  moment table. Every coefficient of ``p`` is boxed to ``[-1, 1]``, so the
  program is bounded and a negative optimum is a separation certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import Cone, ConicProblem, ConicSolution, SolverSettings, Status, smat, svec_pairs
from .poly import Monomial, Polynomial, monomials
from .semialg import SemialgebraicSet

SQRT2 = math.sqrt(2.0)
EIG_FLOOR = -1e-7
RESIDUAL_TOL = 1e-6


class LevelTooSmallError(ValueError):
    """The requested level cannot accommodate the polynomial degrees present."""


def _half_up(k: int) -> int:
    return (k + 1) // 2


def minimum_level(set_: SemialgebraicSet, objective: Polynomial | None = None) -> int:
    degs = [p.degree() for p in set_.equalities + set_.inequalities]
    if objective is not None:
        degs.append(objective.degree())
    return max(1, max((_half_up(d) for d in degs), default=1))


def _check_level(set_: SemialgebraicSet, level: int, objective: Polynomial | None = None):
    need = minimum_level(set_, objective)
    if level < need:
        raise LevelTooSmallError(f"level {level} < required {need} for the degrees present")


def _add(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


class _Rows:
    """COO accumulator for constraint rows."""

    def __init__(self):
        self.r: List[int] = []
        self.c: List[int] = []
        self.v: List[float] = []
        self.b: List[float] = []

    @property
    def n(self) -> int:
        return len(self.b)

    def new_row(self, rhs: float = 0.0) -> int:
        self.b.append(rhs)
        return len(self.b) - 1

    def put(self, row: int, col: int, val: float):
        self.r.append(row)
        self.c.append(col)
        self.v.append(val)

    def matrix(self, ncols: int) -> sp.csc_matrix:
        return sp.csc_matrix((self.v, (self.r, self.c)), shape=(self.n, ncols))


# ---------------------------------------------------------------------------
# moment side
# ---------------------------------------------------------------------------

def build_moment_relaxation(objective: Polynomial, set_: SemialgebraicSet, level: int) -> ConicProblem:
    """Order-``level`` moment relaxation of ``min objective over set_``.

    Variables are the pseudo-moments ``y_gamma`` for every monomial of degree
    at most ``2*level`` (graded-lex order), with ``y_0 = 1``.
    """
    if objective.nvars != set_.nvars:
        raise ValueError("objective and set live in different variable spaces")
    _check_level(set_, level, objective)
    nv = set_.nvars
    basis = monomials(nv, 2 * level)
    index = {a: i for i, a in enumerate(basis)}
    zero, psd = _Rows(), _Rows()
    cones_psd: List[Cone] = []
    weights: List[float] = []  # ||g||_1 per localizing block

    r = zero.new_row(1.0)
    zero.put(r, index[(0,) * nv], 1.0)
    for e in set_.equalities:
        for beta in monomials(nv, 2 * level - e.degree()):
            r = zero.new_row(0.0)
            for alpha, c in e.items():
                zero.put(r, index[_add(alpha, beta)], c)

    def localizing(g: Polynomial, order: int):
        side = monomials(nv, order)
        for i, j in svec_pairs(len(side)):
            r = psd.new_row(0.0)
            w = 1.0 if i == j else SQRT2
            base = _add(side[i], side[j])
            for alpha, c in g.items():
                psd.put(r, index[_add(alpha, base)], -w * c)
        cones_psd.append(Cone("psd", len(side)))
        weights.append(sum(abs(c) for _, c in g.items()))

    localizing(Polynomial.constant(nv, 1.0), level)
    for g in set_.inequalities:
        order = level - _half_up(g.degree())
        if g.degree() <= 0:
            # constant inequality: infeasible set if negative, otherwise vacuous
            if g.coeff((0,) * nv) < 0:
                r = zero.new_row(1.0)  # 0 * y = 1 makes the problem infeasible
            continue
        localizing(g, order)

    A = sp.vstack([zero.matrix(len(basis)), psd.matrix(len(basis))]).tocsc()
    b = np.array(zero.b + psd.b)
    c = objective.to_vector(basis)
    cones = [Cone("zero", zero.n)] + cones_psd
    return ConicProblem(c, A, b, cones, labels={"kind": "moment", "basis": basis, "level": level,
                                                     "weights": weights})


@dataclass
class BoundResult:
    level: int
    status: Status
    bound: Optional[float]
    solution: ConicSolution
    moments: Optional[Dict[Monomial, float]] = None
    verified: bool = False  # bound came from a repaired dual iterate


def verified_dual_bound(problem: ConicProblem, solution: ConicSolution) -> Optional[float]:
    """A lower bound on ``min f over S`` read off any dual iterate ``z``.

    For a point ``u`` of ``S`` its moment vector ``v`` gives a slack in the
    cone, so ``f(u) = -b.z + z.s + r.v`` with ``r = c + A^T z``. Negative
    eigenvalues of each dual block and the residual ``r`` are charged
    against ``|v_alpha| <= 1``, which needs ``S`` inside ``[-1, 1]^n``.
    """
    z = solution.z
    if z is None or not len(z) or not np.all(np.isfinite(z)):
        return None
    r = problem.c + problem.A.T @ z
    bound = -float(problem.b @ z) + problem.objective_offset - float(np.abs(r).sum())
    psd = [(k, off) for k, off in zip(problem.cones, problem.row_offsets()) if k.kind == "psd"]
    for (k, off), w in zip(psd, problem.labels["weights"]):
        Z = smat(z[off:off + k.rows], k.size)
        lam = float(np.linalg.eigvalsh(Z)[0])
        if lam < 0:
            # trace of the localizing block at u is g(u) |m(u)|^2 <= ||g||_1 * side
            bound += lam * w * k.size
    return bound


def moment_lower_bound(objective: Polynomial, set_: SemialgebraicSet, level: int,
                       settings: SolverSettings | None = None) -> BoundResult:
    """Solve the moment relaxation and return the bound with the first-order moments.

    A solve that stalls short of full accuracy still yields a bound through
    :func:`verified_dual_bound`; the fallback chain runs only when that
    repaired bound is not positive.
    """
    settings = settings or SolverSettings()
    prob = build_moment_relaxation(objective, set_, level)
    attempts = [settings]
    if settings.retry:
        attempts = [replace(settings, retry=False), settings]
    for s in attempts:
        sol = conic.solve(prob, s)
        if sol.status != Status.NUMERICAL_FAILURE:
            break
        repaired = verified_dual_bound(prob, sol)
        if repaired is not None and repaired > 0:
            return BoundResult(level, sol.status, repaired, sol, None, verified=True)
    moments = None
    if sol.status == Status.OPTIMAL:
        moments = {a: float(v) for a, v in zip(prob.labels["basis"], sol.x) if sum(a) <= 1}
    # an infeasible relaxation means the set itself is empty: the bound is +inf
    bound = sol.objective if sol.status == Status.OPTIMAL else (
        math.inf if sol.status == Status.INFEASIBLE else None)
    return BoundResult(level, sol.status, bound, sol, moments)


@dataclass
class SosLayout:
    nvars: int
    level: int
    p_basis: Tuple[Monomial, ...]
    gram_bases: List[Tuple[Monomial, ...]]  # [sigma_0, sigma_1 .. sigma_m]
    gram_offsets: List[int]
    tau_bases: List[Tuple[Monomial, ...]]
    tau_offsets: List[int]
    nvars_total: int


@dataclass
class SosCertificate:
    """``p = sigma_0 + sum_i sigma_i g_i + sum_k tau_k e_k`` with PSD Gram matrices."""

    p: Polynomial
    grams: List[np.ndarray]
    gram_bases: List[Tuple[Monomial, ...]]
    taus: List[Polynomial]
    integral: float
    level: int
    mask: Tuple[int, ...]

    def sigma(self, k: int) -> Polynomial:
        G, basis = self.grams[k], self.gram_bases[k]
        nv = self.p.nvars
        terms: Dict[Monomial, float] = {}
        for i, a in enumerate(basis):
            for j, b in enumerate(basis):
                key = _add(a, b)
                terms[key] = terms.get(key, 0.0) + G[i, j]
        return Polynomial(nv, terms)

    def p_in_mask(self) -> Polynomial:
        """``p`` as a polynomial in the masked variables only."""
        return self.p.restrict(self.mask)


def _mask_ok(alpha: Monomial, mask) -> bool:
    return all(e == 0 for i, e in enumerate(alpha) if i not in mask)


def build_sos_membership(set_: SemialgebraicSet, level: int, mask: Sequence[int],
                         objective_moments: Dict[Monomial, float]) -> ConicProblem:
    """Minimize ``sum_alpha p_alpha m_alpha`` over ``p`` in the level-``level``
    truncated quadratic module of ``set_``, with ``p`` depending only on the
    variables listed in ``mask`` and ``|p_alpha| <= 1``.

    ``objective_moments`` is keyed by monomials in the masked variables.
    """
    nv = set_.nvars
    mask = tuple(sorted(set(mask)))
    if not mask or any(not 0 <= i < nv for i in mask):
        raise ValueError(f"mask {mask} inconsistent with {nv} variables")
    _check_level(set_, level)
    full = monomials(nv, 2 * level)
    row_of = {a: i for i, a in enumerate(full)}
    p_basis = tuple(a for a in full if _mask_ok(a, mask))
    c_parts = []
    for a in p_basis:
        key = tuple(a[i] for i in mask)
        try:
            c_parts.append(float(objective_moments[key]))
        except KeyError:
            raise KeyError(f"missing moment for monomial {key}") from None

    col = len(p_basis)
    gram_bases, gram_offsets = [], []
    mults = [Polynomial.constant(nv, 1.0)] + [g for g in set_.inequalities if g.degree() > 0]
    for g in mults:
        order = level - _half_up(g.degree())
        basis = monomials(nv, order)
        gram_bases.append(basis)
        gram_offsets.append(col)
        k = len(basis)
        col += k * (k + 1) // 2
    tau_bases, tau_offsets = [], []
    for e in set_.equalities:
        basis = monomials(nv, 2 * level - e.degree())
        tau_bases.append(basis)
        tau_offsets.append(col)
        col += len(basis)
    ncols = col

    zero = _Rows()
    for _ in full:
        zero.new_row(0.0)
    for j, a in enumerate(p_basis):
        zero.put(row_of[a], j, 1.0)
    for g, basis, off in zip(mults, gram_bases, gram_offsets):
        for k, (i, j) in enumerate(svec_pairs(len(basis))):
            w = 1.0 if i == j else SQRT2
            base = _add(basis[i], basis[j])
            for alpha, cg in g.items():
                zero.put(row_of[_add(alpha, base)], off + k, -w * cg)
    for e, basis, off in zip(set_.equalities, tau_bases, tau_offsets):
        for k, beta in enumerate(basis):
            for alpha, ce in e.items():
                zero.put(row_of[_add(alpha, beta)], off + k, -ce)

    box = _Rows()
    for j in range(len(p_basis)):
        box.put(box.new_row(1.0), j, 1.0)
        box.put(box.new_row(1.0), j, -1.0)

    psd = _Rows()
    cones_psd = []
    for basis, off in zip(gram_bases, gram_offsets):
        k = len(basis)
        for t in range(k * (k + 1) // 2):
            psd.put(psd.new_row(0.0), off + t, -1.0)
        cones_psd.append(Cone("psd", k))

    # constant negative inequalities: the set is empty; any p is allowed,
    # which the caller sees as a strongly negative optimum
    A = sp.vstack([zero.matrix(ncols), box.matrix(ncols), psd.matrix(ncols)]).tocsc()
    b = np.array(zero.b + box.b + psd.b)
    c = np.zeros(ncols)
    c[: len(p_basis)] = c_parts
    cones = [Cone("zero", zero.n), Cone("nonneg", box.n)] + cones_psd
    layout = SosLayout(nv, level, p_basis, gram_bases, gram_offsets, tau_bases, tau_offsets, ncols)
    return ConicProblem(c, A, b, cones, labels={
        "kind": "sos", "layout": layout, "mask": mask, "multipliers": mults,
        "equalities": list(set_.equalities),
    })


def extract_certificate(problem: ConicProblem, solution: ConicSolution,
                        moments: Dict[Monomial, float] | None = None) -> Optional[SosCertificate]:
    """Read ``p``, the Gram matrices and the equality multipliers off a solve.

    The leftover coefficient residual
    of the identity is then folded into the ``sigma_0`` Gram matrix, so the
    identity holds to round-off. Any finished
    iterate is accepted; whether it certifies anything is decided by
    :func:`verify_certificate`, not here.
    """
    if solution.x is None or solution.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return None
    lay: SosLayout = problem.labels["layout"]
    x = solution.x
    if not np.all(np.isfinite(x)):
        return None
    p = Polynomial(lay.nvars, dict(zip(lay.p_basis, x[: len(lay.p_basis)])))
    grams = []
    for basis, off in zip(lay.gram_bases, lay.gram_offsets):
        k = len(basis)
        grams.append(smat(x[off: off + k * (k + 1) // 2], k))
    taus = [Polynomial(lay.nvars, dict(zip(basis, x[off: off + len(basis)])))
            for basis, off in zip(lay.tau_bases, lay.tau_offsets)]
    if moments is not None:
        mask = problem.labels["mask"]
        integral = float(sum(c * moments[tuple(a[i] for i in mask)] for a, c in p.items()))
    else:
        integral = float(problem.c @ x)
    cert = SosCertificate(p, grams, list(lay.gram_bases), taus, integral, lay.level,
                          problem.labels["mask"])
    _absorb_residual(cert, problem.labels["multipliers"], problem.labels["equalities"])
    return cert


def _identity_residual(cert: SosCertificate, mults, equalities) -> Polynomial:
    rhs = Polynomial.zero(cert.p.nvars)
    for k, g in enumerate(mults):
        rhs = rhs + cert.sigma(k) * g
    for tau, e in zip(cert.taus, equalities):
        rhs = rhs + tau * e
    return cert.p - rhs


def _absorb_residual(cert: SosCertificate, mults, equalities) -> None:
    """Push ``p - (sigma_0 + ...)`` into the ``sigma_0`` Gram matrix in place."""
    basis = cert.gram_bases[0]
    slot: Dict[Monomial, Tuple[int, int]] = {}
    for i, a in enumerate(basis):
        for j in range(i, len(basis)):
            key = _add(a, basis[j])
            if key not in slot or i == j:
                slot[key] = (i, j)
    G = cert.grams[0]
    for gamma, r in _identity_residual(cert, mults, equalities).items():
        if gamma not in slot:
            continue
        i, j = slot[gamma]
        if i == j:
            G[i, i] += r
        else:
            G[i, j] += 0.5 * r
            G[j, i] += 0.5 * r


@dataclass
class VerificationReport:
    """Outcome of :func:`verify_certificate`.

    ``min_eigenvalue`` is the most negative Gram eigenvalue divided by
    ``max(1, ||G||_2)`` of its block. ``error_bound`` is a guaranteed bound
    on how far below zero ``p`` can dip on the set (negative eigenvalue mass
    plus the l1 coefficient residual, both evaluated over the unit box).
    """

    psd_ok: bool
    residual_ok: bool
    integral_ok: bool
    min_eigenvalue: float
    residual: float
    integral: float
    threshold: float
    error_bound: float = 0.0
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.psd_ok and self.residual_ok and self.integral_ok


def certificate_residual(cert: SosCertificate, set_: SemialgebraicSet) -> float:
    """Max-norm coefficient residual of ``p - sigma_0 - sum sigma_i g_i - sum tau_k e_k``."""
    mults = [Polynomial.constant(set_.nvars, 1.0)] + [g for g in set_.inequalities if g.degree() > 0]
    return _identity_residual(cert, mults, set_.equalities).max_abs_coeff()


def verify_certificate(cert: SosCertificate, set_: SemialgebraicSet, moments: Dict[Monomial, float],
                       eps_cert: float = 1e-6, eig_floor: float = EIG_FLOOR,
                       residual_tol: float = RESIDUAL_TOL) -> VerificationReport:
    """Recheck a certificate from scratch.

    Three tests, all required:

    * every Gram block has ``lambda_min >= eig_floor * max(1, ||G||_2)``;
    * the identity's max-norm coefficient residual is at most ``residual_tol``;
    * ``sum p_alpha m_alpha + E * m_0 < -eps_cert``, where ``E`` bounds the
      damage the first two imperfections can do.

    ``E`` assumes the set lies in the unit box ``[-1, 1]^n``, which holds for
    every scaled cell description the decider produces. With ``E`` included
    the conclusion ``p < 0`` somewhere on the cell is rigorous up to the
    floating-point evaluation of the checks themselves.
    """
    notes = []
    mults = [Polynomial.constant(set_.nvars, 1.0)] + [g for g in set_.inequalities if g.degree() > 0]
    if cert.p.nvars != set_.nvars or len(cert.grams) != len(mults) or len(cert.taus) != len(set_.equalities):
        notes.append("certificate shape does not match the set")
        return VerificationReport(False, False, False, math.nan, math.inf, math.nan, -eps_cert,
                                  math.inf, notes)
    rel_eig, bound = 0.0, 0.0
    for G, g in zip(cert.grams, mults):
        if not G.size:
            continue
        ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        scale = max(1.0, float(np.abs(ev).max()))
        rel_eig = min(rel_eig, float(ev[0]) / scale)
        if ev[0] < 0:
            # sigma >= lambda_min * |z_B|^2 >= lambda_min * len(B) on the unit box
            bound += -float(ev[0]) * len(G) * sum(abs(c) for _, c in g.items())
    r = _identity_residual(cert, mults, set_.equalities)
    residual = r.max_abs_coeff()
    bound += sum(abs(c) for _, c in r.items())
    pu = cert.p_in_mask()
    try:
        integral = float(sum(c * moments[a] for a, c in pu.items()))
        mass = float(moments[(0,) * pu.nvars])
    except KeyError as exc:
        notes.append(f"missing moment {exc}")
        integral, mass = math.nan, math.nan
    return VerificationReport(
        psd_ok=rel_eig >= eig_floor,
        residual_ok=residual <= residual_tol,
        integral_ok=bool(integral + bound * mass < -eps_cert),
        min_eigenvalue=rel_eig,
        residual=residual,
        integral=integral,
        threshold=-eps_cert,
        error_bound=bound,
        notes=notes,
    )


@dataclass
class SeparationResult:
    level: int
    status: Status
    objective: Optional[float]
    certificate: Optional[SosCertificate]
    solution: ConicSolution


def separation_search(set_: SemialgebraicSet, level: int, mask: Sequence[int],
                      moments: Dict[Monomial, float],
                      settings: SolverSettings | None = None) -> SeparationResult:
    prob = build_sos_membership(set_, level, mask, moments)
    sol = conic.solve(prob, settings)
    cert = extract_certificate(prob, sol, moments)
    return SeparationResult(level, sol.status, sol.objective, cert, sol)


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineScaling:
    """``x = center + half * z`` mapping ``z in [-1, 1]^n`` onto a box."""

    center: Tuple[float, ...]
    half: Tuple[float, ...]

    @classmethod
    def from_bounds(cls, lower, upper) -> "AffineScaling":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        half = 0.5 * (hi - lo)
        half[half <= 0] = 1.0  # degenerate direction: plain shift
        return cls(tuple(0.5 * (lo + hi)), tuple(half))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.half)

    def to_scaled(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center) / self.half

    def from_scaled(self, z) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.half) * np.asarray(z, dtype=float)

    def polynomial(self, p: Polynomial) -> Polynomial:
        return p.substitute_affine(self.matrix, self.center)

    def set(self, s: SemialgebraicSet) -> SemialgebraicSet:
        return s.substitute_affine(self.matrix, self.center)


def normalize_rows(set_: SemialgebraicSet) -> SemialgebraicSet:
    """Divide every constraint by its largest coefficient (same set, better conditioning)."""
    def nz(p: Polynomial) -> Polynomial:
        m = p.max_abs_coeff()
        return p / m if m > 0 else p
    return SemialgebraicSet(set_.nvars, tuple(nz(e) for e in set_.equalities),
                            tuple(nz(g) for g in set_.inequalities))


def psd_side_lengths(set_: SemialgebraicSet, level: int) -> List[int]:
    """PSD block sizes a level-``level`` relaxation of ``set_`` would create."""
    nv = set_.nvars
    sizes = [len(monomials(nv, level))]
    for g in set_.inequalities:
        if g.degree() > 0:
            sizes.append(len(monomials(nv, level - _half_up(g.degree()))))
    return sizes
