"""Set descriptions and exact monomial moments.

Boxes and polytopes describe uncertainty sets and the cells they are split
into; :class:`SemialgebraicSet` describes feasible regions of polynomial
systems. Monomial moments of polytopes are computed exactly from a simplex
decomposition (no sampling).
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .poly import DimensionError, Monomial, Polynomial, monomials

log = logging.getLogger(__name__)

MAX_POLYTOPE_DIM = 8
VERTEX_TOL = 1e-9
EMPTY_TOL = 1e-9


class UnboundedPolytopeError(ValueError):
    pass


class DegeneratePolytopeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BoxSet:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DimensionError("box needs matching, nonempty lower/upper vectors")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box has lower > upper: {lo} vs {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float) -> "BoxSet":
        return cls((lo,) * dim, (hi,) * dim)

    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= np.array(self.lower) - tol) and np.all(p <= np.array(self.upper) + tol))

    def as_polytope(self) -> "PolytopeSet":
        n = self.dim
        hs = []
        for i in range(n):
            e = [0.0] * n
            e[i] = -1.0
            hs.append((tuple(e), -self.lower[i]))
            e = [0.0] * n
            e[i] = 1.0
            hs.append((tuple(e), self.upper[i]))
        return PolytopeSet(tuple(hs))

    def inequalities(self, nvars: int | None = None, positions: Sequence[int] | None = None):
        """Box membership as polynomial inequalities ``x_i - lo_i >= 0``, ``hi_i - x_i >= 0``."""
        nvars = self.dim if nvars is None else nvars
        positions = list(range(self.dim)) if positions is None else list(positions)
        out = []
        for i, pos in enumerate(positions):
            x = Polynomial.variable(nvars, pos)
            out.append(x - self.lower[i])
            out.append(self.upper[i] - x)
        return out


@dataclass(frozen=True)
class PolytopeSet:
    """``{x : normal . x <= offset}`` for every stored halfspace."""

    halfspaces: Tuple[Tuple[Tuple[float, ...], float], ...]

    def __post_init__(self):
        hs = tuple((tuple(float(v) for v in a), float(b)) for a, b in self.halfspaces)
        if not hs:
            raise ValueError("polytope needs at least one halfspace")
        dims = {len(a) for a, _ in hs}
        if len(dims) != 1:
            raise DimensionError("halfspace normals have inconsistent dimensions")
        object.__setattr__(self, "halfspaces", hs)

    @property
    def dim(self) -> int:
        return len(self.halfspaces[0][0])

    @property
    def A(self) -> np.ndarray:
        return np.array([a for a, _ in self.halfspaces], dtype=float)

    @property
    def b(self) -> np.ndarray:
        return np.array([b for _, b in self.halfspaces], dtype=float)

    def intersect(self, other: "PolytopeSet") -> "PolytopeSet":
        if other.dim != self.dim:
            raise DimensionError("cannot intersect polytopes of different dimension")
        return PolytopeSet(self.halfspaces + other.halfspaces)

    def add_halfspace(self, normal, offset) -> "PolytopeSet":
        return PolytopeSet(self.halfspaces + ((tuple(normal), float(offset)),))

    def contains(self, point, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ np.asarray(point, dtype=float) <= self.b + tol))

    def contains_many(self, points, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(pts @ self.A.T <= self.b + tol, axis=1)

    def affine_image(self, scale, shift) -> "PolytopeSet":
        """Polytope in ``y`` coordinates where ``x = shift + scale * y`` (diagonal map)."""
        s = np.asarray(scale, dtype=float)
        c = np.asarray(shift, dtype=float)
        A, b = self.A, self.b
        return PolytopeSet(tuple(zip(map(tuple, A * s), b - A @ c)))

    def chebyshev_radius(self) -> float:
        """Radius of the largest inscribed ball; -inf when empty, inf when unbounded."""
        A, b = self.A, self.b
        norms = np.linalg.norm(A, axis=1)
        n = self.dim
        c = np.zeros(n + 1)
        c[-1] = -1.0
        res = linprog(
            c,
            A_ub=np.hstack([A, norms[:, None]]),
            b_ub=b,
            bounds=[(None, None)] * n + [(None, None)],
            method="highs",
        )
        if res.status == 2:
            return -math.inf
        if res.status == 3:
            return math.inf
        if res.status != 0:
            raise RuntimeError(f"Chebyshev LP failed: {res.message}")
        return float(-res.fun)

    def is_empty(self, tol: float = EMPTY_TOL) -> bool:
        """Infeasibility of the halfspace system, tested by LP with slack ``tol``."""
        res = linprog(
            np.zeros(self.dim), A_ub=self.A, b_ub=self.b + tol,
            bounds=[(None, None)] * self.dim, method="highs",
        )
        return res.status == 2

    def is_full_dimensional(self, tol: float = 1e-9) -> bool:
        return self.chebyshev_radius() > tol


@dataclass(frozen=True)
class SemialgebraicSet:
    """``{x : e(x) = 0 for e in equalities, g(x) >= 0 for g in inequalities}``."""

    nvars: int
    equalities: Tuple[Polynomial, ...] = field(default_factory=tuple)
    inequalities: Tuple[Polynomial, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "equalities", tuple(self.equalities))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        for p in self.equalities + self.inequalities:
            if p.nvars != self.nvars:
                raise DimensionError(f"member polynomial has {p.nvars} vars, set has {self.nvars}")

    def max_degree(self) -> int:
        return max((p.degree() for p in self.equalities + self.inequalities), default=0)

    def contains(self, point, tol: float = 1e-9) -> bool:
        return all(abs(e.eval(point)) <= tol for e in self.equalities) and all(
            g.eval(point) >= -tol for g in self.inequalities
        )

    def with_inequalities(self, extra) -> "SemialgebraicSet":
        return SemialgebraicSet(self.nvars, self.equalities, self.inequalities + tuple(extra))

    def substitute_affine(self, matrix, offset) -> "SemialgebraicSet":
        M = np.asarray(matrix, dtype=float)
        return SemialgebraicSet(
            M.shape[1],
            tuple(p.substitute_affine(M, offset) for p in self.equalities),
            tuple(p.substitute_affine(M, offset) for p in self.inequalities),
        )


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def box_moment(alpha: Monomial, box: BoxSet) -> float:
    """Lebesgue integral of ``x^alpha`` over ``box``."""
    if len(alpha) != box.dim:
        raise DimensionError(f"monomial length {len(alpha)} != box dim {box.dim}")
    val = 1.0
    for a, lo, hi in zip(alpha, box.lower, box.upper):
        val *= (hi ** (a + 1) - lo ** (a + 1)) / (a + 1)
    return val


def box_moments(box: BoxSet, max_total_degree: int) -> Dict[Monomial, float]:
    return {a: box_moment(a, box) for a in monomials(box.dim, max_total_degree)}


def enumerate_vertices(polytope: PolytopeSet, tol: float = VERTEX_TOL) -> np.ndarray:
    """Vertices by intersecting every ``dim``-subset of bounding hyperplanes."""
    A, b = polytope.A, polytope.b
    n = polytope.dim
    scale = np.linalg.norm(A, axis=1)
    scale[scale == 0] = 1.0
    An, bn = A / scale[:, None], b / scale
    verts: List[np.ndarray] = []
    for rows in itertools.combinations(range(len(bn)), n):
        sub = An[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, bn[list(rows)])
        if np.all(An @ x <= bn + tol * (1 + np.abs(bn))):
            if not any(np.allclose(x, v, atol=1e-9, rtol=1e-9) for v in verts):
                verts.append(x)
    return np.array(verts).reshape(-1, n)


def _affine_rank(points: np.ndarray) -> int:
    if len(points) <= 1:
        return 0
    diffs = points[1:] - points[0]
    return int(np.linalg.matrix_rank(diffs, tol=1e-9 * max(1.0, np.abs(diffs).max())))


def triangulate(polytope: PolytopeSet, max_dim: int = MAX_POLYTOPE_DIM) -> List[np.ndarray]:
    """Split a bounded polytope into simplices (pulling triangulation).

    Returns a list of ``(dim+1, dim)`` vertex arrays. Empty polytopes give an
    empty list; lower-dimensional ones give an empty list plus a
    :class:`DegeneratePolytopeWarning`.
    """
    n = polytope.dim
    if n > max_dim:
        raise ValueError(f"polytope dimension {n} exceeds cap {max_dim}")
    radius = polytope.chebyshev_radius()
    if radius == -math.inf or polytope.is_empty():
        return []
    if radius == math.inf:
        raise UnboundedPolytopeError("polytope is unbounded")
    V = enumerate_vertices(polytope)
    if radius <= 1e-9 or _affine_rank(V) < n:
        warnings.warn("polytope is not full-dimensional; treating as measure zero",
                      DegeneratePolytopeWarning, stacklevel=2)
        return []
    A, b = polytope.A, polytope.b
    scale = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    slack = (b[None, :] - V @ A.T) / scale[None, :]
    tight = np.abs(slack) <= 1e-8 * (1 + np.abs(b / scale))[None, :]

    def pull(vidx: Tuple[int, ...], dim: int) -> List[Tuple[int, ...]]:
        if dim == 0:
            return [(vidx[0],)]
        apex = vidx[0]
        facets = set()
        for h in range(tight.shape[1]):
            if tight[apex, h]:
                continue
            face = tuple(v for v in vidx if tight[v, h])
            if len(face) < dim or face in facets:
                continue
            if _affine_rank(V[list(face)]) != dim - 1:
                continue
            facets.add(face)
        out = []
        for face in sorted(facets):
            for simplex in pull(face, dim - 1):
                out.append(simplex + (apex,))
        return out

    return [V[list(s)] for s in pull(tuple(range(len(V))), n)]


def simplex_volume(vertices) -> float:
    V = np.asarray(vertices, dtype=float)
    m = V.shape[1]
    return abs(np.linalg.det(V[1:] - V[0])) / math.factorial(m)


@lru_cache(maxsize=32)
def _barycentric_tables(m: int, max_degree: int):
    """Per total degree k: homogeneous lambda-monomials in m+1 variables, the
    shift maps lambda^c -> lambda^(c + e_j) into degree k+1, and the Dirichlet
    weights m! prod(c!) / (m + k)!."""
    layers = []
    for k in range(max_degree + 1):
        basis = [c for c in monomials(m + 1, k) if sum(c) == k]
        index = {c: i for i, c in enumerate(basis)}
        fm = math.factorial(m)
        weights = np.array(
            [fm * math.prod(math.factorial(ci) for ci in c) / math.factorial(m + k) for c in basis]
        )
        layers.append((basis, index, weights))
    shifts = []
    for k in range(max_degree):
        basis = layers[k][0]
        nxt = layers[k + 1][1]
        smap = np.empty((m + 1, len(basis)), dtype=np.int64)
        for i, c in enumerate(basis):
            for j in range(m + 1):
                cc = list(c)
                cc[j] += 1
                smap[j, i] = nxt[tuple(cc)]
        shifts.append(smap)
    return layers, shifts


def simplex_moments(vertices, max_total_degree: int) -> Dict[Monomial, float]:
    """Exact moments of every monomial up to ``max_total_degree`` over one simplex.

    Writes ``x = sum_k lambda_k v_k``, expands ``x^alpha`` in barycentric
    coordinates degree by degree and integrates each lambda-monomial with the
    Dirichlet formula.
    """
    V = np.asarray(vertices, dtype=float)
    m = V.shape[1]
    if V.shape[0] != m + 1:
        raise DimensionError(f"simplex in R^{m} needs {m + 1} vertices, got {V.shape[0]}")
    vol = simplex_volume(V)
    if vol <= 1e-14 * max(1.0, np.abs(V).max()) ** m:
        raise ValueError("degenerate simplex")
    layers, shifts = _barycentric_tables(m, max_total_degree)
    out: Dict[Monomial, float] = {(0,) * m: vol}
    prev = {(0,) * m: np.ones(1)}
    for k in range(1, max_total_degree + 1):
        basis, _, weights = layers[k]
        smap = shifts[k - 1]
        cur = {}
        for alpha in monomials(m, k):
            if sum(alpha) != k:
                continue
            i = max(j for j, a in enumerate(alpha) if a)
            parent = list(alpha)
            parent[i] -= 1
            pc = prev[tuple(parent)]
            coeffs = np.zeros(len(basis))
            for j in range(m + 1):
                if V[j, i] != 0.0:
                    coeffs[smap[j]] += V[j, i] * pc
            cur[alpha] = coeffs
            out[alpha] = vol * float(coeffs @ weights)
        prev = cur
    return out


def simplex_moment(alpha: Monomial, vertices) -> float:
    alpha = tuple(alpha)
    V = np.asarray(vertices, dtype=float)
    if len(alpha) != V.shape[1]:
        raise DimensionError("monomial length does not match simplex dimension")
    return simplex_moments(V, sum(alpha))[alpha]


def polytope_moments(polytope: PolytopeSet, max_total_degree: int) -> Dict[Monomial, float]:
    """Moments of all monomials up to ``max_total_degree`` over a bounded polytope."""
    table = {a: 0.0 for a in monomials(polytope.dim, max_total_degree)}
    for simplex in triangulate(polytope):
        for a, v in simplex_moments(simplex, max_total_degree).items():
            table[a] += v
    return table


def polytope_volume(polytope: PolytopeSet) -> float:
    return float(sum(simplex_volume(s) for s in triangulate(polytope)))


def moment_functional(p: Polynomial, moments: Dict[Monomial, float]) -> float:
    """``sum_alpha p_alpha m_alpha``; raises KeyError for a missing moment."""
    return float(sum(c * moments[a] for a, c in p.items()))
