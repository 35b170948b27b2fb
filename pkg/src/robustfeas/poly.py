"""Sparse multivariate polynomials over the reals.

A polynomial is a mapping from exponent tuples to float coefficients with a
fixed number of variables. Instances are treated as immutable: every
operation returns a new object.

Monomials are ordered graded-lexicographically (total degree first, then
lexicographically with ``x_1 > x_2 > ...``). :func:`monomials` produces that
order and every module that needs an indexed monomial basis uses it.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

Monomial = Tuple[int, ...]

PRUNE_TOL = 1e-14


class DimensionError(ValueError):
    """Raised when operands live in different numbers of variables."""


def grlex_key(alpha: Monomial):
    return (sum(alpha), tuple(-a for a in alpha))


def _compositions(nvars: int, total: int):
    # exponent tuples of exact total degree, in descending lex order
    if nvars == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(nvars - 1, total - first):
            yield (first,) + rest


@lru_cache(maxsize=256)
def monomials(nvars: int, max_degree: int) -> Tuple[Monomial, ...]:
    """All exponent tuples in ``nvars`` variables of total degree <= ``max_degree``,
    in graded-lex order."""
    if nvars < 1:
        raise DimensionError("nvars must be positive")
    out = []
    for deg in range(max_degree + 1):
        out.extend(_compositions(nvars, deg))
    return tuple(out)


def num_monomials(nvars: int, max_degree: int) -> int:
    if max_degree < 0:
        return 0
    return math.comb(nvars + max_degree, nvars)


class Polynomial:
    """Real polynomial ``sum_alpha c_alpha x^alpha`` in ``nvars`` variables."""

    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Monomial, float] | None = None):
        if nvars < 1:
            raise DimensionError("nvars must be positive")
        self.nvars = int(nvars)
        clean: Dict[Monomial, float] = {}
        if terms:
            for alpha, c in terms.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != self.nvars:
                    raise DimensionError(
                        f"monomial {alpha} has length {len(alpha)}, expected {self.nvars}"
                    )
                if any(a < 0 for a in alpha):
                    raise ValueError(f"negative exponent in {alpha}")
                clean[alpha] = clean.get(alpha, 0.0) + float(c)
        self._terms = {a: c for a, c in clean.items() if abs(c) >= PRUNE_TOL}
        self._hash = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, index: int) -> "Polynomial":
        alpha = [0] * nvars
        alpha[index] = 1
        return cls(nvars, {tuple(alpha): 1.0})

    @classmethod
    def linear(cls, coeffs: Sequence[float], const: float = 0.0) -> "Polynomial":
        """``const + sum_i coeffs[i] * x_i``."""
        n = len(coeffs)
        terms = {(0,) * n: const}
        for i, c in enumerate(coeffs):
            alpha = [0] * n
            alpha[i] = 1
            terms[tuple(alpha)] = c
        return cls(n, terms)

    @classmethod
    def from_vector(cls, nvars: int, basis: Sequence[Monomial], coeffs) -> "Polynomial":
        return cls(nvars, dict(zip(basis, coeffs)))

    # -- inspection ---------------------------------------------------------
    @property
    def terms(self) -> Dict[Monomial, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coeff(self, alpha: Monomial) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self._terms:
            return -1
        return max(sum(a) for a in self._terms)

    def degree_in(self, index: int) -> int:
        if not self._terms:
            return -1
        return max(a[index] for a in self._terms)

    def support(self):
        return sorted(self._terms, key=grlex_key)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def to_vector(self, basis: Sequence[Monomial]) -> np.ndarray:
        index = {a: i for i, a in enumerate(basis)}
        out = np.zeros(len(basis))
        for alpha, c in self._terms.items():
            try:
                out[index[alpha]] = c
            except KeyError:
                raise ValueError(f"monomial {alpha} not in basis") from None
        return out

    def __len__(self):
        return len(self._terms)

    def __repr__(self):
        if not self._terms:
            return f"Polynomial({self.nvars}, 0)"
        parts = []
        for alpha in self.support():
            c = self._terms[alpha]
            mono = "*".join(
                f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}" for i, e in enumerate(alpha) if e
            )
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial({self.nvars}, " + " + ".join(parts) + ")"

    # -- equality / hashing -------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    def almost_equal(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        return (self - other).max_abs_coeff() <= tol

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise DimensionError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.nvars, float(other))
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self._terms)
        for a, c in other._terms.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.nvars, {a: c * other for a, c in self._terms.items()})
        other = self._coerce(other)
        terms: Dict[Monomial, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = tuple(x + y for x, y in zip(a, b))
                terms[key] = terms.get(key, 0.0) + ca * cb
        return Polynomial(self.nvars, terms)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- evaluation ---------------------------------------------------------
    def __call__(self, point):
        return self.eval(point)

    def eval(self, point) -> float:
        """Evaluate at one point by direct term summation."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.nvars,):
            raise DimensionError(f"point has shape {point.shape}, expected ({self.nvars},)")
        total = 0.0
        for alpha, c in self._terms.items():
            v = c
            for x, e in zip(point, alpha):
                if e:
                    v *= x**e
            total += v
        return float(total)

    def eval_many(self, points) -> np.ndarray:
        """Vectorized evaluation at the rows of ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.nvars:
            raise DimensionError(f"points have {pts.shape[1]} columns, expected {self.nvars}")
        if not self._terms:
            return np.zeros(len(pts))
        expo = np.array(list(self._terms.keys()), dtype=int)
        coef = np.array(list(self._terms.values()))
        vals = np.prod(pts[:, None, :] ** expo[None, :, :], axis=2)
        return vals @ coef

    # -- composition --------------------------------------------------------
    def substitute_affine(self, matrix, offset) -> "Polynomial":
        """Compose with the affine map ``x = matrix @ y + offset``.

        ``matrix`` has shape (nvars, m); the result is a polynomial in m
        variables with ``result(y) == self(matrix @ y + offset)``.
        """
        M = np.asarray(matrix, dtype=float)
        b = np.asarray(offset, dtype=float)
        if M.ndim != 2 or M.shape[0] != self.nvars or b.shape != (self.nvars,):
            raise DimensionError(
                f"affine map shapes {M.shape}, {b.shape} incompatible with nvars={self.nvars}"
            )
        m = M.shape[1]
        images = [Polynomial.linear(M[i], b[i]) for i in range(self.nvars)]
        # cache powers of each image; supports are shared across terms
        powers = [[Polynomial.constant(m, 1.0)] for _ in range(self.nvars)]
        result: Dict[Monomial, float] = {}
        for alpha, c in self._terms.items():
            term = Polynomial.constant(m, c)
            for i, e in enumerate(alpha):
                if not e:
                    continue
                cache = powers[i]
                while len(cache) <= e:
                    cache.append(cache[-1] * images[i])
                term = term * cache[e]
            for a, v in term._terms.items():
                result[a] = result.get(a, 0.0) + v
        return Polynomial(m, result)

    def embed(self, nvars: int, positions: Sequence[int]) -> "Polynomial":
        """Re-express in a larger variable space; variable i goes to ``positions[i]``."""
        if len(positions) != self.nvars:
            raise DimensionError("positions must list one target per variable")
        terms = {}
        for alpha, c in self._terms.items():
            new = [0] * nvars
            for i, e in enumerate(alpha):
                new[positions[i]] += e
            terms[tuple(new)] = c
        return Polynomial(nvars, terms)

    def restrict(self, keep: Sequence[int]) -> "Polynomial":
        """Drop variables not in ``keep``; fails if a dropped variable appears."""
        keep = list(keep)
        dropped = [i for i in range(self.nvars) if i not in keep]
        terms = {}
        for alpha, c in self._terms.items():
            if any(alpha[i] for i in dropped):
                raise ValueError("polynomial depends on a dropped variable")
            terms[tuple(alpha[i] for i in keep)] = c
        return Polynomial(len(keep), terms)


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def evaluate(p: Polynomial, point) -> float:
    return p.eval(point)


def substitute_affine(p: Polynomial, matrix, offset) -> Polynomial:
    return p.substitute_affine(matrix, offset)


def variables(nvars: int) -> Tuple[Polynomial, ...]:
    return tuple(Polynomial.variable(nvars, i) for i in range(nvars))


def exponent_array(basis: Iterable[Monomial]) -> np.ndarray:
    return np.array(list(basis), dtype=np.int64)
