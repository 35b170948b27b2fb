import itertools

import numpy as np
import pytest

from robustfeas.poly import (
    DimensionError,
    Polynomial,
    add,
    evaluate,
    grlex_key,
    monomials,
    mul,
    num_monomials,
    substitute_affine,
    variables,
)


def random_poly(rng, nvars, degree, nterms=8):
    basis = monomials(nvars, degree)
    picks = rng.choice(len(basis), size=min(nterms, len(basis)), replace=False)
    return Polynomial(nvars, {basis[i]: float(rng.normal()) for i in picks})


def naive_eval(p, x):
    # independent reimplementation: explicit loops, no numpy power broadcasting
    total = 0.0
    for alpha, c in p.items():
        term = c
        for xi, e in zip(x, alpha):
            for _ in range(e):
                term *= xi
        total += term
    return total


def test_add_cancels_to_zero():
    x1, _ = variables(2)
    z = add(x1, -x1)
    assert z.is_zero()
    assert z.degree() == -1
    assert len(z) == 0


def test_add_disjoint_supports():
    x1, x2 = variables(2)
    p = add(x1 * x1 + 1.0, x2)
    assert p == Polynomial(2, {(2, 0): 1.0, (0, 1): 1.0, (0, 0): 1.0})


def test_mul_difference_of_squares():
    (x1,) = variables(1)
    assert mul(x1 + 1.0, x1 - 1.0) == Polynomial(1, {(2,): 1.0, (0,): -1.0})


def test_mul_by_zero():
    x1, x2 = variables(2)
    assert mul(x1 * x2 + 3.0, Polynomial.zero(2)).is_zero()


def test_eval_direct():
    x1, x2 = variables(2)
    assert evaluate(x1 * x1 * x2, [2.0, 3.0]) == 12.0
    assert Polynomial.zero(3).eval([1.0, 2.0, 3.0]) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_arithmetic_matches_pointwise(seed):
    rng = np.random.default_rng(seed)
    p, q = random_poly(rng, 3, 4), random_poly(rng, 3, 3)
    for v in rng.normal(size=(10, 3)):
        assert add(p, q).eval(v) == pytest.approx(p.eval(v) + q.eval(v), abs=1e-10)
        assert mul(p, q).eval(v) == pytest.approx(p.eval(v) * q.eval(v), rel=1e-10, abs=1e-10)


def test_eval_degree6_against_naive():
    rng = np.random.default_rng(7)
    p = random_poly(rng, 5, 6, nterms=40)
    pts = rng.uniform(-1.5, 1.5, size=(20, 5))
    for v in pts:
        assert p.eval(v) == pytest.approx(naive_eval(p, v), rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(p.eval_many(pts), [naive_eval(p, v) for v in pts], rtol=1e-12, atol=1e-12)


def test_substitute_affine_binomial():
    (x,) = variables(1)
    p = substitute_affine(x * x, [[2.0]], [1.0])
    assert p == Polynomial(1, {(2,): 4.0, (1,): 4.0, (0,): 1.0})


def test_substitute_identity():
    rng = np.random.default_rng(3)
    p = random_poly(rng, 3, 4)
    assert p.substitute_affine(np.eye(3), np.zeros(3)).almost_equal(p, 1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_substitute_affine_random(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_poly(rng, 3, 4)
    M, b = rng.normal(size=(3, 2)), rng.normal(size=3)
    r = p.substitute_affine(M, b)
    assert r.nvars == 2
    for y in rng.normal(size=(10, 2)):
        assert r.eval(y) == pytest.approx(p.eval(M @ y + b), rel=1e-9, abs=1e-9)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        add(Polynomial.variable(2, 0), Polynomial.variable(3, 0))
    with pytest.raises(DimensionError):
        mul(Polynomial.variable(2, 0), Polynomial.variable(1, 0))
    with pytest.raises(DimensionError):
        Polynomial.variable(2, 0).eval([1.0])
    with pytest.raises(DimensionError):
        Polynomial.variable(2, 0).substitute_affine(np.eye(3), np.zeros(3))


@pytest.mark.parametrize("seed", range(5))
def test_ring_axioms(seed):
    rng = np.random.default_rng(200 + seed)
    p, q, r = (random_poly(rng, 2, 3) for _ in range(3))
    assert ((p * q) * r).almost_equal(p * (q * r), 1e-10)
    assert (p * (q + r)).almost_equal(p * q + p * r, 1e-10)
    assert (p * q).almost_equal(q * p, 1e-12)
    assert (p + q).almost_equal(q + p, 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_degree_of_product(seed):
    rng = np.random.default_rng(300 + seed)
    p, q = random_poly(rng, 3, 3), random_poly(rng, 3, 4)
    assert (p * q).degree() == p.degree() + q.degree()


def test_canonical_form_from_grid_values():
    # the same function built two ways must be structurally identical
    x, y = variables(2)
    p = (x + y) ** 3
    q = x ** 3 + 3.0 * x * x * y + 3.0 * x * y * y + y ** 3
    grid = list(itertools.product(np.linspace(-1, 1, 8), repeat=2))
    assert all(p.eval(g) == pytest.approx(q.eval(g)) for g in grid)
    assert p == q


def test_tiny_coefficients_pruned():
    p = Polynomial(1, {(1,): 1.0}) + Polynomial(1, {(1,): -1.0 + 1e-16})
    assert p.is_zero()


def test_monomial_order_is_graded_lex():
    basis = monomials(3, 3)
    assert len(basis) == num_monomials(3, 3) == 20
    assert basis[0] == (0, 0, 0)
    assert basis[1:4] == ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    assert list(basis) == sorted(basis, key=grlex_key)
