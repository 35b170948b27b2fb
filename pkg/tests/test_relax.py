import numpy as np
import pytest

from robustfeas.conic import Status
from robustfeas.decider import CellProblem, _CycleRun, DecideConfig
from robustfeas.gasnet import ring_network, solve_cycle_flow
from robustfeas.poly import Polynomial
from robustfeas.relax import (
    AffineScaling,
    LevelTooSmallError,
    SosCertificate,
    build_moment_relaxation,
    build_sos_membership,
    certificate_residual,
    moment_lower_bound,
    normalize_rows,
    psd_side_lengths,
    separation_search,
    verified_dual_bound,
    verify_certificate,
)
from robustfeas.semialg import BoxSet, SemialgebraicSet, box_moments


def interval(lo, hi):
    u = Polynomial.variable(1, 0)
    return SemialgebraicSet(1, (), (u - lo, hi - u))


def unit_disk_1d():
    u = Polynomial.variable(1, 0)
    return u, SemialgebraicSet(1, (), (1.0 - u * u,))


def test_moment_convex_case():
    u, S = unit_disk_1d()
    res = moment_lower_bound(u * u, S, 1)
    assert res.status == Status.OPTIMAL
    assert res.bound == pytest.approx(0.0, abs=1e-7)


def test_moment_linear_objective():
    u, S = unit_disk_1d()
    res = moment_lower_bound(u, S, 1)
    grid_min = min(np.linspace(-1, 1, 2001))
    assert res.bound == pytest.approx(grid_min, abs=1e-6)


def test_moment_matrix_shapes():
    u, S = unit_disk_1d()
    prob = build_moment_relaxation(u, S, 2)
    assert [k.size for k in prob.cones if k.kind == "psd"] == [3, 2]
    assert psd_side_lengths(S, 2) == [3, 2]


def test_level_too_small():
    u, S = unit_disk_1d()
    with pytest.raises(LevelTooSmallError):
        build_moment_relaxation(u ** 4, S, 1)


@pytest.fixture(scope="module")
def n2_cell():
    run = _CycleRun(ring_network(2, 2.0), DecideConfig())
    return run.cells[0]


def test_first_row_positive_at_level_2(n2_cell):
    res = moment_lower_bound(n2_cell.objectives[0], n2_cell.gset, 2)
    assert res.bound is not None and res.bound > 0


def test_monotone_in_level_generic():
    x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    S = SemialgebraicSet(2, (), (1.0 - x * x - y * y, x + 0.5))
    f = x * y + x - y * y
    bounds = [moment_lower_bound(f, S, d).bound for d in (1, 2, 3)]
    assert all(b is not None for b in bounds)
    assert bounds[0] <= bounds[1] + 1e-6 <= bounds[2] + 2e-6
    pts = np.random.default_rng(0).uniform(-1, 1, size=(20000, 2))
    pts = pts[[S.contains(p) for p in pts]]
    assert bounds[2] <= f.eval_many(pts).min() + 1e-5


def true_row_minimum(run, cp: CellProblem, row: int, samples=3000, seed=0):
    """Minimum of one pressure row over the cell by sampling phi and solving the cycle flow."""
    cell = cp.cell
    rng = np.random.default_rng(seed)
    m = cp.region.dim
    lo = np.array(cp.scaling.center[:m]) - np.array(cp.scaling.half[:m])
    hi = np.array(cp.scaling.center[:m]) + np.array(cp.scaling.half[:m])
    phis = rng.uniform(lo, hi, size=(samples, m))
    phis = phis[cell.uncertainty_cell.contains_many(phis)]
    vals = []
    for phi in phis:
        q = solve_cycle_flow(run.reduction, phi)
        vals.append(cell.h_rows[row].eval(np.r_[phi, q]))
    return min(vals)


@pytest.mark.parametrize("n,c", [(2, 2.0), (3, 4.0), (4, 2.0)])
def test_bound_below_sampled_minimum(n, c):
    run = _CycleRun(ring_network(n, c), DecideConfig())
    cp = run.cells[0]
    for row in range(len(cp.objectives)):
        res = moment_lower_bound(cp.objectives[row], cp.gset, 2)
        if res.bound is None:
            continue
        assert res.bound <= true_row_minimum(run, cp, row) + 1e-5


def test_separation_zero_when_contained():
    S = interval(0.0, 1.0)
    mom = box_moments(BoxSet((0.0,), (1.0,)), 4)
    sep = separation_search(S, 2, [0], mom)
    assert sep.status == Status.OPTIMAL
    assert sep.objective >= -1e-6
    assert abs(sep.objective) <= 1e-6  # reported as "zero obj."


@pytest.fixture(scope="module")
def half_interval_cert():
    S = interval(0.0, 0.5)
    mom = box_moments(BoxSet((0.0,), (1.0,)), 4)
    sep = separation_search(S, 2, [0], mom)
    return S, mom, sep


def test_separation_finds_certificate(half_interval_cert):
    S, mom, sep = half_interval_cert
    assert sep.objective < -1e-3
    p = sep.certificate.p_in_mask()
    grid = np.linspace(0.0, 0.5, 5001)[:, None]
    assert p.eval_many(grid).min() >= -1e-6
    full = np.linspace(0.0, 1.0, 5001)[:, None]
    assert np.trapezoid(p.eval_many(full), full[:, 0]) < 0


def test_verify_end_to_end(half_interval_cert):
    S, mom, sep = half_interval_cert
    rep = verify_certificate(sep.certificate, S, mom, eps_cert=1e-6)
    assert rep.passed, rep
    assert certificate_residual(sep.certificate, S) <= 1e-6


def test_verify_rejects_corrupted_gram(half_interval_cert):
    S, mom, sep = half_interval_cert
    cert = sep.certificate
    grams = [G.copy() for G in cert.grams]
    grams[0][0, 1] += 1e-2
    grams[0][1, 0] += 1e-2
    bad = SosCertificate(cert.p, grams, cert.gram_bases, cert.taus, cert.integral, cert.level, cert.mask)
    rep = verify_certificate(bad, S, mom)
    assert not (rep.psd_ok and rep.residual_ok)
    assert not rep.passed


def test_verify_boundary_certificate_fails():
    # p = 0.5 - u = 0 + 1 * (0.5 - u) on {u <= 0.5}; its integral over [0, 1] is exactly 0
    u = Polynomial.variable(1, 0)
    S = SemialgebraicSet(1, (), (0.5 - u,))
    cert = SosCertificate(
        p=0.5 - u,
        grams=[np.zeros((2, 2)), np.ones((1, 1))],
        gram_bases=[((0,), (1,)), ((0,),)],
        taus=[],
        integral=0.0,
        level=1,
        mask=(0,),
    )
    rep = verify_certificate(cert, S, box_moments(BoxSet((0.0,), (1.0,)), 2))
    assert rep.psd_ok and rep.residual_ok
    assert not rep.integral_ok
    assert not rep.passed


def test_sos_mask_errors():
    S = interval(0.0, 1.0)
    with pytest.raises(ValueError):
        build_sos_membership(S, 1, [3], {(0,): 1.0})
    with pytest.raises(KeyError):
        build_sos_membership(S, 1, [0], {(0,): 1.0})


@pytest.fixture(scope="module")
def n3_u4_found():
    run = _CycleRun(ring_network(3, 4.0), DecideConfig())
    return run, run.infeasibility_round(3)


def test_n3_u4_level3_certificate(n3_u4_found):
    _, found = n3_u4_found
    assert found is not None
    assert found["verification"].passed
    assert found["objective"] < 0


def test_certificate_nonnegative_on_feasible_points(n3_u4_found):
    run, found = n3_u4_found
    cp = run.cells[found["cell"]]
    p = found["certificate"].p_in_mask()
    rng = np.random.default_rng(5)
    m = cp.region.dim
    z = rng.uniform(-1, 1, size=(40000, m))
    z = z[cp.region.contains_many(z)][:10000]
    checked = 0
    for zi in z:
        phi = cp.scaling.from_scaled(np.r_[zi, 0.0])[:m]
        q = solve_cycle_flow(run.reduction, phi)
        x = np.r_[phi, q]
        if all(h.eval(x) >= 0 for h in cp.cell.h_rows):
            checked += 1
            assert p.eval(zi) >= -1e-6
    assert checked > 100


def test_dual_bound_matches_optimal_objective(n2_cell):
    prob = build_moment_relaxation(n2_cell.objectives[0], n2_cell.gset, 2)
    from robustfeas.conic import solve
    sol = solve(prob)
    assert sol.status == Status.OPTIMAL
    lb = verified_dual_bound(prob, sol)
    assert lb <= sol.objective + 1e-6
    assert lb == pytest.approx(sol.objective, abs=1e-4)


def test_affine_scaling_roundtrip():
    sc = AffineScaling.from_bounds([1.0, -2.0], [3.0, 2.0])
    x = np.array([2.5, 0.5])
    np.testing.assert_allclose(sc.from_scaled(sc.to_scaled(x)), x)
    p = Polynomial.variable(2, 0) * Polynomial.variable(2, 1)
    z = sc.to_scaled(x)
    assert sc.polynomial(p).eval(z) == pytest.approx(p.eval(x))


def test_normalize_rows_keeps_the_set():
    u = Polynomial.variable(1, 0)
    S = SemialgebraicSet(1, (200.0 * u - 100.0,), (50.0 - 10.0 * u,))
    T = normalize_rows(S)
    assert max(p.max_abs_coeff() for p in T.equalities + T.inequalities) == pytest.approx(1.0)
    for x in (0.5, 0.4, 6.0):
        assert S.contains([x]) == T.contains([x])
