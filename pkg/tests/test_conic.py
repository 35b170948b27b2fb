import io

import numpy as np
import pytest
import scipy.sparse as sp

from robustfeas.conic import (
    Cone,
    ConicProblem,
    SolverSettings,
    SolverUnavailableError,
    Status,
    read_sparse_sdp,
    smat,
    solve,
    svec,
    write_sparse_sdp,
)


def test_psd_1x1_boundary():
    # min x  s.t.  x in PSD(1):  A x + s = b with A = -1, b = 0
    prob = ConicProblem([1.0], sp.csc_matrix([[-1.0]]), [0.0], [Cone("psd", 1)])
    sol = solve(prob)
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(0.0, abs=1e-7)


def test_contradictory_equalities_are_infeasible():
    prob = ConicProblem([0.0], sp.csc_matrix([[1.0], [1.0]]), [1.0, 2.0], [Cone("zero", 2)])
    sol = solve(prob)
    assert sol.status == Status.INFEASIBLE
    assert sol.objective is None


def test_unbounded_direction():
    # min x  s.t.  x <= 1
    prob = ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0], [Cone("nonneg", 1)])
    assert solve(prob).status == Status.UNBOUNDED


def planted_sdp(seed=0, n=50, k=10):
    """Random SDP with a known optimum from a rank-1 slack and a complementary dual."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=k)
    S = np.outer(v, v)
    Q, _ = np.linalg.qr(np.column_stack([v, rng.normal(size=(k, k - 1))]))
    W = Q[:, 1:]
    Z = W @ np.diag(rng.uniform(0.5, 2.0, k - 1)) @ W.T   # Z S = 0, Z PSD
    rows = k * (k + 1) // 2
    A = rng.normal(size=(rows, n))
    x = rng.normal(size=n)
    b = A @ x + svec(S)
    c = -A.T @ svec(Z)
    return ConicProblem(c, sp.csc_matrix(A), b, [Cone("psd", k)]), float(c @ x)


def test_planted_random_sdp():
    prob, opt = planted_sdp()
    assert prob.nvars == 50
    sol = solve(prob)
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(opt, abs=1e-6 * max(1.0, abs(opt)))
    assert sol.primal_residual <= 1e-8 and sol.dual_residual <= 1e-8


def test_svec_roundtrip_and_inner_product():
    rng = np.random.default_rng(4)
    A, B = rng.normal(size=(2, 5, 5))
    A, B = A + A.T, B + B.T
    np.testing.assert_allclose(smat(svec(A), 5), A)
    assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B))


def test_problem_shape_checks():
    with pytest.raises(ValueError):
        ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0, 2.0], [Cone("zero", 2)])
    with pytest.raises(ValueError):
        ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0], [Cone("zero", 2)])
    with pytest.raises(ValueError):
        ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0], [Cone("soc", 1)])


def test_unknown_backend():
    prob = ConicProblem([1.0], sp.csc_matrix([[-1.0]]), [0.0], [Cone("psd", 1)])
    with pytest.raises(SolverUnavailableError):
        solve(prob, SolverSettings(backend="nope"))


def test_text_roundtrip():
    prob, _ = planted_sdp(seed=3, n=6, k=4)
    buf = io.StringIO()
    write_sparse_sdp(prob, buf)
    again = read_sparse_sdp(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(again.c, prob.c)
    np.testing.assert_array_equal(again.b, prob.b)
    assert (again.A != prob.A).nnz == 0
    assert again.cones == prob.cones


def test_scs_backend_agrees():
    pytest.importorskip("scs")
    prob, opt = planted_sdp(seed=1, n=12, k=5)
    sol = solve(prob, SolverSettings(backend="scs", feas_tol=1e-9, gap_tol=1e-9))
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(opt, abs=1e-4 * max(1.0, abs(opt)))
