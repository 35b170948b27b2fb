import os
import subprocess
import sys

import numpy as np
import pytest

from robustfeas import _kernels_py, kernels
from robustfeas.gasnet import choose_spanning_tree, ring_network, solve_cycle_flow


def cycle_case(n, points=500, seed=0):
    red = choose_spanning_tree(ring_network(n, 4.0))
    phis = np.random.default_rng(seed).uniform(1.0, 4.0, size=(points, n))
    cyc = np.array(red.cycle_arcs, dtype=np.intp)
    bs = red.beta_sorted()
    return red, phis, cyc, red.beta[cyc], float(bs[0]), float(bs[-1])


@pytest.mark.parametrize("n", [2, 3, 5])
def test_fallback_cycle_flows_match_scalar_solver(n):
    red, phis, cyc, beta, lo, hi = cycle_case(n)
    q = _kernels_py.cycle_flows(phis, cyc, beta, lo, hi)
    ref = [solve_cycle_flow(red, p, tol=1e-12) for p in phis[:50]]
    np.testing.assert_allclose(q[:50], ref, atol=1e-8)


def test_fallback_pressure_violation_by_hand():
    g = np.array([[10.0, -5.0], [0.0, 0.0]])
    lb, ub = np.array([20.0, 0.0]), np.array([100.0, 200.0])
    v = _kernels_py.pressure_violation(g, lb, ub, 0.0, 200.0)
    # pi_i = pi - g_i; row 0: pi in [max(30, -5, 0), min(110, 195, 200)]
    # row 1: pi in [20, 100]
    np.testing.assert_allclose(v, [30.0 - 110.0, 20.0 - 100.0])
    v = _kernels_py.pressure_violation(np.array([[150.0, 0.0]]), lb, ub, 0.0, 200.0)
    assert v[0] == pytest.approx(170.0 - 200.0)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
@pytest.mark.parametrize("n", [2, 3, 5, 7])
def test_backends_agree(n):
    from robustfeas import _kernels
    red, phis, cyc, beta, lo, hi = cycle_case(n, points=2000, seed=n)
    qc = _kernels.cycle_flows(phis, cyc, beta, lo, hi)
    qp = _kernels_py.cycle_flows(phis, cyc, beta, lo, hi)
    np.testing.assert_allclose(qc, qp, atol=1e-8)
    rng = np.random.default_rng(n)
    g = rng.normal(scale=50.0, size=(2000, n - 1))
    lb = rng.uniform(0, 60, n - 1)
    ub = lb + rng.uniform(0, 150, n - 1)
    np.testing.assert_allclose(_kernels.pressure_violation(g, lb, ub, 0.0, 200.0),
                               _kernels_py.pressure_violation(g, lb, ub, 0.0, 200.0), atol=1e-12)


def test_env_var_forces_fallback():
    env = dict(os.environ, ROBUSTFEAS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from robustfeas import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_selected_backend_is_known():
    assert kernels.BACKEND in ("python", "cython")
