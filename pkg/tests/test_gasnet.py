import math

import numpy as np
import pytest
from scipy.optimize import brentq

from helpers import random_cycle, random_tree
from robustfeas.gasnet import (
    Arc,
    BracketError,
    DisconnectedError,
    Network,
    NetworkError,
    Node,
    TopologyError,
    choose_spanning_tree,
    cycle_h,
    cycle_h_many,
    nominal_check,
    potn_residual,
    reduction_g,
    ring_network,
    signed_square,
    solve_cycle_flow,
    tree_drops,
)


def two_node_tree(phi=1.0):
    nodes = (Node(0, -10.0, 0.0, 200.0), Node(1, 10.0, 0.0, 200.0))
    return Network(nodes, (Arc(0, 1, phi, phi),)).validate()


def symmetric_two_cycle():
    nodes = (Node(1, -10.0, 0.0, 200.0), Node(2, 10.0, 0.0, 200.0))
    return Network(nodes, (Arc(1, 2, 1.0, 1.0), Arc(2, 1, 1.0, 1.0))).validate()


def test_validation_errors():
    with pytest.raises(NetworkError):
        Network((Node(1, 1.0, 0, 1), Node(2, 0.0, 0, 1)), (Arc(1, 2, 1, 1),)).validate()
    with pytest.raises(DisconnectedError):
        Network((Node(1, 0.0, 0, 1), Node(2, 0.0, 0, 1)), ()).validate()
    with pytest.raises(NetworkError):
        Network((Node(1, 0.0, 0, 1), Node(2, 0.0, 0, 1)), (Arc(1, 2, 2.0, 1.0),)).validate()
    with pytest.raises(NetworkError):
        Network((Node(1, 0.0, 5, 1), Node(2, 0.0, 0, 1)), (Arc(1, 2, 1.0, 1.0),)).validate()


def test_spanning_tree_shapes():
    red = choose_spanning_tree(ring_network(2))
    assert len(red.nonbasis) == 1 and red.root == 1
    tree = two_node_tree()
    assert choose_spanning_tree(tree).nonbasis == ()
    for n in range(2, 8):
        net = ring_network(n)
        red = choose_spanning_tree(net)
        assert red.A_B.shape == (n - 1, n - 1)
        assert len(red.nonbasis) == len(net.arcs) - len(net.nodes) + 1


def test_flow_conservation_n5():
    net = ring_network(5)
    red = choose_spanning_tree(net)
    A, d = net.incidence(), net.demands
    for q in (-7.0, 0.0, 13.0):
        np.testing.assert_allclose(A @ red.flows([q]), d, atol=1e-12)


def test_conservation_random_nonbasis():
    rng = np.random.default_rng(0)
    for _ in range(10):
        net = random_cycle(rng)
        red = choose_spanning_tree(net)
        for q in rng.normal(scale=10, size=3):
            np.testing.assert_allclose(net.incidence() @ red.flows([q]), net.demands, atol=1e-10)


def test_g_zero_without_demand():
    nodes = (Node(1, 0.0, 0, 200), Node(2, 0.0, 0, 200), Node(3, 0.0, 0, 200))
    net = Network(nodes, (Arc(1, 2, 1, 2), Arc(2, 3, 1, 2), Arc(3, 1, 1, 2))).validate()
    red = choose_spanning_tree(net)
    np.testing.assert_array_equal(reduction_g(red, np.ones(3), [0.0]), 0.0)


def test_g_single_pipe():
    red = choose_spanning_tree(two_node_tree())
    assert reduction_g(red, np.ones(1), np.zeros(0)) == pytest.approx([100.0])


def test_tree_drops_match_reduction_g():
    rng = np.random.default_rng(1)
    for _ in range(30):
        net = random_tree(rng)
        red = choose_spanning_tree(net)
        phi = rng.uniform(1, 3, len(net.arcs))
        g = reduction_g(red, phi, np.zeros(0))
        drops = tree_drops(net)
        for v, gi in zip(red.rows, g):
            assert drops[v] @ phi == pytest.approx(gi, abs=1e-9)


def test_nominal_n3_pressures_satisfy_potn():
    net = ring_network(3)
    red = choose_spanning_tree(net)
    res = nominal_check(net, red, np.ones(3))
    assert res.feasible
    assert potn_residual(net, np.ones(3), res.flows, res.pressures) <= 1e-7


def test_cycle_h_identities():
    net = ring_network(4)
    red = choose_spanning_tree(net)
    rng = np.random.default_rng(2)
    phi = rng.uniform(1, 2, 4)
    qs = np.linspace(-15, 15, 100)
    direct = [-sum(phi[a] * (q - red.beta[a]) * abs(q - red.beta[a]) for a in red.cycle_arcs) for q in qs]
    np.testing.assert_allclose(cycle_h_many(red, phi, qs), direct, rtol=1e-12, atol=1e-9)
    for q in qs[::10]:
        assert cycle_h(red, 2 * phi, q) == pytest.approx(2 * cycle_h(red, phi, q))


def test_cycle_h_zero_when_beta_vanish():
    net = Network((Node(1, 0.0, 0, 1), Node(2, 0.0, 0, 1)), (Arc(1, 2, 1, 1), Arc(2, 1, 1, 1)))
    red = choose_spanning_tree(net)
    assert cycle_h(red, [3.0, 5.0], 0.0) == 0.0


def test_cycle_h_multi_cycle_rejected():
    nodes = tuple(Node(i, 0.0, 0, 1) for i in (1, 2, 3))
    arcs = (Arc(1, 2, 1, 1), Arc(2, 3, 1, 1), Arc(3, 1, 1, 1), Arc(1, 3, 1, 1))
    red = choose_spanning_tree(Network(nodes, arcs))
    with pytest.raises(TopologyError):
        cycle_h(red, np.ones(4), 0.0)


def test_h_strictly_decreasing():
    red = choose_spanning_tree(ring_network(5))
    qs = np.linspace(-20, 20, 400)
    hv = cycle_h_many(red, np.full(5, 1.5), qs)
    assert np.all(np.diff(hv) < 0)


def test_symmetric_cycle_midpoint():
    red = choose_spanning_tree(symmetric_two_cycle())
    q = solve_cycle_flow(red, [1.0, 1.0], tol=1e-12)
    b = red.beta[red.cycle_arcs]
    assert q == pytest.approx(0.5 * (b[0] + b[1]), abs=1e-10)


def test_skewed_phi_pulls_root_toward_heavy_arc():
    red = choose_spanning_tree(symmetric_two_cycle())
    b = red.beta
    q_even = solve_cycle_flow(red, [1.0, 1.0], tol=1e-12)
    q_skew = solve_cycle_flow(red, [100.0, 1.0], tol=1e-12)
    assert abs(q_skew - b[0]) < abs(q_even - b[0])


def test_n3_root_against_brentq():
    red = choose_spanning_tree(ring_network(3))
    q = solve_cycle_flow(red, np.ones(3), tol=1e-13)
    bs = red.beta_sorted()
    ref = brentq(lambda t: cycle_h(red, np.ones(3), t), bs[0], bs[-1], xtol=1e-14)
    assert q == pytest.approx(ref, abs=1e-10)
    # frozen from brentq; on (-8, 0) h reduces to q^2 - 20 q - 60, root 10 - 4 sqrt(10)
    assert q == pytest.approx(-2.649110640673517, abs=1e-10)
    assert q == pytest.approx(10 - 4 * math.sqrt(10), abs=1e-10)


def test_root_residual_within_tolerance():
    rng = np.random.default_rng(3)
    for n in (3, 4, 5):
        red = choose_spanning_tree(ring_network(n))
        for _ in range(20):
            phi = rng.uniform(1, 4, n)
            q = solve_cycle_flow(red, phi)
            scale = 1 + phi.sum() * np.abs(red.beta).max() ** 2
            assert abs(cycle_h(red, phi, q)) <= 1e-8 * scale


def test_uniqueness_from_both_ends():
    rng = np.random.default_rng(4)
    for n in (2, 3, 4):
        red = choose_spanning_tree(ring_network(n))
        bs = red.beta_sorted()
        for phi in rng.uniform(1, 3, size=(100, n)):
            q = solve_cycle_flow(red, phi, tol=1e-12)
            r1 = brentq(lambda t: cycle_h(red, phi, t), bs[0], bs[-1], xtol=1e-13)
            assert q == pytest.approx(r1, abs=1e-9)


def test_scaling_covariance():
    red = choose_spanning_tree(ring_network(4))
    phi = np.array([1.0, 2.0, 1.5, 3.0])
    for q in (-3.0, 0.0, 4.0):
        assert cycle_h(red, 2.5 * phi, q) == pytest.approx(2.5 * cycle_h(red, phi, q))
    assert solve_cycle_flow(red, 2.5 * phi, tol=1e-12) == pytest.approx(solve_cycle_flow(red, phi, tol=1e-12), abs=1e-9)


def test_nonpositive_phi_rejected():
    red = choose_spanning_tree(ring_network(3))
    with pytest.raises(ValueError):
        solve_cycle_flow(red, [1.0, 0.0, 1.0])


def test_bracket_failure_surfaces():
    red = choose_spanning_tree(ring_network(3))
    with pytest.raises(BracketError):
        solve_cycle_flow(red, [1.0, np.nan, 1.0])


def test_nominal_examples():
    n2 = ring_network(2)
    assert nominal_check(n2, choose_spanning_tree(n2), [1.0, 1.0]).feasible
    n3 = ring_network(3, 4.0)
    assert not nominal_check(n3, choose_spanning_tree(n3), [4.0, 4.0, 4.0]).feasible


def test_no_pressure_bounds_always_feasible():
    rng = np.random.default_rng(5)
    for n in range(2, 8):
        net = ring_network(n, 4.0).without_pressure_bounds()
        red = choose_spanning_tree(net)
        for phi in rng.uniform(1, 4, size=(5, n)):
            res = nominal_check(net, red, phi)
            assert res.feasible
            assert math.isinf(res.eta_interval[1])


def test_potn_equivalence_random():
    rng = np.random.default_rng(6)
    seen = 0
    for _ in range(20):
        net = random_cycle(rng)
        red = choose_spanning_tree(net)
        phi = rng.uniform(1, 2, len(net.arcs))
        res = nominal_check(net, red, phi)
        if res.feasible:
            seen += 1
            assert potn_residual(net, phi, res.flows, res.pressures) <= 1e-7
    assert seen > 0


def test_flow_direction_matches_pressure_drop():
    # every arc: pressure decreases along the physical flow, which is -flows in this convention
    net = ring_network(4)
    red = choose_spanning_tree(net)
    res = nominal_check(net, red, np.ones(4))
    idx = net.index_of()
    for k, a in enumerate(net.arcs):
        drop = res.pressures[idx[a.tail]] - res.pressures[idx[a.head]]
        assert drop == pytest.approx(-signed_square(res.flows[k]), abs=1e-9)
