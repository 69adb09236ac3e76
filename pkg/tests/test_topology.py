import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motef.errors import ConstructionError, ValidationError
from motef.topology import build_topology, metropolis_weights, spectral_gap, validate_mixing


def circulant_ring_gap(n):
    # Metropolis ring: w = 1/3 on both neighbours and the diagonal, eigenvalues 1/3 + (2/3) cos(2 pi k / n)
    lams = [1 / 3 + (2 / 3) * math.cos(2 * math.pi * k / n) for k in range(n)]
    return 1 - sorted((abs(x) for x in lams), reverse=True)[1]


def test_complete_graph_is_uniform_averaging():
    topo = build_topology("complete", 4)
    np.testing.assert_allclose(topo.W, np.full((4, 4), 0.25))
    assert topo.rho == pytest.approx(1.0)


def test_ring_two_nodes_is_single_edge():
    topo = build_topology("ring", 2)
    np.testing.assert_allclose(topo.W, [[0.5, 0.5], [0.5, 0.5]])
    assert topo.rho == pytest.approx(1.0)


@pytest.mark.parametrize("n", [3, 5, 8, 40, 41])
def test_ring_gap_matches_circulant_formula(n):
    assert build_topology("ring", n).rho == pytest.approx(circulant_ring_gap(n), abs=1e-12)


def test_single_node():
    topo = build_topology("star", 1)
    assert topo.W.shape == (1, 1) and topo.W[0, 0] == 1.0
    assert topo.rho == 1.0


@pytest.mark.parametrize(
    "kind,n,params",
    [
        ("complete", 7, {}),
        ("ring", 12, {}),
        ("star", 9, {}),
        ("grid", 16, {}),
        ("grid", 40, {"rows": 5, "cols": 8}),
        ("erdos_renyi", 30, {"p": 0.2}),
        ("random_regular", 20, {"degree": 3}),
    ],
)
def test_built_topologies_satisfy_invariants(kind, n, params):
    topo = build_topology(kind, n, params, seed=3)
    W = topo.W
    assert np.array_equal(W, W.T)
    np.testing.assert_allclose(W.sum(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=1), 1, atol=1e-12)
    off = ~np.eye(n, dtype=bool)
    assert not np.any((W > 0) & off & ~topo.adjacency)
    assert 0 < topo.rho <= 1
    assert topo.sigma_max_sq <= 4 + 1e-12
    assert validate_mixing(W).passed


def test_metropolis_weights_by_hand():
    # path 0-1-2: deg = (1, 2, 1), every edge weight 1/3
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool)
    expected = np.array([[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]])
    np.testing.assert_allclose(metropolis_weights(A), expected)


def test_lazy_weights_are_psd():
    topo = build_topology("ring", 10, weights="lazy")
    assert np.linalg.eigvalsh(topo.W).min() >= -1e-12
    assert topo.self_weight_scheme == "lazy"


def test_grid_is_four_neighbour_without_wraparound():
    topo = build_topology("grid", 9)
    assert sorted(topo.degrees.tolist()) == [2, 2, 2, 2, 3, 3, 3, 3, 4]
    assert topo.neighbors(4) == [1, 3, 5, 7]


def test_random_families_are_deterministic():
    a = build_topology("erdos_renyi", 25, {"p": 0.15}, seed=11)
    b = build_topology("erdos_renyi", 25, {"p": 0.15}, seed=11)
    assert np.array_equal(a.W, b.W)


@pytest.mark.parametrize(
    "kind,n,params",
    [
        ("erdos_renyi", 10, {"p": 0.0}),
        ("erdos_renyi", 10, {"p": 1.5}),
        ("erdos_renyi", 10, {}),
        ("random_regular", 5, {"degree": 3}),
        ("random_regular", 5, {"degree": 5}),
        ("grid", 10, {}),
        ("grid", 10, {"rows": 3, "cols": 4}),
        ("hypercube", 8, {}),
    ],
)
def test_invalid_params(kind, n, params):
    with pytest.raises(ValidationError):
        build_topology(kind, n, params)


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_invalid_n(n):
    with pytest.raises(ValidationError):
        build_topology("ring", n)


def test_retry_budget_exhaustion():
    # p tiny on 60 nodes: essentially never connected
    with pytest.raises(ConstructionError):
        build_topology("erdos_renyi", 60, {"p": 1e-4})


def test_spectral_gap_trivial_cases():
    assert spectral_gap(np.full((5, 5), 0.2)) == pytest.approx(1.0)
    assert spectral_gap(np.eye(3)) == 0.0


def test_spectral_gap_rejects_asymmetric():
    with pytest.raises(ValidationError):
        spectral_gap(np.array([[0.6, 0.5], [0.4, 0.5]]))
    with pytest.raises(ValidationError):
        spectral_gap(np.ones((2, 3)))


def test_power_iteration_path_agrees_with_eigensolver(monkeypatch):
    import motef.topology as topology

    W = build_topology("erdos_renyi", 60, {"p": 0.1}, seed=2).W
    exact = spectral_gap(W)
    monkeypatch.setattr(topology, "EIGH_MAX_N", 10)
    assert spectral_gap(W) == pytest.approx(exact, rel=1e-6)


def test_validate_mixing_reports():
    uniform = validate_mixing(np.full((4, 4), 0.25))
    assert uniform.passed
    assert uniform.sigma_max_sq == pytest.approx(1.0)

    bad = validate_mixing(np.array([[0.6, 0.5], [0.4, 0.5]]))
    assert not bad.passed
    assert bad.symmetry_defect == pytest.approx(0.1)
    assert bad.row_sum_defect == pytest.approx(0.1)
    assert bad.col_sum_defect == pytest.approx(0.0)

    ident = validate_mixing(np.eye(2))
    assert not ident.passed and ident.rho == 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.sampled_from([0.1, 0.5, 1.0]))
def test_gossip_contracts_consensus_error(seed, gamma):
    rng = np.random.default_rng(seed)
    topo = build_topology("erdos_renyi", 12, {"p": 0.3}, seed=seed)
    X = rng.standard_normal((4, 12))
    xbar = X.mean(axis=1, keepdims=True)
    before = np.sum((X - xbar) ** 2)
    after = np.sum((X @ topo.W - xbar) ** 2)
    assert after <= (1 - topo.rho) * before + 1e-9
    # damped gossip I + gamma (W - I) keeps a gap of at least gamma * rho
    Wg = np.eye(12) + gamma * (topo.W - np.eye(12))
    assert spectral_gap(Wg) >= gamma * topo.rho - 1e-12


def test_csv_export_round_trips(tmp_path):
    topo = build_topology("erdos_renyi", 9, {"p": 0.5}, seed=1)
    path = tmp_path / "w.csv"
    topo.to_csv(path)
    back = np.loadtxt(path, delimiter=",")
    assert np.array_equal(back, topo.W)


def test_topology_arrays_are_read_only():
    topo = build_topology("ring", 5)
    with pytest.raises(ValueError):
        topo.W[0, 0] = 1.0
