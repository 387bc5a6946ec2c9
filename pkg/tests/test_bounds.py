import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphagame.bounds import (AlphaReport, DerivativeBounds, Exponential, GraphSpec, Power, alpha_bound_general,
                              branching_admissible,
                              crowd_alpha, game_alpha, read_edge_list, rebalance_tree, tree_levels,
                              zeta_asymptotic_bound, zeta_exact)
from alphagame.cli import complete_tree
from alphagame.costs import CrowdCost
from alphagame.game import TimeGrid
from alphagame.kernels import Gaussian, Quadratic
from alphagame.presets import PRESETS, get_preset


def zeta_naive(q):
    N = len(q)
    best = 0.0
    for i in range(N):
        s = 0.0
        for j in range(N):
            if j != i:
                s += abs(q[j][i] - q[i][j])
        best = max(best, s)
    return best / (N - 1)


def random_tree(n, rng):
    return [(v, int(rng.integers(v))) for v in range(1, n)]


def random_connected(n, rng, extra):
    edges = set((min(u, v), max(u, v)) for u, v in random_tree(n, rng))
    for _ in range(extra):
        u, v = rng.integers(n, size=2)
        if u != v:
            edges.add((int(min(u, v)), int(max(u, v))))
    return sorted(edges)


def test_general_bound_zero():
    rep = alpha_bound_general(DerivativeBounds.zeros(4), 1.0, 1.0, 1.0)
    assert rep.bound == 0.0


def test_general_bound_single_term():
    z = np.zeros((2, 2))
    aa = np.array([[0, 1.0], [1.0, 0]])
    rep = alpha_bound_general(DerivativeBounds(z, z, z, aa, z), 1.0, [1.0, 1.0], 1.0)
    assert rep.bound == 0.5
    assert rep.terms["aa_f"] == 0.5


def test_general_bound_by_hand():
    rng = np.random.default_rng(0)
    tabs = [rng.uniform(size=(3, 3)) for _ in range(5)]
    B, U, T = np.array([1.0, 2.0, 0.5]), np.array([0.3, 1.0, 2.0]), 2.0
    rep = alpha_bound_general(DerivativeBounds(*tabs), B, U, T)
    best = 0.0
    for i in range(3):
        s = 0.0
        for j in range(3):
            if j != i:
                s += U[i] * U[j] * (T * B[i] * B[j] * tabs[0][i, j] + math.sqrt(T) * B[i] * tabs[1][i, j]
                                    + math.sqrt(T) * B[j] * tabs[2][i, j] + tabs[3][i, j] + B[i] * B[j] * tabs[4][i, j])
        best = max(best, 0.5 * s)
    assert rep.bound == pytest.approx(best, rel=1e-14)
    assert abs(rep.bound - sum(rep.terms.values())) <= 1e-12


def test_negative_inputs_rejected():
    with pytest.raises(ValueError):
        alpha_bound_general(DerivativeBounds.zeros(2), -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        DerivativeBounds(-np.ones((2, 2)), *(np.zeros((2, 2)),) * 4)


def test_crowd_examples():
    sym = CrowdCost(0.1, Gaussian(100.0, 100.0), np.ones((4, 4)) - np.eye(4), 1.0, np.zeros((4, 2)))
    assert crowd_alpha(sym, 1.0, 5.0, 1.0).bound == 0.0
    q = np.zeros((3, 3))
    q[0, 1] = 2.0
    asym = CrowdCost(0.1, Quadratic(), q, 1.0, np.zeros((3, 2)))
    rep = crowd_alpha(asym, 1.0, 1.0, 1.0)
    assert rep.inputs["zeta_N"] == 1.0
    assert rep.bound == 0.5
    parts = rep.terms
    assert abs(rep.bound - parts["half_T_B2_U2"] * parts["kappa"] * parts["zeta"]) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), N=st.integers(2, 7))
def test_general_reduces_to_crowd(seed, N):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0, 3, size=(N, N))
    np.fill_diagonal(q, 0)
    cost = CrowdCost(0.1, Gaussian(2.0, 3.0), q, 1.0, np.zeros((N, 2)))
    B, U, T = rng.uniform(0.1, 2, size=3)
    general = alpha_bound_general(DerivativeBounds.from_crowd(cost), B, U, T).bound
    assert general == pytest.approx(crowd_alpha(cost, B, U, T).bound, rel=1e-10, abs=1e-12)


def test_sampled_bounds_approach_closed_form():
    q = np.array([[0, 2.0, 0], [0, 0, 1.0], [0.5, 0, 0]])
    cost = CrowdCost(0.3, Gaussian(1.0, 1.0), q, 1.0, np.zeros((3, 2)))
    est = DerivativeBounds.sampled(cost, -1.0, 1.0, samples=10_000, seed=1)
    exact = DerivativeBounds.from_crowd(cost)
    assert est.method == "sampled sup" and est.samples == 10_000
    assert np.all(est.xx_f <= exact.xx_f + 1e-12)
    assert np.all(est.xx_f >= 0.8 * exact.xx_f)
    for name in ("xa_f", "ax_f", "aa_f", "xx_g"):
        assert np.all(getattr(est, name) <= 1e-12)


def test_game_alpha_uses_drift_norm():
    rep = game_alpha(get_preset("aversion").game, TimeGrid(1.0, 50))
    assert rep.inputs["B"] == pytest.approx(1.0, rel=1e-14)
    assert rep.bound == 0.0
    assert json.loads(rep.to_json())["kind"] == "crowd"


def test_zeta_exact_examples(rng):
    assert zeta_exact(np.ones((3, 3)) - np.eye(3)) == 0.0
    assert zeta_exact([[0, 3.0], [1.0, 0]]) == 2.0
    for _ in range(20):
        N = int(rng.integers(2, 9))
        q = rng.uniform(size=(N, N))
        np.fill_diagonal(q, 0)
        assert zeta_exact(q) == pytest.approx(zeta_naive(q.tolist()), rel=1e-14)
    with pytest.raises(ValueError):
        zeta_exact([[1.0, 0], [0, 0]])


def test_rebalance_path():
    g = GraphSpec(7, [(k, k + 1) for k in range(6)], Exponential(0.5))
    depths = rebalance_tree(g, 0)
    assert [depths[v] for v in range(7)] == [0, 1, 1, 2, 2, 2, 2]


def test_rebalance_star_and_complete_tree():
    star = GraphSpec(6, [(0, k) for k in range(1, 6)], Exponential(0.5))
    assert rebalance_tree(star, 0) == {0: 0, 1: 1, 2: 1, 3: 1, 4: 1, 5: 1}
    n, edges = complete_tree(3, 3)
    tree = GraphSpec(n, edges, Exponential(0.5), degree=3)
    dist = tree.distances()[0]
    depths = rebalance_tree(tree, 0)
    assert all(depths[v] == dist[v] for v in range(n))


def test_rebalance_excludes_unreachable():
    g = GraphSpec(5, [(0, 1), (1, 2), (3, 4)], Exponential(0.5))
    assert set(rebalance_tree(g, 0)) == {0, 1, 2}


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 60), extra=st.integers(0, 30))
def test_rebalancing_never_increases_depth(seed, n, extra):
    rng = np.random.default_rng(seed)
    g = GraphSpec(n, random_connected(n, rng, extra), Exponential(0.5))
    dist = g.distances()
    root = int(rng.integers(n))
    for v, c2 in rebalance_tree(g, root).items():
        assert c2 <= dist[root, v]


def test_levels():
    assert tree_levels(1, 3) == 0
    assert tree_levels(4, 3) == 1
    assert tree_levels(5, 3) == 2
    assert tree_levels(13, 3) == 2
    assert tree_levels(14, 3) == 3


def test_regimes():
    n, edges = complete_tree(3, 4)  # internal vertices have degree 4
    assert zeta_asymptotic_bound(GraphSpec(n, edges, Exponential(0.25))).regime == "(ln N)/N"
    assert zeta_asymptotic_bound(GraphSpec(n, edges, Exponential(0.2))).regime == "1/N"
    hi = zeta_asymptotic_bound(GraphSpec(n, edges, Exponential(0.6)))
    assert hi.regime == "N^(ln rho/ln d_G)" and hi.degree == 4
    assert hi.rate_exponent == pytest.approx(math.log(0.6) / math.log(4), rel=1e-14)
    pw = zeta_asymptotic_bound(GraphSpec(n, edges, Power(1.0)))
    assert pw.rate_exponent == 1.0
    assert pw.rate == "(ln ln N)/(ln N)^1"


def path(n):
    return [(k, k + 1) for k in range(n - 1)]


def test_exponential_bound_by_hand():
    zb = zeta_asymptotic_bound(GraphSpec(15, path(15), Exponential(0.3), amplitude=2.0))
    assert zb.levels == 3 and zb.degree == 2
    assert zb.bound == pytest.approx(2.0 * (0.6 + 0.36 + 0.216) / 14, rel=1e-14)


def test_power_split_by_hand():
    zb = zeta_asymptotic_bound(GraphSpec(31, path(31), Power(2.0)))  # L = 4
    M = min(math.floor(2.0 * math.log(4) / math.log(2)), 4)
    terms = [2**l / l**2 for l in range(1, 5)]
    expected = (sum(terms[:4 - M]) + M * max(terms[4 - M:])) / 30
    assert zb.split == M
    assert zb.bound == pytest.approx(expected, rel=1e-14)


def test_branching_override_checked():
    n, edges = complete_tree(3, 4)
    tree = GraphSpec(n, edges, Exponential(0.2), degree=3)
    assert not branching_admissible(tree)
    with pytest.raises(ValueError, match="branching factor"):
        zeta_asymptotic_bound(tree)
    # with d = 3 the finite-N formula would sit below the true value
    L = tree_levels(n, 3)
    naive = sum(0.6**ell for ell in range(1, L + 1)) / (n - 1)
    exact = zeta_exact(tree.interaction_table(weights="exact"))
    assert exact > naive
    assert exact <= zeta_asymptotic_bound(GraphSpec(n, edges, Exponential(0.2))).bound
    star = GraphSpec(4, [(0, 1), (0, 2), (0, 3)], Exponential(0.4), degree=2)
    assert not branching_admissible(star)
    assert branching_admissible(GraphSpec(n, edges, Exponential(0.2)))
    # a 4-cycle fits a binary packing from every root, so the override is accepted
    cycle = GraphSpec(4, [(0, 1), (1, 2), (2, 3), (0, 3)], Exponential(0.4), degree=2)
    assert branching_admissible(cycle)
    assert zeta_asymptotic_bound(cycle).degree == 2


def test_degree_below_two_rejected():
    g = GraphSpec(2, [(0, 1)], Exponential(0.5))
    with pytest.raises(ValueError):
        zeta_asymptotic_bound(g)


def test_graph_validation():
    with pytest.raises(ValueError):
        GraphSpec(3, [(0, 0)], Exponential(0.5))
    with pytest.raises(ValueError):
        GraphSpec(3, [(0, 1), (1, 0)], Exponential(0.5))
    with pytest.raises(ValueError):
        Exponential(1.5)
    with pytest.raises(ValueError):
        Power(0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 200), rho=st.floats(0.05, 0.95),
       law=st.sampled_from(["exp", "power"]))
def test_bound_dominates_sampled_tables(seed, n, rho, law):
    rng = np.random.default_rng(seed)
    decay = Exponential(rho) if law == "exp" else Power(0.5 + 3 * rho)
    g = GraphSpec(n, random_connected(n, rng, int(rng.integers(0, n))), decay, amplitude=1.5)
    if g.max_degree < 2:
        return
    q = g.interaction_table(seed=seed)
    assert zeta_exact(q) <= zeta_asymptotic_bound(g).bound * (1 + 1e-12)


def test_interaction_table_meets_decay_law(rng):
    g = GraphSpec(30, random_tree(30, rng), Exponential(0.5), amplitude=2.0)
    q = g.interaction_table(seed=3)
    D = g.distances()
    asym = np.abs(q - q.T)
    off = ~np.eye(30, dtype=bool)
    assert np.all(q >= 0) and np.all(np.diag(q) == 0)
    assert np.all(asym[off] <= 2.0 * 0.5 ** D[off] + 1e-15)
    exact = g.interaction_table(weights="exact")
    np.testing.assert_allclose(np.abs(exact - exact.T)[off], 2.0 * 0.5 ** D[off], rtol=1e-14)


def test_edge_list_file(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# a path\n0 1\n1 2  # tail\n\n2 3\n")
    n, edges = read_edge_list(path)
    assert n == 4 and edges == [(0, 1), (1, 2), (2, 3)]
    path.write_text("0 1 2\n")
    with pytest.raises(ValueError):
        read_edge_list(path)


def test_report_json_round_trip():
    rep = AlphaReport(1.5, {"a": 1.0, "b": 0.5}, {"T": 1.0})
    assert json.loads(rep.to_json()) == {"kind": "general", "bound": 1.5, "terms": {"a": 1.0, "b": 0.5},
                                         "inputs": {"T": 1.0}, "zeta": {}}
