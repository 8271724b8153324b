import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_value
from policylearn.core import Branch, Leaf, ObservationalDataset, predict, tree_to_json
from policylearn.nuisance import NuisancePredictions
from policylearn.scoring import aipw_scores
from policylearn.tree_search import (
    SearchConfig,
    SearchStats,
    best_leaf,
    caipwl_fit,
    depth2_solve,
    greedy_tree,
    presort,
    search_tree,
    to_fixed_shape,
    tree_objective,
)

X1 = np.array([[0.1], [0.2], [0.8], [0.9]])
S1 = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_S = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0]])


@st.composite
def instances(draw, max_n=12, max_p=3, max_d=3):
    n = draw(st.integers(1, max_n))
    p = draw(st.integers(1, max_p))
    d = draw(st.integers(2, max_d))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    # few distinct values so ties and merged runs are common
    X = r.integers(0, draw(st.integers(1, 6)), size=(n, p)).astype(float)
    S = r.integers(-4, 5, size=(n, d)).astype(float)
    return X, S


def test_presort_examples():
    s = presort(np.array([[0.3], [0.1], [0.3]]))
    assert s.order[0].tolist() == [1, 0, 2]
    assert s.n_candidates(0) == 1
    assert presort(np.array([[0.1], [0.2], [0.3]])).order[0].tolist() == [0, 1, 2]
    assert presort(np.full((4, 1), 2.0)).n_candidates(0) == 0


def test_best_leaf_examples():
    assert best_leaf([[1, 0], [0, 3]]) == (3.0, 1)
    assert best_leaf(np.zeros((3, 2))) == (0.0, 0)
    assert best_leaf(np.empty((0, 2))) == (0.0, 0)


def test_depth2_separable_example():
    v, t = depth2_solve(X1, S1)
    assert v == 4.0
    assert t == Branch(0, 0.5, Leaf(0), Leaf(1))


def test_depth2_degenerate_column_and_zero_scores():
    v, t = depth2_solve(np.ones((3, 1)), [[0, 1], [0, 1], [0.5, 0]])
    assert (v, t) == (2.0, Leaf(1))
    v, t = depth2_solve(X1, np.zeros((4, 2)))
    assert v == 0.0 and t == Branch(0, (0.1 + 0.2) / 2, Leaf(0), Leaf(0))


def test_search_base_case_is_best_leaf(rng):
    S = rng.normal(size=(20, 3))
    v, t = search_tree(rng.normal(size=(20, 2)), S, SearchConfig(depth=1))
    assert (v, t.action) == best_leaf(S)


def test_xor_needs_depth_three():
    assert search_tree(XOR_X, XOR_S, SearchConfig(depth=3))[0] == 4.0
    # any single split leaves one diagonal and one off-diagonal point per side
    assert search_tree(XOR_X, XOR_S, SearchConfig(depth=2))[0] == 2.0
    assert brute_force_value(XOR_X, XOR_S, 2) == 2.0


@given(instances(), st.integers(1, 3))
def test_matches_brute_force(inst, depth):
    X, S = inst
    v, tree = search_tree(X, S, SearchConfig(depth=depth))
    assert v == brute_force_value(X, S, depth)
    assert tree.depth() <= depth
    assert tree_objective(tree, X, S) == pytest.approx(v, abs=1e-9 * len(X))


@given(instances(max_n=30), st.sampled_from([2, 3, 4]))
def test_pruning_parallel_and_memo_do_not_change_result(inst, depth):
    X, S = inst
    ref = search_tree(X, S, SearchConfig(depth=depth, prune=False))
    for cfg in (
        SearchConfig(depth=depth),
        SearchConfig(depth=depth, parallel_root=True, threads=3),
        SearchConfig(depth=depth, memoize=True),
    ):
        assert search_tree(X, S, cfg) == ref


@given(instances(max_n=25), st.integers(1, 3))
def test_depth_monotone(inst, depth):
    X, S = inst
    a = search_tree(X, S, SearchConfig(depth=depth))[0]
    b = search_tree(X, S, SearchConfig(depth=depth + 1))[0]
    assert b >= a


@given(instances(max_n=40), st.integers(2, 3), st.integers(2, 10))
def test_skip_and_greedy_never_beat_exact(inst, depth, skip):
    X, S = inst
    exact = search_tree(X, S, SearchConfig(depth=depth))[0]
    assert search_tree(X, S, SearchConfig(depth=depth, skip=skip))[0] <= exact
    assert greedy_tree(X, S, depth)[0] <= exact


def test_objective_consistency_continuous(rng):
    X = rng.random((300, 4))
    S = rng.normal(size=(300, 3))
    v, t = search_tree(X, S, SearchConfig(depth=3))
    assert abs(tree_objective(t, X, S) - v) <= 1e-9 * 300


def test_binary_features_call_count(rng):
    X = rng.integers(0, 2, size=(5000, 6)).astype(float)
    S = rng.normal(size=(5000, 3))
    stats = SearchStats()
    search_tree(X, S, SearchConfig(depth=3), stats=stats)
    assert 0 < stats.max_child_calls_per_node <= 2 * 6 * 2


def test_fixed_shape_padding(rng):
    X = np.ones((5, 2))
    S = rng.normal(size=(5, 2))
    v, t = search_tree(X, S, SearchConfig(depth=3, fixed_shape=True))
    assert t.depth() == 3
    assert tree_objective(t, X, S) == pytest.approx(v)
    X = rng.random((50, 2))
    _, t = search_tree(X, rng.normal(size=(50, 2)), SearchConfig(depth=2))
    padded = to_fixed_shape(t, 4, X)
    assert padded.depth() == 4
    np.testing.assert_array_equal(predict(padded, X), predict(t, X))


def test_greedy_equals_exact_on_separable():
    assert greedy_tree(X1, S1, 3)[0] == search_tree(X1, S1, SearchConfig(depth=3))[0] == 4.0


def test_greedy_root_on_x7_exact_root_on_x5():
    from policylearn.simulation import SyntheticTruth, sample_features

    X = sample_features(10000, np.random.default_rng(4))
    mu = SyntheticTruth().mean_rewards(X)
    _, g = greedy_tree(X, mu, 3)
    _, e = search_tree(X, mu, SearchConfig(depth=3))
    assert g.split_dim == 6  # x7 in one-based naming
    assert e.split_dim == 4  # x5
    assert abs(e.split_value - 0.6) < 0.01


def test_caipwl_deterministic_and_passthrough(synthetic_2000):
    ds, truth = synthetic_2000
    ds = ds.subset(np.arange(500))
    a = caipwl_fit(ds, 5, 3, search_config=SearchConfig(depth=2))
    b = caipwl_fit(ds, 5, 3, search_config=SearchConfig(depth=2))
    assert tree_to_json(a.tree) == tree_to_json(b.tree) and a.value == b.value
    nf = NuisancePredictions(truth.mean_rewards(ds.features), truth.propensities(ds.features))
    res = caipwl_fit(ds, search_config=SearchConfig(depth=3), nuisances=nf)
    v, t = search_tree(ds.features, aipw_scores(ds, nf), SearchConfig(depth=3))
    assert res.tree == t and res.value == v / ds.n


def test_caipwl_leaf_when_one_arm_dominates():
    X = np.linspace(0, 1, 20)[:, None]
    A = np.arange(20) % 2
    Y = np.where(A == 1, 5.0, 0.0)
    res = caipwl_fit(ObservationalDataset(X, A, Y, 2), 2, 0, search_config=SearchConfig(depth=1))
    assert res.tree == Leaf(1)


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(depth=0)
    with pytest.raises(ValueError):
        SearchConfig(skip=0)
