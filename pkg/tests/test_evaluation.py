import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import kappa_bound_mp, student_t_two_sided_p
from policylearn.core import Branch, Leaf, ObservationalDataset, predict
from policylearn.errors import DimensionMismatch, ParameterOutOfRange
from policylearn.evaluation import (
    kappa_bound,
    paired_t_test,
    random_policy_regret,
    regret_against,
    t_test_p_value,
    test_value_report as value_report,
    value_difference_ttest,
)
from policylearn.scoring import ipw_scores, policy_value
from policylearn.simulation import SyntheticTruth, sample_features

TREE = Branch(0, 0.5, Leaf(0), Leaf(1))


def test_report_examples():
    r = value_report(np.tile([1.0, 0.0], (5, 1)), Leaf(0), np.zeros((5, 1)))
    assert (r.value, r.std_error, r.n_test) == (1.0, 0.0, 5)
    r = value_report([[1.0, 0.0], [3.0, 0.0]], Leaf(0), np.zeros((2, 1)))
    assert (r.value, r.std_error) == (2.0, 1.0)
    assert json.loads(r.to_json()) == {"value": 2.0, "std_error": 1.0, "n_test": 2}
    with pytest.raises(DimensionMismatch):
        value_report([[1.0, 0.0]], Leaf(0), np.zeros((2, 1)))


def test_report_on_ipw_scores():
    A = np.array([0, 1, 0, 1])
    Y = np.array([1.0, 2.0, 3.0, 4.0])
    E = np.full((4, 2), 0.5)
    ds = ObservationalDataset(np.zeros((4, 1)), A, Y, 2)
    r = value_report(ipw_scores(ds, E), Leaf(0), ds.features)
    assert r.value == np.sum(np.where(A == 0, Y / 0.5, 0.0)) / 4


@given(st.integers(2, 30), st.data())
def test_report_matches_policy_value(n, data):
    X = data.draw(hnp.arrays(float, (n, 1), elements=st.floats(0, 1)))
    S = data.draw(hnp.arrays(float, (n, 2), elements=st.floats(-10, 10)))
    r = value_report(S, TREE, X)
    assert r.value == policy_value(S, predict(TREE, X))
    assert r.std_error == pytest.approx(np.std(r.per_obs, ddof=1) / np.sqrt(n))


def test_ttest_examples():
    X = np.linspace(0, 1, 6)[:, None]
    S = np.arange(12.0).reshape(6, 2)
    assert tuple(value_difference_ttest(S, TREE, TREE, X))[:3] == (0.0, 0.0, 1.0)
    assert tuple(paired_t_test([1.0, -1.0]))[:3] == (0.0, 0.0, 1.0)
    r = paired_t_test([1.0, 1.0, 1.0, 1.0])
    assert r.degenerate and r.p_value == 0.0 and r.mean_diff == 1.0
    with pytest.raises(ParameterOutOfRange):
        paired_t_test([1.0])


@given(st.integers(3, 30), st.data())
def test_ttest_antisymmetric(n, data):
    X = data.draw(hnp.arrays(float, (n, 1), elements=st.floats(0, 1)))
    S = data.draw(hnp.arrays(float, (n, 2), elements=st.integers(-20, 20).map(float)))
    a = value_difference_ttest(S, TREE, Leaf(1), X)
    b = value_difference_ttest(S, Leaf(1), TREE, X)
    assert a.mean_diff == -b.mean_diff
    assert a.p_value == pytest.approx(b.p_value, abs=1e-15)


@pytest.mark.parametrize(
    "t,df",
    [(0.5, 1), (2.0, 1), (30.0, 1), (0.1, 2), (1.5, 3), (-2.5, 4), (3.0, 5), (0.0, 7), (1.96, 10), (-4.0, 12),
     (2.2, 19), (0.7, 29), (6.0, 30), (1.0, 50), (3.3, 99), (-1.2, 250), (2.58, 1000), (8.0, 40), (12.0, 3),
     (0.25, 0.5)],
)
def test_t_pvalues_against_quadrature(t, df):
    assert abs(t_test_p_value(t, df) - student_t_two_sided_p(t, df)) < 1e-8


def test_kappa_examples():
    assert abs(kappa_bound(2, 2, 2) - 4.9489) < 1e-3
    assert kappa_bound(2, 2, 2) == pytest.approx(kappa_bound_mp(2, 2, 2), abs=1e-12)
    assert kappa_bound(1, 1, 2) == pytest.approx(math.sqrt(2 * math.log(2)) + 4 / 3)
    assert kappa_bound(1, 1, 2) == pytest.approx(2.511, abs=1e-3)
    for bad in ((0, 2, 2), (2, 0, 2), (2, 2, 1)):
        with pytest.raises(ParameterOutOfRange):
            kappa_bound(*bad)


@given(st.integers(1, 8), st.integers(1, 50), st.integers(2, 10))
def test_kappa_increases_with_depth(L, p, d):
    assert kappa_bound(L + 1, p, d) > kappa_bound(L, p, d)


class _ByAction:
    """Truth whose action a earns a everywhere, so the optimum is the largest action."""

    def mean_rewards(self, X):
        return np.tile(np.arange(3.0), (len(X), 1))


def test_regret_examples():
    truth = SyntheticTruth()
    X = sample_features(5000, np.random.default_rng(0))
    opt = truth.optimal_actions(X)
    assert regret_against(_ByAction(), Leaf(2), X) == 0.0
    assert regret_against(_ByAction(), Leaf(0), X) == 2.0
    region0 = np.full((10, 10), 0.5)
    region0[:, 4], region0[:, 6] = 0.3, 0.5
    assert regret_against(truth, Leaf(1), region0) == 1.0
    assert regret_against(truth, Leaf(0), region0) == 0.0
    mu = truth.mean_rewards(X)
    assert np.all(mu[np.arange(len(X)), opt] == mu.max(axis=1))


@given(st.integers(0, 2), st.floats(0, 1), st.integers(0, 9))
def test_regret_non_negative(a, thr, dim):
    X = sample_features(500, np.random.default_rng(1))
    assert regret_against(SyntheticTruth(), Branch(dim, thr, Leaf(a), Leaf(2 - a)), X) >= 0.0


def test_random_regret_against_reference_tree():
    from policylearn.simulation import reference_tree

    X = sample_features(200_000, np.random.default_rng(8))
    r = random_policy_regret(SyntheticTruth(), X, reference=reference_tree())
    assert abs(r - 0.8679667) < 0.02
