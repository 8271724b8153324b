"""Held-out policy values, paired t-tests, regret and the tree-class complexity bound."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from .core import TreePolicy, as_score_array, predict
from .errors import DimensionMismatch, ParameterOutOfRange


@dataclass(frozen=True, eq=False)
class PolicyValueReport:
    value: float
    std_error: float
    n_test: int
    per_obs: np.ndarray

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_test": self.n_test}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _per_obs(scores, tree, features) -> np.ndarray:
    S = as_score_array(scores)
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != S.shape[0]:
        raise DimensionMismatch(f"features {X.shape} do not match scores {S.shape}")
    return S[np.arange(S.shape[0]), predict(tree, X)]


def test_value_report(scores_test, tree: TreePolicy, features_test) -> PolicyValueReport:
    """Mean and standard error of the tree's per-observation test scores.

    The caller is responsible for building ``scores_test`` with nuisances that
    never saw the test rows' outcomes.
    """
    terms = _per_obs(scores_test, tree, features_test)
    n = terms.shape[0]
    se = float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return PolicyValueReport(float(np.mean(terms)), se, n, terms)


# pytest would otherwise try to collect the function above
test_value_report.__test__ = False


class TTestResult(NamedTuple):
    mean_diff: float
    t_stat: float
    p_value: float
    degenerate: bool = False


def t_test_p_value(t: float, df: float) -> float:
    """Two-sided p-value ``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    # 2 * sf(|t|) = I_{df/(df+t^2)}(df/2, 1/2), written to stay accurate in the far tail
    return float(special.betainc(0.5 * df, 0.5, df / (df + t * t)))


def paired_t_test(diffs) -> TTestResult:
    diffs = np.asarray(diffs, dtype=np.float64)
    n = diffs.shape[0]
    if n < 2:
        raise ParameterOutOfRange(f"t-test needs at least 2 observations, got {n}")
    mean = float(np.mean(diffs))
    if np.all(diffs == 0):
        return TTestResult(0.0, 0.0, 1.0)
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        # identical nonzero differences: no variance to test against
        return TTestResult(mean, math.copysign(math.inf, mean), 0.0, True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(mean, t, t_test_p_value(t, n - 1))


def value_difference_ttest(scores, t1: TreePolicy, t2: TreePolicy, features) -> TTestResult:
    """Paired two-sided t-test of ``<pi_1(X_i) - pi_2(X_i), Gamma_i>`` against zero."""
    return paired_t_test(_per_obs(scores, t1, features) - _per_obs(scores, t2, features))


def regret_against(truth, tree: TreePolicy, eval_points, reference: Optional[TreePolicy] = None) -> float:
    """Mean shortfall of ``tree`` against the best action under the true mean rewards.

    ``truth.mean_rewards(X)`` must return the exact ``m x d`` reward means. With
    ``reference`` the benchmark is that policy instead of the pointwise optimum.
    """
    X = np.asarray(eval_points, dtype=np.float64)
    mu = truth.mean_rewards(X)
    rows = np.arange(X.shape[0])
    best = mu.max(axis=1) if reference is None else mu[rows, predict(reference, X)]
    return float(np.mean(best - mu[rows, predict(tree, X)]))


def random_policy_regret(truth, eval_points, reference: Optional[TreePolicy] = None) -> float:
    """Expected regret of picking an action uniformly at random at every point."""
    X = np.asarray(eval_points, dtype=np.float64)
    mu = truth.mean_rewards(X)
    best = mu.max(axis=1) if reference is None else mu[np.arange(X.shape[0]), predict(reference, X)]
    return float(np.mean(best - mu.mean(axis=1)))


def kappa_bound(L: int, p: int, d: int) -> float:
    """Closed-form upper bound on the entropy integral of depth-``L`` trees (natural logs)."""
    if L < 1 or p < 1 or d < 2:
        raise ParameterOutOfRange(f"need L >= 1, p >= 1, d >= 2; got L={L}, p={p}, d={d}")
    leaves = 2**L
    return math.sqrt((leaves - 1) * math.log(p) + leaves * math.log(d)) + (4.0 / 3.0) * L**0.25 * math.sqrt(
        leaves - 1
    )
