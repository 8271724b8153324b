"""Exact and approximate search for the best depth-L tree policy.

The objective is ``sum_i scores[i, tree(X_i)]``. For a fixed root split the
problem decouples into independent left and right subproblems, so the search
recurses over every (dimension, split) candidate. Depth-2 subproblems are
solved in one sorted sweep per dimension by a compiled kernel.

Features are sorted once up front; every node carries a ``p x m`` index
matrix whose row ``q`` lists the node's points in ascending order of feature
``q``. Equal values are merged, so a column with ``K`` distinct values offers
``K - 1`` candidates; with skip ``A`` only every ``A``-th one is tried.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._kernels import depth2_kernel, sweep_depth3
from .core import (
    Branch,
    Leaf,
    ObservationalDataset,
    ScoreMatrix,
    TreePolicy,
    as_score_array,
    predict,
)
from .errors import DimensionMismatch


@dataclass
class SearchConfig:
    depth: int = 3
    skip: int = 1
    parallel_root: bool = False
    threads: int = 1
    memoize: bool = False
    fixed_shape: bool = False
    prune: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.skip < 1:
            raise ValueError(f"skip must be >= 1, got {self.skip}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SearchStats:
    """Instrumentation filled in by :func:`search_tree`."""

    nodes: int = 0
    child_calls: int = 0
    max_child_calls_per_node: int = 0
    kernel_calls: int = 0
    cache_hits: int = 0
    pruned: int = 0


@dataclass(frozen=True, eq=False)
class SortedColumns:
    """Per-dimension ascending (stable) order and the starts of equal-value runs."""

    order: np.ndarray
    run_starts: list

    def n_candidates(self, dim: int) -> int:
        return len(self.run_starts[dim]) - 1


def presort(features) -> SortedColumns:
    X = np.asarray(features, dtype=np.float64)
    n, p = X.shape
    order = np.empty((p, n), dtype=np.int64)
    runs = []
    for q in range(p):
        o = np.argsort(X[:, q], kind="stable")
        order[q] = o
        xs = X[o, q]
        runs.append(np.concatenate([[0], np.flatnonzero(xs[1:] != xs[:-1]) + 1]).astype(np.int64))
    return SortedColumns(order, runs)


def best_leaf(scores) -> tuple[float, int]:
    S = np.asarray(scores, dtype=np.float64)
    if S.size == 0:
        return 0.0, 0
    col = S.sum(axis=0)
    a = int(np.argmax(col))
    return float(col[a]), a


def _cuts(X, row, dim, skip):
    """Cut positions (left sizes) and split values for one node column."""
    xs = X[row, dim]
    change = np.flatnonzero(xs[1:] != xs[:-1]) + 1
    cuts = change[skip - 1 :: skip]
    lo, hi = xs[cuts - 1], xs[cuts]
    mids = lo + (hi - lo) * 0.5
    mids = np.where(mids <= lo, hi, mids)
    return cuts, mids


class _Searcher:
    def __init__(self, X, S, config: SearchConfig, stats: SearchStats):
        self.X = X
        self.S = S
        self.n, self.p = X.shape
        self.skip = config.skip
        self.config = config
        self.stats = stats
        self.cache: Optional[dict] = {} if config.memoize else None
        self.row_range = S.max(axis=1) - S.min(axis=1)
        self.row_absmax = np.abs(S).max(axis=1)

    # -- leaves and the collapsed depth-2 layer
    def leaf(self, node_idx):
        return best_leaf(self.S[node_idx[0]])

    def depth2(self, node_idx, side, want):
        self.stats.kernel_calls += 1
        best, dim, split, la, ra, leaf_val, leaf_a, cnt = depth2_kernel(
            node_idx, side, want, self.X, self.S, self.skip
        )
        if cnt == 0:
            return 0.0, Leaf(0)
        if dim < 0:
            return float(leaf_val), Leaf(int(leaf_a))
        return float(best), Branch(int(dim), float(split), Leaf(int(la)), Leaf(int(ra)))

    # -- generic recursion
    def solve(self, node_idx, L):
        if node_idx.shape[1] == 0:
            return 0.0, Leaf(0)
        if L == 1:
            v, a = self.leaf(node_idx)
            return v, Leaf(a)
        if L == 2:
            return self.depth2(node_idx, np.ones(self.n, dtype=np.bool_), True)
        key = None
        if self.cache is not None:
            key = (node_idx[0].tobytes(), L)
            hit = self.cache.get(key)
            if hit is not None:
                self.stats.cache_hits += 1
                return hit
        res = self._branch(node_idx, L, parallel=False)
        if key is not None:
            self.cache[key] = res
        return res

    def _gather(self, node_idx):
        gX = np.take_along_axis(self.X.T, node_idx, axis=1)
        gS = self.S[node_idx]
        return np.ascontiguousarray(gX), np.ascontiguousarray(gS)

    def _sweep_depth3(self, node_idx, dim, gathered, floor):
        row = node_idx[dim]
        cuts, mids = _cuts(self.X, row, dim, self.skip)
        if cuts.size == 0:
            return None, 0
        gX, gS = gathered
        cum_range = self._cum_range(row)
        v, ci, rf, ri, evaluated = sweep_depth3(
            node_idx, gX, gS, dim, cuts, self.skip, self.n,
            floor, cum_range, self.config.prune, self._slack(row),
        )
        self.stats.kernel_calls += 2 * evaluated
        self.stats.pruned += cuts.size - evaluated
        if ci < 0:
            return None, evaluated
        children = []
        for s in range(2):
            d_, la, ra, cnt = (int(t) for t in ri[s])
            if cnt == 0:
                children.append(Leaf(0))
            elif d_ < 0:
                children.append(Leaf(la))
            else:
                children.append(Branch(d_, float(rf[s, 1]), Leaf(la), Leaf(ra)))
        return (float(v), float(mids[ci]), children[0], children[1]), evaluated

    def _cum_range(self, row):
        return np.concatenate([[0.0], np.cumsum(self.row_range[row])])

    def _slack(self, row):
        return 1e-9 * (1.0 + float(self.row_absmax[row].sum()))

    def _sweep_dim(self, node_idx, L, dim, gathered=None, floor=-np.inf):
        """Best (value, split, left, right) over one dimension's candidates.

        Returns ``(None, calls)`` if nothing beats ``floor``.
        """
        if L == 3:
            return self._sweep_depth3(node_idx, dim, gathered, floor)
        row = node_idx[dim]
        cuts, mids = _cuts(self.X, row, dim, self.skip)
        cum_range = self._cum_range(row)
        slack = self._slack(row)
        side = np.zeros(self.n, dtype=np.bool_)
        best = None
        best_v = floor
        last_v, last_c = np.inf, 0
        prev = 0
        evaluated = 0
        for c, mid in zip(cuts, mids):
            if self.config.prune and last_v + (cum_range[c] - cum_range[last_c]) + slack <= best_v:
                self.stats.pruned += 1
                continue
            side[row[prev:c]] = True
            prev = c
            mask = side[node_idx]
            left_idx = node_idx[mask].reshape(self.p, -1)
            right_idx = node_idx[~mask].reshape(self.p, -1)
            lv, lt = self.solve(left_idx, L - 1)
            rv, rt = self.solve(right_idx, L - 1)
            evaluated += 1
            v = lv + rv
            last_v, last_c = v, c
            if v > best_v:
                best_v = v
                best = (v, float(mid), lt, rt)
        return best, evaluated

    def _branch(self, node_idx, L, parallel):
        dims = range(self.p)
        gathered = self._gather(node_idx) if L == 3 else None
        if parallel and self.config.threads > 1 and self.p > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                results = list(
                    pool.map(lambda q: self._sweep_dim(node_idx, L, q, gathered), dims)
                )
        else:
            # later dimensions only need to beat the incumbent, which keeps pruning tight
            results = []
            floor = -np.inf
            for q in dims:
                res = self._sweep_dim(node_idx, L, q, gathered, floor)
                if res[0] is not None:
                    floor = res[0][0]
                results.append(res)

        self.stats.nodes += 1
        calls = 2 * sum(c for _, c in results)
        self.stats.child_calls += calls
        self.stats.max_child_calls_per_node = max(self.stats.max_child_calls_per_node, calls)

        best_v, best_tree = None, None
        # reduce in dimension order with strict improvement: same tie-break as a serial scan
        for q, (best, _) in enumerate(results):
            if best is not None and (best_v is None or best[0] > best_v):
                best_v = best[0]
                best_tree = Branch(q, best[1], best[2], best[3])
        if best_tree is None:
            v, a = self.leaf(node_idx)
            return v, Leaf(a)
        return best_v, best_tree

    def root(self, node_idx, L):
        if L >= 3 and node_idx.shape[1] > 0:
            return self._branch(node_idx, L, parallel=self.config.parallel_root)
        return self.solve(node_idx, L)


def _prepare(features, scores):
    X = np.ascontiguousarray(features, dtype=np.float64)
    S = np.ascontiguousarray(as_score_array(scores), dtype=np.float64)
    if X.ndim != 2 or S.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"features {X.shape} and scores {S.shape} are not aligned")
    return X, S


def search_tree(
    features,
    scores,
    config: Optional[SearchConfig] = None,
    stats: Optional[SearchStats] = None,
    sorted_columns: Optional[SortedColumns] = None,
) -> tuple[float, TreePolicy]:
    """Maximize ``sum_i scores[i, tree(X_i)]`` over trees of depth at most ``config.depth``.

    With ``skip == 1`` the result is exactly optimal. Ties prefer the smaller
    dimension, then the smaller split value, then smaller leaf actions.
    """
    config = config or SearchConfig()
    X, S = _prepare(features, scores)
    if X.shape[0] == 0:
        return 0.0, Leaf(0)
    stats = stats if stats is not None else SearchStats()
    srt = sorted_columns or presort(X)
    searcher = _Searcher(X, S, config, stats)
    _, tree = searcher.root(srt.order, config.depth)
    if config.fixed_shape:
        tree = to_fixed_shape(tree, config.depth, X)
    # report the value with one summation order so equal policies compare equal
    return tree_objective(tree, X, S), tree


def depth2_solve(features, scores, sorted_columns: Optional[SortedColumns] = None, skip: int = 1):
    """Best tree with at most one split, via one prefix-sum sweep per dimension."""
    X, S = _prepare(features, scores)
    if X.shape[0] == 0:
        return 0.0, Leaf(0)
    srt = sorted_columns or presort(X)
    searcher = _Searcher(X, S, SearchConfig(depth=2, skip=skip), SearchStats())
    return searcher.depth2(srt.order, np.ones(X.shape[0], dtype=np.bool_), True)


def greedy_tree(features, scores, depth: int, skip: int = 1) -> tuple[float, TreePolicy]:
    """Grow a tree top-down, picking each split as if the node were a depth-2 tree."""
    X, S = _prepare(features, scores)
    n = X.shape[0]
    srt = presort(X)
    searcher = _Searcher(X, S, SearchConfig(depth=2, skip=skip), SearchStats())

    def grow(node_idx, L):
        if node_idx.shape[1] == 0:
            return Leaf(0)
        if L == 1:
            return Leaf(searcher.leaf(node_idx)[1])
        _, t = searcher.depth2(node_idx, np.ones(n, dtype=np.bool_), True)
        if L == 2 or isinstance(t, Leaf):
            return t
        go_left = X[:, t.split_dim] < t.split_value
        mask = go_left[node_idx]
        left = node_idx[mask].reshape(X.shape[1], -1)
        right = node_idx[~mask].reshape(X.shape[1], -1)
        return Branch(t.split_dim, t.split_value, grow(left, L - 1), grow(right, L - 1))

    tree = grow(srt.order, depth) if n else Leaf(0)
    return tree_objective(tree, X, S), tree


def tree_objective(tree: TreePolicy, features, scores) -> float:
    S = as_score_array(scores)
    return float(np.sum(S[np.arange(S.shape[0]), predict(tree, features)]))


def to_fixed_shape(tree: TreePolicy, depth: int, features) -> TreePolicy:
    """Pad pruned leaves into branches that send every point right."""
    X = np.asarray(features, dtype=np.float64)

    def pad(node, L, idx):
        if L <= 1:
            return node
        if isinstance(node, Leaf):
            thr = float(X[idx, 0].min()) if idx.size else 0.0
            return Branch(0, thr, pad(node, L - 1, idx[:0]), pad(node, L - 1, idx))
        go_left = X[idx, node.split_dim] < node.split_value
        return Branch(
            node.split_dim,
            node.split_value,
            pad(node.left, L - 1, idx[go_left]),
            pad(node.right, L - 1, idx[~go_left]),
        )

    return pad(tree, depth, np.arange(X.shape[0]))


# --------------------------------------------------------------------------- pipelines


class FitResult(NamedTuple):
    tree: TreePolicy
    value: float
    scores: ScoreMatrix


def fit_policy(
    ds: ObservationalDataset,
    method: str = "caipwl",
    K: int = 5,
    seed: int = 0,
    nuisance_config=None,
    search_config: Optional[SearchConfig] = None,
    nuisances=None,
    greedy: bool = False,
) -> FitResult:
    """Cross-fit nuisances, build AIPW or IPW scores, and search for the best tree.

    ``nuisances`` may carry precomputed out-of-fold ``mu``/``propensity``
    arrays, in which case no models are fitted. ``value`` is the mean
    training score of the returned tree.
    """
    from .nuisance import fit_cross_fitted_nuisances
    from .scoring import aipw_scores, ipw_scores

    search_config = search_config or SearchConfig()
    if nuisances is None:
        nuisances = fit_cross_fitted_nuisances(ds, K, seed, nuisance_config)
    if method == "caipwl":
        scores = aipw_scores(ds, nuisances)
    elif method == "ipwl":
        scores = ipw_scores(ds, nuisances.propensity)
    else:
        raise ValueError(f"unknown method {method!r}; expected 'caipwl' or 'ipwl'")
    if greedy:
        obj, tree = greedy_tree(ds.features, scores, search_config.depth, search_config.skip)
    else:
        obj, tree = search_tree(ds.features, scores, search_config)
    return FitResult(tree, obj / ds.n, scores)


def caipwl_fit(ds, K=5, seed=0, nuisance_config=None, search_config=None, nuisances=None):
    return fit_policy(ds, "caipwl", K, seed, nuisance_config, search_config, nuisances)


def ipwl_fit(ds, K=5, seed=0, nuisance_config=None, search_config=None, nuisances=None):
    return fit_policy(ds, "ipwl", K, seed, nuisance_config, search_config, nuisances)
