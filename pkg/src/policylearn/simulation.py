"""Synthetic three-region benchmark: data generation, reference tree and regret table."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .core import ObservationalDataset, TreePolicy, predict
from .evaluation import random_policy_regret, regret_against
from .nuisance import NuisanceConfig, fit_cross_fitted_nuisances
from .scoring import aipw_scores, ipw_scores
from .tree_search import SearchConfig, greedy_tree, search_tree

P_FEATURES = 10
N_ACTIONS = 3
NOISE_SD = 2.0
# zero-based columns of the two informative features (x5 and x7 in one-based naming)
X5, X7 = 4, 6

PROPENSITY_TABLE = np.array(
    [
        [0.2, 0.6, 0.2],  # region 0
        [0.2, 0.6, 0.2],  # region 1
        [0.4, 0.2, 0.4],  # region 2
    ]
)

_NS_SIMULATION = 2
_NS_REFERENCE = 3

METHODS = (
    "caipwl-opt",
    "caipwl-skip",
    "caipwl-greedy",
    "ipwl-opt",
    "ipwl-skip",
    "ipwl-greedy",
    "random",
)


def regions(X) -> np.ndarray:
    """Region label per row; the ellipses (region 2) take precedence over the region-0 box."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    u, v = X[:, X5], X[:, X7]
    in_2 = (u**2 / 0.6**2 + v**2 / 0.35**2 < 1) | ((u - 1) ** 2 / 0.4**2 + (v - 1) ** 2 / 0.35**2 < 1)
    in_0 = (u >= 0) & (u < 0.6) & (v > 0.35) & (v <= 1)
    return np.where(in_2, 2, np.where(in_0, 0, 1))


def region_of(x) -> int:
    return int(regions(np.asarray(x, dtype=np.float64)[None, :])[0])


def _mu_by_region(region, a):
    a = np.asarray(a, dtype=np.float64)
    return np.where(region == 0, 3.0 - a, np.where(region == 1, 2.0 - np.abs(a - 1) / 2, 1.5 * (a - 1)))


def true_mean_reward(x, a: int) -> float:
    return float(_mu_by_region(region_of(x), a))


@dataclass(frozen=True)
class SyntheticTruth:
    """Closed-form nuisances of the benchmark's data-generating process."""

    p: int = P_FEATURES
    d: int = N_ACTIONS
    noise_sd: float = NOISE_SD

    def region(self, X) -> np.ndarray:
        return regions(X)

    def mean_rewards(self, X) -> np.ndarray:
        r = regions(X)[:, None]
        return _mu_by_region(r, np.arange(self.d)[None, :])

    def propensities(self, X) -> np.ndarray:
        return PROPENSITY_TABLE[regions(X)]

    def optimal_actions(self, X) -> np.ndarray:
        return np.argmax(self.mean_rewards(X), axis=1)

    def to_dict(self) -> dict:
        return {
            **asdict(self),
            "informative_features": [X5, X7],
            "propensity_table": PROPENSITY_TABLE.tolist(),
            "region_precedence": [2, 0, 1],
        }


def _rng(seed: int, namespace: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), namespace])))


def sample_features(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random((n, P_FEATURES))


def generate_synthetic(n: int, seed: int) -> tuple[ObservationalDataset, SyntheticTruth]:
    """Draw ``n`` logged observations with their known propensities.

    Normals come from numpy's ziggurat sampler on PCG64, so a seed fixes the
    output bit for bit on a given numpy build.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    truth = SyntheticTruth()
    rng = _rng(seed, _NS_SIMULATION)
    X = sample_features(n, rng)
    e = truth.propensities(X)
    # inverse-CDF draw per row; the clip guards the last bin against rounding in cumsum
    u = rng.random(n)
    A = np.minimum((u[:, None] >= np.cumsum(e, axis=1)).sum(axis=1), N_ACTIONS - 1)
    mu = truth.mean_rewards(X)
    Y = mu[np.arange(n), A] + truth.noise_sd * rng.standard_normal(n)
    ds = ObservationalDataset(X, A.astype(np.int64), Y, N_ACTIONS, e)
    return ds, truth


@lru_cache(maxsize=4)
def reference_tree(depth: int = 3, n_clean: int = 10000, seed: int = 0) -> TreePolicy:
    """Best depth-``depth`` tree learned from noise-free rewards on ``n_clean`` points.

    Regret in the benchmark is measured against this tree. The search runs on
    the two informative features only; the others carry no signal in the
    mean rewards.
    """
    truth = SyntheticTruth()
    X = sample_features(n_clean, _rng(seed, _NS_REFERENCE))
    mu = truth.mean_rewards(X)
    _, tree = search_tree(X[:, [X5, X7]], mu, SearchConfig(depth=depth))
    return _remap_dims(tree, (X5, X7))


def _remap_dims(tree: TreePolicy, dims) -> TreePolicy:
    from .core import Branch, Leaf

    if isinstance(tree, Leaf):
        return tree
    return Branch(dims[tree.split_dim], tree.split_value, _remap_dims(tree.left, dims), _remap_dims(tree.right, dims))


# --------------------------------------------------------------------------- benchmark


@dataclass
class BenchmarkConfig:
    n_values: Sequence[int] = (1000, 1500, 2000, 2500)
    runs: int = 400
    methods: Sequence[str] = METHODS
    seed: int = 0
    depth: int = 3
    skip: int = 10
    n_test: int = 15000
    folds: int = 5
    # the simulator's propensities are known; set True to refit them by multinomial logit
    estimate_propensities: bool = False
    nuisance: NuisanceConfig = field(default_factory=NuisanceConfig)
    n_clean: int = 10000
    workers: int = 1

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if self.runs < 1 or self.n_test < 1 or not self.n_values:
            raise ValueError("runs, n_test and n_values must be positive / non-empty")


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    # regrets[(method, n)] is the per-run list in run order
    regrets: dict

    def rows(self) -> list[dict]:
        out = []
        for n in self.config.n_values:
            for m in self.config.methods:
                r = np.asarray(self.regrets[(m, n)])
                sd = float(np.std(r, ddof=1)) if r.size > 1 else 0.0
                out.append({"method": m, "n": n, "mean_regret": float(r.mean()), "std_regret": sd, "runs": r.size})
        return out

    def mean(self, method: str, n: int) -> float:
        return float(np.mean(self.regrets[(method, n)]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["method", "n", "mean_regret", "std_regret", "runs"], lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({**row, "mean_regret": repr(row["mean_regret"]), "std_regret": repr(row["std_regret"])})
        return buf.getvalue()


def _run_seeds(seed: int, n: int, run: int) -> tuple[int, int, int]:
    s = np.random.SeedSequence([int(seed), int(n), int(run)]).generate_state(3)
    return int(s[0]), int(s[1]), int(s[2])


def single_run(cfg: BenchmarkConfig, n: int, run: int, ref: Optional[TreePolicy] = None) -> dict:
    """Regret of every configured method on one fresh training set and test set."""
    ref = ref if ref is not None else reference_tree(cfg.depth, cfg.n_clean)
    s_train, s_test, s_folds = _run_seeds(cfg.seed, n, run)
    ds, truth = generate_synthetic(n, s_train)
    X_test = sample_features(cfg.n_test, _rng(s_test, _NS_SIMULATION))
    out = {}
    if "random" in cfg.methods:
        out["random"] = random_policy_regret(truth, X_test, reference=ref)
    learned = [m for m in cfg.methods if m != "random"]
    if not learned:
        return out

    train = ds.without_propensities() if cfg.estimate_propensities else ds
    nf = fit_cross_fitted_nuisances(train, cfg.folds, s_folds, cfg.nuisance)
    scores = {}
    if any(m.startswith("caipwl") for m in learned):
        scores["caipwl"] = aipw_scores(train, nf)
    if any(m.startswith("ipwl") for m in learned):
        scores["ipwl"] = ipw_scores(train, nf.propensity)
    for m in learned:
        family, variant = m.split("-")
        S = scores[family]
        if variant == "greedy":
            _, tree = greedy_tree(ds.features, S, cfg.depth)
        else:
            skip = cfg.skip if variant == "skip" else 1
            _, tree = search_tree(ds.features, S, SearchConfig(depth=cfg.depth, skip=skip))
        out[m] = regret_against(truth, tree, X_test, reference=ref)
    return out


def _single_run_star(args):
    return single_run(*args)


def run_benchmark(cfg: BenchmarkConfig, progress=None) -> BenchmarkResult:
    """Regret table over ``cfg.n_values`` x ``cfg.methods``, averaged over runs.

    Each (n, run) cell draws its data from seeds derived from
    ``(cfg.seed, n, run)``, so the table does not depend on ``cfg.workers``.
    """
    ref = reference_tree(cfg.depth, cfg.n_clean)
    jobs = [(cfg, n, r, ref) for n in cfg.n_values for r in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_single_run_star, jobs, chunksize=1))
    else:
        results = []
        for j in jobs:
            results.append(single_run(*j))
            if progress is not None:
                progress(len(results), len(jobs))
    regrets = {(m, n): [] for n in cfg.n_values for m in cfg.methods}
    for (_, n, _, _), res in zip(jobs, results):
        for m, v in res.items():
            regrets[(m, n)].append(v)
    return BenchmarkResult(cfg, regrets)


def policy_regions_agree(tree: TreePolicy, X) -> float:
    """Fraction of points where ``tree`` picks the pointwise-optimal action."""
    return float(np.mean(predict(tree, X) == SyntheticTruth().optimal_actions(X)))
