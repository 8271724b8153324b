"""Cross-fitted propensity and outcome models.

Each observation's nuisance predictions come from models fitted on the other
``K - 1`` folds. Propensities use an L2-penalized multinomial logit fitted by
full-batch gradient ascent; outcomes use k-nearest-neighbor regression per arm.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import log_softmax, softmax

from .core import FoldAssignment, ObservationalDataset
from .errors import (
    DimensionMismatch,
    EtaOutOfRange,
    KOutOfRange,
    MissingArmInTrainingFolds,
    NonConvergenceWarning,
)

DEFAULT_FOLDS = 5
DEFAULT_ETA = 0.1


def make_folds(n: int, K: int, seed: int) -> FoldAssignment:
    """Seeded random partition of ``range(n)`` into ``K`` near-equal folds."""
    if not 2 <= K <= n:
        raise KOutOfRange(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _NS_FOLDS]))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    for k, block in enumerate(np.array_split(perm, K)):
        fold_of[block] = k
    return FoldAssignment(fold_of, K)


# namespaces for derived random streams
_NS_FOLDS = 1


@dataclass
class NuisanceConfig:
    l2: float = 1e-4
    max_iter: int = 10_000
    tol: float = 1e-8
    k_neighbors: Union[int, str] = "auto"
    # None -> 0.1 for estimated propensities, no clipping for known ones
    eta: Optional[float] = None

    def resolved_eta(self, known: bool) -> float:
        if self.eta is not None:
            return float(self.eta)
        return 0.0 if known else DEFAULT_ETA

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------- propensity


@dataclass(frozen=True, eq=False)
class MultinomialLogit:
    """Softmax model on standardized features. ``coef`` is ``p x d``."""

    coef: np.ndarray
    intercept: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    n_iter: int
    converged: bool

    def predict_proba(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.center) / self.scale
        return softmax(Z @ self.coef + self.intercept, axis=1)


def _check_arms(actions: np.ndarray, d: int, k: Optional[int]) -> None:
    seen = np.bincount(actions, minlength=d)
    if np.any(seen == 0):
        missing = np.flatnonzero(seen == 0).tolist()
        where = "in the training data" if k is None else f"outside fold {k}"
        raise MissingArmInTrainingFolds(f"arm(s) {missing} never observed {where}")


def _fit_multilogit(X, A, d, l2, max_iter, tol) -> MultinomialLogit:
    n, p = X.shape
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - center) / scale
    Y = np.zeros((n, d))
    Y[np.arange(n), A] = 1.0

    # intercepts start at the log class frequencies, the intercept-only optimum
    W = np.zeros((p, d))
    b = np.log(Y.mean(axis=0))
    b -= b.mean()

    def objective(W, b):
        logp = log_softmax(Z @ W + b, axis=1)
        return float(np.sum(Y * logp)) / n - 0.5 * l2 * float(np.sum(W * W))

    def gradient(W, b):
        R = Y - softmax(Z @ W + b, axis=1)
        return Z.T @ R / n - l2 * W, R.mean(axis=0)

    f = objective(W, b)
    gW, gb = gradient(W, b)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = max(np.abs(gW).max(initial=0.0), np.abs(gb).max())
        if gnorm < tol:
            converged = True
            break
        # diagonally preconditioned ascent direction: the penalty adds l2 to the
        # curvature of every coefficient but not of the intercepts
        dW = gW / (1.0 + l2)
        sq = float(np.sum(gW * dW) + np.sum(gb * gb))
        # Armijo backtracking along (dW, gb)
        while True:
            W_new, b_new = W + step * dW, b + step * gb
            f_new = objective(W_new, b_new)
            if f_new >= f + 0.5 * step * sq or step < 1e-12:
                break
            step *= 0.5
        if f_new < f:
            break
        W, b, f = W_new, b_new, f_new
        gW, gb = gradient(W, b)
        step *= 2.0
    else:
        gnorm = max(np.abs(gW).max(initial=0.0), np.abs(gb).max())
        converged = gnorm < tol

    if not converged:
        warnings.warn(
            f"multinomial logit stopped after {it} iterations with gradient "
            f"norm {gnorm:.3g} >= tol {tol:g}",
            NonConvergenceWarning,
            stacklevel=3,
        )
    return MultinomialLogit(W, b, center, scale, it, converged)


def fit_propensity_multilogit(
    ds: ObservationalDataset,
    exclude_fold: Optional[int] = None,
    folds: Optional[FoldAssignment] = None,
    config: Optional[NuisanceConfig] = None,
) -> MultinomialLogit:
    """Fit ``e(x)`` on every observation outside ``exclude_fold``."""
    config = config or NuisanceConfig()
    train = _training_index(ds.n, exclude_fold, folds)
    _check_arms(ds.actions[train], ds.d, exclude_fold)
    return _fit_multilogit(
        ds.features[train], ds.actions[train], ds.d, config.l2, config.max_iter, config.tol
    )


# --------------------------------------------------------------------------- outcome


@dataclass(frozen=True, eq=False)
class KNNRegressor:
    """Mean reward of the ``k`` nearest (Euclidean) training points."""

    X: np.ndarray
    y: np.ndarray
    k: int
    _tree: cKDTree = field(repr=False)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.k >= self.y.shape[0]:
            return np.full(X.shape[0], self.y.mean())
        _, idx = self._tree.query(X, k=self.k)
        idx = idx.reshape(X.shape[0], self.k)
        return self.y[idx].mean(axis=1)


def resolve_k(k_neighbors, m: int) -> int:
    if k_neighbors == "auto":
        return max(1, math.ceil(math.sqrt(m)))
    k = int(k_neighbors)
    if k < 1:
        raise ValueError(f"k_neighbors must be >= 1, got {k}")
    return min(k, m)


def fit_outcome_knn(
    ds: ObservationalDataset,
    exclude_fold: Optional[int],
    arm: int,
    folds: Optional[FoldAssignment] = None,
    config: Optional[NuisanceConfig] = None,
) -> KNNRegressor:
    config = config or NuisanceConfig()
    train = _training_index(ds.n, exclude_fold, folds)
    train = train[ds.actions[train] == arm]
    if train.size == 0:
        where = "in the training data" if exclude_fold is None else f"outside fold {exclude_fold}"
        raise MissingArmInTrainingFolds(f"arm {arm} never observed {where}")
    X = ds.features[train]
    y = ds.rewards[train]
    return KNNRegressor(X, y, resolve_k(config.k_neighbors, train.size), cKDTree(X))


def _training_index(n, exclude_fold, folds) -> np.ndarray:
    if exclude_fold is None:
        return np.arange(n)
    if folds is None:
        raise ValueError("folds are required when exclude_fold is given")
    return folds.complement(exclude_fold)


# --------------------------------------------------------------------------- clipping


def clip_propensities(p, eta: float) -> np.ndarray:
    """Floor every entry at ``eta``; rows are deliberately not renormalized."""
    p = np.asarray(p, dtype=np.float64)
    d = p.shape[-1]
    if not 0 < eta <= 1.0 / d:
        raise EtaOutOfRange(f"eta must lie in (0, 1/d] = (0, {1.0 / d:g}], got {eta}")
    return np.maximum(p, eta)


# --------------------------------------------------------------------------- cross-fitting


@dataclass(frozen=True, eq=False)
class NuisancePredictions:
    """Per-observation nuisance values: ``mu`` and ``propensity`` are both ``n x d``."""

    mu: np.ndarray
    propensity: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        e = np.asarray(self.propensity, dtype=np.float64)
        if mu.ndim != 2 or mu.shape != e.shape:
            raise DimensionMismatch(f"mu {mu.shape} and propensity {e.shape} must match")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "propensity", e)


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    """Fold-wise fitted models plus the out-of-fold predictions they produce.

    ``propensity_models[k]`` is ``None`` when known propensities were passed
    through. ``train_index[k]`` records exactly which observations fold ``k``'s
    models consumed.
    """

    folds: FoldAssignment
    propensity_models: list
    outcome_models: list
    train_index: list
    eta_floor: float
    mu: np.ndarray
    propensity: np.ndarray
    propensity_raw: np.ndarray
    config: NuisanceConfig

    @property
    def K(self) -> int:
        return self.folds.K

    def predict_propensity(self, X, k: int) -> np.ndarray:
        model = self.propensity_models[k]
        if model is None:
            raise ValueError("propensities were supplied, not modelled")
        e = model.predict_proba(X)
        return clip_propensities(e, self.eta_floor) if self.eta_floor > 0 else e

    def predict_outcome(self, X, k: int) -> np.ndarray:
        return np.column_stack([m.predict(X) for m in self.outcome_models[k]])

    def predictions(self) -> NuisancePredictions:
        return NuisancePredictions(self.mu, self.propensity)


def fit_cross_fitted_nuisances(
    ds: ObservationalDataset,
    K: int = DEFAULT_FOLDS,
    seed: int = 0,
    config: Optional[NuisanceConfig] = None,
) -> NuisanceFit:
    config = config or NuisanceConfig()
    folds = make_folds(ds.n, K, seed)
    known = ds.known_propensities is not None
    eta = config.resolved_eta(known)
    if eta > 0 and not eta <= 1.0 / ds.d:
        raise EtaOutOfRange(f"eta must lie in (0, 1/d], got {eta}")

    for k in range(K):
        _check_arms(ds.actions[folds.complement(k)], ds.d, k)

    mu = np.empty((ds.n, ds.d))
    e_raw = np.empty((ds.n, ds.d))
    prop_models, out_models, train_index = [], [], []
    for k in range(K):
        train = folds.complement(k)
        held = folds.members(k)
        train_index.append(train)
        arms = [fit_outcome_knn(ds, k, a, folds, config) for a in range(ds.d)]
        out_models.append(arms)
        mu[held] = np.column_stack([m.predict(ds.features[held]) for m in arms])
        if known:
            prop_models.append(None)
        else:
            model = fit_propensity_multilogit(ds, k, folds, config)
            prop_models.append(model)
            e_raw[held] = model.predict_proba(ds.features[held])
    if known:
        e_raw[:] = ds.known_propensities
    e = clip_propensities(e_raw, eta) if eta > 0 else e_raw.copy()

    return NuisanceFit(
        folds=folds,
        propensity_models=prop_models,
        outcome_models=out_models,
        train_index=train_index,
        eta_floor=eta,
        mu=mu,
        propensity=e,
        propensity_raw=e_raw,
        config=config,
    )


def read_nuisance_override(path, d: Optional[int] = None) -> NuisancePredictions:
    """Load a CSV with columns ``mu_0..mu_{d-1},e_0..e_{d-1}``."""
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    cols = {name.strip(): j for j, name in enumerate(header)}
    if d is None:
        d = sum(1 for c in cols if c.startswith("mu_"))
    try:
        mu_j = [cols[f"mu_{a}"] for a in range(d)]
        e_j = [cols[f"e_{a}"] for a in range(d)]
    except KeyError as exc:
        raise DimensionMismatch(f"nuisance override missing column {exc}") from None
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return NuisancePredictions(arr[:, mu_j], arr[:, e_j])


def write_nuisance_override(path, pred: NuisancePredictions) -> None:
    n, d = pred.mu.shape
    header = [f"mu_{a}" for a in range(d)] + [f"e_{a}" for a in range(d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            vals = list(pred.mu[i]) + list(pred.propensity[i])
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")
