"""Doubly robust (AIPW) and IPW score matrices, and policy values from them."""
from __future__ import annotations

import csv

import numpy as np

from .core import ObservationalDataset, ScoreMatrix, as_score_array
from .errors import DimensionMismatch, ZeroPropensity


def aipw_scores(ds: ObservationalDataset, nf) -> ScoreMatrix:
    """Row ``i`` is ``mu_hat(X_i)`` plus the weighted residual on column ``A_i``.

    ``nf`` is anything exposing out-of-fold ``mu`` and ``propensity`` arrays
    (a :class:`~policylearn.nuisance.NuisanceFit` or ``NuisancePredictions``).
    """
    mu = np.asarray(nf.mu, dtype=np.float64)
    e = np.asarray(nf.propensity, dtype=np.float64)
    if mu.shape != (ds.n, ds.d) or e.shape != (ds.n, ds.d):
        raise DimensionMismatch(
            f"nuisances {mu.shape}/{e.shape} do not match dataset ({ds.n}, {ds.d})"
        )
    rows = np.arange(ds.n)
    e_taken = e[rows, ds.actions]
    # clipping upstream guarantees this never fires
    assert np.all(e_taken > 0), "zero propensity on a logged action"
    gamma = mu.copy()
    gamma[rows, ds.actions] += (ds.rewards - mu[rows, ds.actions]) / e_taken
    return ScoreMatrix(gamma)


def ipw_scores(ds: ObservationalDataset, propensities) -> ScoreMatrix:
    e = np.asarray(propensities, dtype=np.float64)
    if e.shape != (ds.n, ds.d):
        raise DimensionMismatch(f"propensities {e.shape} do not match ({ds.n}, {ds.d})")
    rows = np.arange(ds.n)
    e_taken = e[rows, ds.actions]
    if np.any(e_taken <= 0):
        i = int(np.argmax(e_taken <= 0))
        raise ZeroPropensity(f"observation {i} has zero propensity for its logged action")
    gamma = np.zeros((ds.n, ds.d))
    gamma[rows, ds.actions] = ds.rewards / e_taken
    return ScoreMatrix(gamma)


def policy_value(scores, assignments) -> float:
    """Mean over observations of ``scores[i, assignments[i]]``."""
    S = as_score_array(scores)
    a = np.asarray(assignments, dtype=np.int64)
    if a.shape != (S.shape[0],):
        raise DimensionMismatch(f"{a.shape[0] if a.ndim else 0} assignments for {S.shape[0]} rows")
    if np.any(a < 0) or np.any(a >= S.shape[1]):
        raise DimensionMismatch("assignment outside the score columns")
    return float(np.mean(S[np.arange(S.shape[0]), a]))


def write_scores_csv(path, scores) -> None:
    S = as_score_array(scores)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(f"s{j}" for j in range(S.shape[1])) + "\n")
        for row in S:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_scores_csv(path) -> ScoreMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return ScoreMatrix(np.array(rows, dtype=np.float64).reshape(len(rows), len(header)))
