"""Datasets, score matrices, tree policies and fold assignments.

Actions are integer indices ``0..d-1``. A tree routes ``x`` to the left child
iff ``x[split_dim] < split_value``; ties go right.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np

from .errors import (
    ActionOutOfRange,
    DimensionMismatch,
    EmptyPointSet,
    InvalidPropensityRow,
    NonFiniteValue,
    OverlapWarning,
)

PROPENSITY_ROW_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservationalDataset:
    """Logged triples ``(X_i, A_i, Y_i)`` with optional known propensities."""

    features: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    n_actions: int
    known_propensities: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    @property
    def d(self) -> int:
        return int(self.n_actions)

    def subset(self, idx) -> "ObservationalDataset":
        idx = np.asarray(idx)
        kp = None if self.known_propensities is None else self.known_propensities[idx]
        return ObservationalDataset(
            self.features[idx], self.actions[idx], self.rewards[idx], self.n_actions, kp
        )

    def without_propensities(self) -> "ObservationalDataset":
        return ObservationalDataset(self.features, self.actions, self.rewards, self.n_actions)


def validate_dataset(raw: ObservationalDataset, eta: float = 0.0) -> ObservationalDataset:
    """Check every dataset invariant and return a normalized, read-only copy.

    ``eta`` is an optional overlap floor; known propensities below it only
    trigger an :class:`OverlapWarning`.
    """
    X = np.array(raw.features, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"features must be 2-D, got shape {X.shape}")
    n, p = X.shape
    d = int(raw.n_actions)
    if n < 1 or p < 1:
        raise DimensionMismatch(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    if d < 2:
        raise DimensionMismatch(f"need at least 2 actions, got d={d}")

    A_raw = np.asarray(raw.actions)
    y = np.array(raw.rewards, dtype=np.float64)
    if A_raw.shape != (n,) or y.shape != (n,):
        raise DimensionMismatch(
            f"actions {A_raw.shape} and rewards {y.shape} must both have shape ({n},)"
        )
    if not np.all(np.isfinite(X)):
        raise NonFiniteValue("features contain NaN or infinite entries")
    if not np.all(np.isfinite(y)):
        raise NonFiniteValue("rewards contain NaN or infinite entries")
    if A_raw.dtype.kind == "f":
        if not np.all(np.isfinite(A_raw)) or np.any(A_raw != np.round(A_raw)):
            raise ActionOutOfRange("actions must be integers")
    elif A_raw.dtype.kind not in "iu":
        raise ActionOutOfRange(f"actions must be integers, got dtype {A_raw.dtype}")
    A = A_raw.astype(np.int64)
    if np.any(A < 0) or np.any(A >= d):
        bad = A[(A < 0) | (A >= d)][0]
        raise ActionOutOfRange(f"action {bad} outside [0, {d})")

    E = None
    if raw.known_propensities is not None:
        E = np.array(raw.known_propensities, dtype=np.float64)
        if E.shape != (n, d):
            raise DimensionMismatch(f"known_propensities shape {E.shape} != ({n}, {d})")
        if not np.all(np.isfinite(E)):
            raise NonFiniteValue("known_propensities contain NaN or infinite entries")
        if np.any(E < 0):
            raise InvalidPropensityRow(f"negative propensity in row {np.argwhere(E < 0)[0, 0]}")
        sums = E.sum(axis=1)
        bad = np.abs(sums - 1.0) > PROPENSITY_ROW_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise InvalidPropensityRow(f"row {i} sums to {sums[i]!r}, not 1")
        taken = E[np.arange(n), A]
        if np.any(taken <= 0):
            i = int(np.argmax(taken <= 0))
            raise InvalidPropensityRow(f"row {i} gives zero probability to its logged action")
        if eta > 0 and np.any(E < eta):
            warnings.warn(
                f"known propensities fall below overlap floor {eta}", OverlapWarning, stacklevel=2
            )
        E = _frozen(E)

    return ObservationalDataset(_frozen(X), _frozen(A), _frozen(y), d, E)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per-observation, per-action scores; row ``i`` is the score vector of unit ``i``."""

    scores: np.ndarray

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise DimensionMismatch(f"scores must be 2-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise NonFiniteValue("scores contain NaN or infinite entries")
        object.__setattr__(self, "scores", _frozen(s))

    @property
    def n(self) -> int:
        return int(self.scores.shape[0])

    @property
    def d(self) -> int:
        return int(self.scores.shape[1])


def as_score_array(scores) -> np.ndarray:
    if isinstance(scores, ScoreMatrix):
        return scores.scores
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise DimensionMismatch(f"scores must be 2-D, got shape {s.shape}")
    return s


# --------------------------------------------------------------------------- trees


@dataclass(frozen=True)
class Leaf:
    action: int

    def depth(self) -> int:
        return 1


@dataclass(frozen=True)
class Branch:
    split_dim: int
    split_value: float
    left: "TreePolicy"
    right: "TreePolicy"

    def depth(self) -> int:
        return 1 + max(self.left.depth(), self.right.depth())


TreePolicy = Union[Leaf, Branch]


def tree_assign(tree: TreePolicy, x) -> int:
    """Route a single point down the tree and return the leaf action."""
    node = tree
    while isinstance(node, Branch):
        node = node.left if x[node.split_dim] < node.split_value else node.right
    return node.action


def predict(tree: TreePolicy, X) -> np.ndarray:
    """Vectorized :func:`tree_assign` over the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    out = np.empty(X.shape[0], dtype=np.int64)

    def fill(node, idx):
        if isinstance(node, Leaf):
            out[idx] = node.action
            return
        go_left = X[idx, node.split_dim] < node.split_value
        fill(node.left, idx[go_left])
        fill(node.right, idx[~go_left])

    fill(tree, np.arange(X.shape[0]))
    return out


def hamming_distance(t1: TreePolicy, t2: TreePolicy, pts) -> float:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 1:
        raise EmptyPointSet("hamming distance needs at least one point")
    return float(np.mean(predict(t1, pts) != predict(t2, pts)))


def iter_nodes(tree: TreePolicy):
    yield tree
    if isinstance(tree, Branch):
        yield from iter_nodes(tree.left)
        yield from iter_nodes(tree.right)


def check_tree(tree: TreePolicy, p: int, d: int, max_depth: Optional[int] = None) -> None:
    """Raise ``ValueError`` unless split dims are ``< p``, actions ``< d`` and depth fits."""
    for node in iter_nodes(tree):
        if isinstance(node, Branch):
            if not 0 <= node.split_dim < p:
                raise ValueError(f"split_dim {node.split_dim} outside [0, {p})")
        elif not 0 <= node.action < d:
            raise ValueError(f"leaf action {node.action} outside [0, {d})")
    if max_depth is not None and tree.depth() > max_depth:
        raise ValueError(f"tree depth {tree.depth()} exceeds {max_depth}")


def tree_to_dict(tree: TreePolicy) -> dict[str, Any]:
    if isinstance(tree, Leaf):
        return {"leaf_action": int(tree.action)}
    return {
        "split_dim": int(tree.split_dim),
        "split_value": float(tree.split_value),
        "left": tree_to_dict(tree.left),
        "right": tree_to_dict(tree.right),
    }


def tree_from_dict(obj: dict[str, Any]) -> TreePolicy:
    if "leaf_action" in obj:
        return Leaf(int(obj["leaf_action"]))
    try:
        return Branch(
            int(obj["split_dim"]),
            float(obj["split_value"]),
            tree_from_dict(obj["left"]),
            tree_from_dict(obj["right"]),
        )
    except KeyError as exc:
        raise ValueError(f"malformed tree node, missing {exc}") from None


def tree_to_json(tree: TreePolicy, indent: Optional[int] = 2) -> str:
    # json uses repr() for floats, which is the shortest exact round-trip form
    return json.dumps(tree_to_dict(tree), indent=indent)


def tree_from_json(text: str) -> TreePolicy:
    return tree_from_dict(json.loads(text))


def render_tree(tree: TreePolicy, feature_names=None, action_names=None) -> str:
    """Indented human-readable rendering, one node per line."""
    lines: list[str] = []

    def fname(j):
        return feature_names[j] if feature_names is not None else f"x{j}"

    def aname(a):
        return action_names[a] if action_names is not None else f"action {a}"

    def walk(node, indent):
        pad = "  " * indent
        if isinstance(node, Leaf):
            lines.append(f"{pad}-> {aname(node.action)}")
            return
        lines.append(f"{pad}if {fname(node.split_dim)} < {node.split_value:.6g}:")
        walk(node.left, indent + 1)
        lines.append(f"{pad}else:  # {fname(node.split_dim)} >= {node.split_value:.6g}")
        walk(node.right, indent + 1)

    walk(tree, 0)
    return "\n".join(lines)


# --------------------------------------------------------------------------- folds


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    K: int

    def __post_init__(self):
        f = np.array(self.fold_of, dtype=np.int64)
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if f.ndim != 1 or np.any(f < 0) or np.any(f >= self.K):
            raise ValueError("fold_of entries must lie in [0, K)")
        sizes = np.bincount(f, minlength=self.K)
        if sizes.min() == 0 or sizes.max() - sizes.min() > 1:
            raise ValueError(f"fold sizes must be non-empty and within 1, got {sizes.tolist()}")
        object.__setattr__(self, "fold_of", _frozen(f))

    @property
    def n(self) -> int:
        return int(self.fold_of.shape[0])

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.K)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def complement(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != k)
