"""Dataset CSV files: header ``x0..x{p-1},action,reward`` plus optional ``e0..e{d-1}``."""
from __future__ import annotations

import csv
from typing import Optional

import numpy as np

from .core import ObservationalDataset, validate_dataset
from .errors import DimensionMismatch


def write_dataset_csv(path, ds: ObservationalDataset) -> None:
    header = [f"x{j}" for j in range(ds.p)] + ["action", "reward"]
    E = ds.known_propensities
    if E is not None:
        header += [f"e{a}" for a in range(ds.d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            vals = [repr(float(v)) for v in ds.features[i]]
            vals += [str(int(ds.actions[i])), repr(float(ds.rewards[i]))]
            if E is not None:
                vals += [repr(float(v)) for v in E[i]]
            fh.write(",".join(vals) + "\n")


def read_dataset_csv(path, n_actions: Optional[int] = None, eta: float = 0.0) -> ObservationalDataset:
    """Parse and validate a dataset file.

    ``d`` comes from the ``e*`` columns when present, else from ``n_actions``,
    else from the largest logged action.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DimensionMismatch(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    xs = [h for h in header if h.startswith("x")]
    es = [h for h in header if h.startswith("e")]
    if xs != [f"x{j}" for j in range(len(xs))] or not xs:
        raise DimensionMismatch(f"{path}: feature columns must be x0..x{{p-1}}, got {xs}")
    if es != [f"e{a}" for a in range(len(es))]:
        raise DimensionMismatch(f"{path}: propensity columns must be e0..e{{d-1}}, got {es}")
    if "action" not in header or "reward" not in header:
        raise DimensionMismatch(f"{path}: header needs 'action' and 'reward' columns")
    if len(header) != len(xs) + len(es) + 2:
        raise DimensionMismatch(f"{path}: unexpected columns in header {header}")
    try:
        arr = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise DimensionMismatch(f"{path}: {exc}") from None
    if arr.size == 0:
        raise DimensionMismatch(f"{path}: no data rows")
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise DimensionMismatch(f"{path}: ragged rows")
    col = {h: j for j, h in enumerate(header)}
    X = arr[:, [col[h] for h in xs]]
    A = arr[:, col["action"]]
    Y = arr[:, col["reward"]]
    E = arr[:, [col[h] for h in es]] if es else None
    if es:
        d = len(es)
        if n_actions is not None and n_actions != d:
            raise DimensionMismatch(f"{path}: {d} propensity columns but n_actions={n_actions}")
    elif n_actions is not None:
        d = n_actions
    else:
        d = int(np.max(A)) + 1 if np.all(np.isfinite(A)) else 0
    return validate_dataset(ObservationalDataset(X, A, Y, d, E), eta=eta)
