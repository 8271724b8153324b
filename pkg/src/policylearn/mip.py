"""Mixed-integer program for depth-L tree policies, LP-file export and a checker.

Nodes use heap numbering: branch nodes ``1..T_B`` with root 1 and children
``2t, 2t+1``; leaf ``t`` (``1..T_L``) is heap node ``T_B + t``. Variable
names are one-based: ``a_t_q``, ``b_t``, ``z_i_t`` and ``c_k_t``.

A point is routed left at branch ``l`` when ``a_l . (X_i + eps) <= b_l`` and
right when ``a_r . X_i >= b_r``, on features min-max normalized to [0, 1].
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import sparse

from .core import TreePolicy, as_score_array
from .errors import DegenerateDataset, DimensionMismatch, InstanceTooLarge, MissingVariable, TooFewRows
from .tree_search import to_fixed_shape

FEAS_TOL = 1e-6


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple  # ((var, coef), ...) in variable order, no zero coefficients
    sense: str  # "<=", ">=" or "="
    rhs: float


@dataclass(eq=True)
class MipModel:
    n: int
    p: int
    d: int
    depth: int
    eps: tuple
    eps_max: float
    variables: list
    binaries: list
    bounds: dict  # continuous variable -> (lo, hi)
    constraints: list
    # maximize sum of coef * v1 * v2
    objective: dict
    _compiled: Optional[object] = field(default=None, compare=False, repr=False)

    @property
    def n_branch(self) -> int:
        return 2 ** (self.depth - 1) - 1

    @property
    def n_leaves(self) -> int:
        return 2 ** (self.depth - 1)

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def compiled(self) -> "_Compiled":
        if self._compiled is None:
            self._compiled = _Compiled(self)
        return self._compiled


def variable_count(n: int, p: int, d: int, depth: int) -> int:
    return (p + 1) * (2 ** (depth - 1) - 1) + (n + d) * 2 ** (depth - 1)


def normalize_features(features) -> np.ndarray:
    """Min-max scale each column to [0, 1]; constant columns map to 0."""
    X = np.asarray(features, dtype=np.float64)
    lo = X.min(axis=0)
    rng = X.max(axis=0) - lo
    safe = np.where(rng > 0, rng, 1.0)
    Z = (X - lo) / safe
    Z[:, rng == 0] = 0.0
    return Z


def _eps(Xn: np.ndarray) -> np.ndarray:
    eps = np.ones(Xn.shape[1])
    for q in range(Xn.shape[1]):
        gaps = np.diff(np.unique(Xn[:, q]))
        if gaps.size:
            eps[q] = gaps.min()
    return eps


def epsilon_vector(features) -> tuple[np.ndarray, float]:
    """Smallest nonzero gap per column (1.0 for constant columns) and its maximum."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewRows(f"need at least 2 rows, got {X.shape[0] if X.ndim else 0}")
    eps = _eps(X)
    return eps, float(eps.max())


def leaf_paths(depth: int) -> list[tuple[list[int], list[int]]]:
    """``(LB(t), RB(t))`` for each leaf, branch nodes listed root first."""
    nb = 2 ** (depth - 1) - 1
    out = []
    for t in range(1, 2 ** (depth - 1) + 1):
        h = nb + t
        lb, rb = [], []
        while h > 1:
            parent = h // 2
            (lb if h % 2 == 0 else rb).append(parent)
            h = parent
        out.append((lb[::-1], rb[::-1]))
    return out


def build_mip(features, scores, depth: int) -> MipModel:
    X = np.asarray(features, dtype=np.float64)
    S = as_score_array(scores)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DegenerateDataset("the MIP needs at least one observation")
    if S.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"features {X.shape} and scores {S.shape} are not aligned")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    n, p = X.shape
    d = S.shape[1]
    Xn = normalize_features(X)
    eps = _eps(Xn)  # a single row has no gaps: every column takes the constant-column value
    eps_max = float(eps.max())
    nb, nl = 2 ** (depth - 1) - 1, 2 ** (depth - 1)

    A = [[f"a_{t}_{q}" for q in range(1, p + 1)] for t in range(1, nb + 1)]
    B = [f"b_{t}" for t in range(1, nb + 1)]
    Z = [[f"z_{i}_{t}" for t in range(1, nl + 1)] for i in range(1, n + 1)]
    C = [[f"c_{k}_{t}" for t in range(1, nl + 1)] for k in range(1, d + 1)]
    a_flat = [v for row in A for v in row]
    z_flat = [v for row in Z for v in row]
    c_flat = [v for row in C for v in row]
    variables = a_flat + B + z_flat + c_flat

    cons = []
    for t in range(nb):
        cons.append(Constraint(f"one_dim_{t + 1}", tuple((v, 1.0) for v in A[t]), "=", 1.0))
    for i in range(n):
        cons.append(Constraint(f"one_leaf_{i + 1}", tuple((v, 1.0) for v in Z[i]), "=", 1.0))
    for t in range(nl):
        cons.append(Constraint(f"one_action_{t + 1}", tuple((C[k][t], 1.0) for k in range(d)), "=", 1.0))
    big = 1.0 + eps_max
    paths = leaf_paths(depth)
    for i in range(n):
        for t, (lb, rb) in enumerate(paths):
            for l in lb:
                terms = [(A[l - 1][q], float(Xn[i, q] + eps[q])) for q in range(p)]
                terms += [(B[l - 1], -1.0), (Z[i][t], big)]
                cons.append(Constraint(f"left_{i + 1}_{t + 1}_{l}", tuple(terms), "<=", big))
            for r in rb:
                terms = [(A[r - 1][q], float(Xn[i, q])) for q in range(p) if Xn[i, q] != 0.0]
                terms += [(B[r - 1], -1.0), (Z[i][t], -1.0)]
                cons.append(Constraint(f"right_{i + 1}_{t + 1}_{r}", tuple(terms), ">=", -1.0))

    objective = {}
    for i in range(n):
        for t in range(nl):
            for k in range(d):
                g = float(S[i, k])
                if g != 0.0:
                    objective[(Z[i][t], C[k][t])] = g

    return MipModel(
        n=n,
        p=p,
        d=d,
        depth=depth,
        eps=tuple(float(e) for e in eps),
        eps_max=eps_max,
        variables=variables,
        binaries=a_flat + z_flat + c_flat,
        bounds={b: (0.0, 1.0) for b in B},
        constraints=cons,
        objective=objective,
    )


# --------------------------------------------------------------------------- LP files

_WRAP = 100


def _fmt(x: float) -> str:
    return repr(float(x))


def _terms_text(pairs) -> list[str]:
    out = []
    for j, (coef, name) in enumerate(pairs):
        sign = "-" if coef < 0 or (coef == 0 and math.copysign(1.0, coef) < 0) else "+"
        mag = _fmt(abs(coef))
        out.append(f"{sign} {mag} {name}" if j or sign == "-" else f"{mag} {name}")
    return out


def _wrapped(head: str, tokens: list[str]) -> list[str]:
    lines, cur = [], head
    for tok in tokens:
        if len(cur) + 1 + len(tok) > _WRAP and cur.strip():
            lines.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    lines.append(cur)
    return lines


def lp_text(model: MipModel) -> str:
    """CPLEX-LP rendering of ``model``.

    The quadratic objective is written as ``[ 2 g z * c ... ] / 2``: the LP
    dialect requires the halving suffix on quadratic objective blocks, and
    doubling every coefficient first keeps the product form and values exact.
    """
    out = [
        "\\ policy-tree MIP",
        f"\\ n = {model.n}",
        f"\\ p = {model.p}",
        f"\\ d = {model.d}",
        f"\\ depth = {model.depth}",
        f"\\ variables = {model.n_variables}",
        "\\ eps = " + " ".join(_fmt(e) for e in model.eps),
        f"\\ eps_max = {_fmt(model.eps_max)}",
        "Maximize",
    ]
    if model.objective:
        toks = ["["]
        for j, ((v1, v2), g) in enumerate(model.objective.items()):
            sign = "-" if g < 0 else "+"
            mag = _fmt(abs(2.0 * g))
            toks.append(f"{sign} {mag} {v1} * {v2}" if j or sign == "-" else f"{mag} {v1} * {v2}")
        toks.append("] / 2")
        out += _wrapped(" obj:", toks)
    else:
        out.append(" obj: 0")
    out.append("Subject To")
    for c in model.constraints:
        toks = _terms_text([(coef, v) for v, coef in c.terms]) + [c.sense, _fmt(c.rhs)]
        out += _wrapped(f" {c.name}:", toks)
    out.append("Bounds")
    for v, (lo, hi) in model.bounds.items():
        out.append(f" {_fmt(lo)} <= {v} <= {_fmt(hi)}")
    out.append("Binaries")
    out += _wrapped("", model.binaries)
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: MipModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(lp_text(model))


_SECTIONS = ("maximize", "subject to", "bounds", "binaries", "end")


def _parse_linear(text: str) -> list[tuple[str, float]]:
    toks = text.split()
    terms, sign, coef = [], 1.0, None
    for tok in toks:
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
        elif re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        else:
            coef = float(tok)
    return terms


def parse_lp(text: str) -> MipModel:
    """Read back a file produced by :func:`write_lp`."""
    meta = {}
    body: dict[str, list[str]] = {s: [] for s in _SECTIONS}
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if "=" in line:
                k, v = line[1:].split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if line.lower() in _SECTIONS:
            section = line.lower()
            continue
        if section is None:
            raise ValueError(f"content before the first section: {line!r}")
        body[section].append(line)

    # constraints: a new one starts at "name:"
    stmts: list[str] = []
    for line in body["subject to"]:
        if re.match(r"^[A-Za-z_][A-Za-z0-9_]*:", line):
            stmts.append(line)
        else:
            stmts[-1] += " " + line
    cons = []
    for st in stmts:
        name, rest = st.split(":", 1)
        m = re.search(r"(<=|>=|=)\s*(\S+)\s*$", rest)
        cons.append(Constraint(name.strip(), tuple(_parse_linear(rest[: m.start()])), m.group(1), float(m.group(2))))

    objective = {}
    obj = " ".join(body["maximize"])
    obj = obj.split(":", 1)[1] if ":" in obj else obj
    if "[" in obj:
        inner = obj[obj.index("[") + 1 : obj.rindex("]")]
        for sgn, coef, v1, v2 in re.findall(
            r"([+-])?\s*([0-9.eE+-]+|inf)\s+([A-Za-z_][A-Za-z0-9_]*)\s*\*\s*([A-Za-z_][A-Za-z0-9_]*)", inner
        ):
            g = float(coef) / 2.0
            objective[(v1, v2)] = -g if sgn == "-" else g

    bounds = {}
    for line in body["bounds"]:
        lo, v, hi = re.fullmatch(r"(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)", line).groups()
        bounds[v] = (float(lo), float(hi))
    binaries = " ".join(body["binaries"]).split()

    n, p, d, depth = (int(meta[k]) for k in ("n", "p", "d", "depth"))
    nb = 2 ** (depth - 1) - 1
    a_names = binaries[: nb * p]
    variables = a_names + list(bounds) + binaries[nb * p :]
    return MipModel(
        n=n,
        p=p,
        d=d,
        depth=depth,
        eps=tuple(float(e) for e in meta["eps"].split()),
        eps_max=float(meta["eps_max"]),
        variables=variables,
        binaries=binaries,
        bounds=bounds,
        constraints=cons,
        objective=objective,
    )


def read_lp(path) -> MipModel:
    with open(path, encoding="utf-8") as fh:
        return parse_lp(fh.read())


# --------------------------------------------------------------------------- checking


class _Compiled:
    """Sparse constraint matrix and objective pairs for fast repeated checks."""

    def __init__(self, model: MipModel):
        self.index = {v: j for j, v in enumerate(model.variables)}
        rows, cols, vals = [], [], []
        for r, c in enumerate(model.constraints):
            for v, coef in c.terms:
                rows.append(r)
                cols.append(self.index[v])
                vals.append(coef)
        self.A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(model.constraints), len(model.variables)))
        self.rhs = np.array([c.rhs for c in model.constraints])
        sense = np.array([c.sense for c in model.constraints])
        self.le, self.ge, self.eq = sense == "<=", sense == ">=", sense == "="
        self.bin = np.array([self.index[v] for v in model.binaries], dtype=np.int64)
        self.cont = np.array([self.index[v] for v in model.bounds], dtype=np.int64)
        self.lo = np.array([lo for lo, _ in model.bounds.values()])
        self.hi = np.array([hi for _, hi in model.bounds.values()])
        self.o1 = np.array([self.index[a] for a, _ in model.objective], dtype=np.int64)
        self.o2 = np.array([self.index[b] for _, b in model.objective], dtype=np.int64)
        self.og = np.array(list(model.objective.values()))

    def feasible(self, V: np.ndarray) -> np.ndarray:
        """Row-wise feasibility of an ``(m, n_vars)`` assignment matrix."""
        V = np.atleast_2d(V)
        ok = np.all((V[:, self.bin] == 0) | (V[:, self.bin] == 1), axis=1)
        if self.cont.size:
            ok &= np.all((V[:, self.cont] >= self.lo - FEAS_TOL) & (V[:, self.cont] <= self.hi + FEAS_TOL), axis=1)
        lhs = (self.A @ V.T).T - self.rhs
        ok &= np.all(lhs[:, self.le] <= FEAS_TOL, axis=1)
        ok &= np.all(lhs[:, self.ge] >= -FEAS_TOL, axis=1)
        ok &= np.all(np.abs(lhs[:, self.eq]) <= FEAS_TOL, axis=1)
        return ok

    def objective(self, v: np.ndarray) -> float:
        return math.fsum((self.og * v[self.o1] * v[self.o2]).tolist())


def assignment_vector(model: MipModel, assignment) -> np.ndarray:
    if isinstance(assignment, Mapping):
        missing = [v for v in model.variables if v not in assignment]
        if missing:
            raise MissingVariable(f"{len(missing)} variables unassigned, first {missing[0]!r}")
        return np.array([float(assignment[v]) for v in model.variables])
    v = np.asarray(assignment, dtype=np.float64)
    if v.shape != (model.n_variables,):
        raise MissingVariable(f"assignment has {v.size} entries for {model.n_variables} variables")
    return v


def check_assignment(model: MipModel, assignment) -> tuple[bool, float]:
    """Feasibility (tolerance 1e-6) and exact objective of a full assignment.

    ``assignment`` is a name -> value mapping or a vector in ``model.variables`` order.
    """
    v = assignment_vector(model, assignment)
    comp = model.compiled()
    return bool(comp.feasible(v)[0]), comp.objective(v)


def check_assignments(model: MipModel, V) -> np.ndarray:
    """Vectorized feasibility over the rows of an assignment matrix."""
    return model.compiled().feasible(np.asarray(V, dtype=np.float64))


def tree_to_assignment(model: MipModel, tree: TreePolicy, features) -> dict:
    """Encode a tree of depth <= ``model.depth`` as a MIP assignment.

    Each threshold ``s`` becomes ``b = `` the normalized value of the smallest
    data value ``>= s`` in that column, so the same points go right. Nodes
    that receive no points, or send every point right, get ``b = 0``.
    """
    X = np.asarray(features, dtype=np.float64)
    Xn = normalize_features(X)
    L = model.depth
    if tree.depth() > L:
        raise ValueError(f"tree depth {tree.depth()} exceeds model depth {L}")
    full = to_fixed_shape(tree, L, X)
    nb = model.n_branch
    val = {v: 0.0 for v in model.variables}
    leaf_of = np.zeros(X.shape[0], dtype=np.int64)

    def walk(node, h, idx):
        if h > nb:
            t = h - nb
            leaf_of[idx] = t
            val[f"c_{node.action + 1}_{t}"] = 1.0
            return
        q, s = node.split_dim, node.split_value
        val[f"a_{h}_{q + 1}"] = 1.0
        col = X[:, q]
        right_vals = col[col >= s]
        go_left = X[idx, q] < s
        if idx.size == 0 or not go_left.any():
            b = 0.0
        elif right_vals.size == 0:
            raise ValueError(f"node {h} sends a point left of every data value; not representable")
        else:
            j = int(np.argmin(np.where(col >= s, col, np.inf)))
            b = float(Xn[j, q])
        val[f"b_{h}"] = b
        walk(node.left, 2 * h, idx[go_left])
        walk(node.right, 2 * h + 1, idx[~go_left])

    if L == 1:
        val[f"c_{full.action + 1}_1"] = 1.0
        leaf_of[:] = 1
    else:
        walk(full, 1, np.arange(X.shape[0]))
    for i in range(X.shape[0]):
        val[f"z_{i + 1}_{leaf_of[i]}"] = 1.0
    return val


def brute_force_mip_optimum(features, scores, depth: int) -> float:
    """Maximum objective over every single-split structure and leaf labeling.

    Restricted to desk-scale instances (n <= 10, p <= 2, depth <= 2).
    """
    X = np.asarray(features, dtype=np.float64)
    S = as_score_array(scores)
    n, p = X.shape
    if n > 10 or p > 2 or depth > 2:
        raise InstanceTooLarge(f"brute force limited to n<=10, p<=2, depth<=2; got n={n}, p={p}, depth={depth}")
    d = S.shape[1]
    routes = [np.zeros(n, dtype=bool)]  # everything on one side
    if depth == 2:
        for q in range(p):
            u = np.unique(X[:, q])
            routes += [X[:, q] < (lo + hi) / 2 for lo, hi in zip(u[:-1], u[1:])]
    best = -math.inf
    for go_left in routes:
        for la, ra in itertools.product(range(d), repeat=2):
            acts = np.where(go_left, la, ra)
            best = max(best, math.fsum(S[np.arange(n), acts].tolist()))
    return best
