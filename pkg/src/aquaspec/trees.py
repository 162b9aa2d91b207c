"""CART regression trees, random forests and squared-error gradient boosting.

Trees are stored as flat node arrays in pre-order.  A node with
``feature == -1`` is a leaf; otherwise samples with ``x[feature] <= threshold``
go to ``left``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import DimensionError, check_matrix

LEAF = -1
# relative gain below which a node is treated as unsplittable (absorbs round-off)
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X) -> np.ndarray:
        X = _check_predict_input(X, self.n_features)
        return self.value[self.apply(X)]

    def to_dict(self, i: int = 0) -> dict:
        if self.feature[i] == LEAF:
            return {"leaf": float(self.value[i])}
        return {"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                "left": self.to_dict(int(self.left[i])), "right": self.to_dict(int(self.right[i]))}

    @classmethod
    def from_dict(cls, d: dict, n_features: int) -> "Tree":
        b = _Builder()

        def walk(node):
            i = b.add()
            if "leaf" in node:
                b.value[i] = node["leaf"]
            else:
                b.feature[i] = node["feature"]
                b.threshold[i] = node["threshold"]
                b.left[i] = walk(node["left"])
                b.right[i] = walk(node["right"])
            return i

        walk(d)
        return b.build(n_features)


class _Builder:
    def __init__(self):
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []

    def add(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, n_features: int) -> Tree:
        return Tree(np.array(self.feature, dtype=np.intp), np.array(self.threshold, dtype=float),
                    np.array(self.left, dtype=np.intp), np.array(self.right, dtype=np.intp),
                    np.array(self.value, dtype=float), n_features)


def _check_predict_input(X, n_features: int) -> np.ndarray:
    X = check_matrix(X)
    if X.shape[1] != n_features:
        raise DimensionError(f"expected {n_features} columns, got {X.shape[1]}")
    return X


def _sorted_columns(Xn: np.ndarray, feats: np.ndarray):
    cols = Xn[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    return np.take_along_axis(cols, order, axis=0), order


def _pick(gain: np.ndarray, valid: np.ndarray):
    """Best (column, position) by gain; ties -> lowest column, then lowest position."""
    gain = np.where(valid, gain, -np.inf).T  # (m, n-1): column-major search order
    flat = int(np.argmax(gain))
    col, pos = divmod(flat, gain.shape[1])
    return col, pos, float(gain[col, pos])


def _threshold(xs: np.ndarray, pos: int, col: int) -> float:
    a, b = xs[pos, col], xs[pos + 1, col]
    t = 0.5 * (a + b)
    return float(a) if t >= b else float(t)


def _choose_features(d: int, mtry: int, rng) -> np.ndarray:
    if mtry >= d:
        return np.arange(d)
    return np.sort(rng.choice(d, size=mtry, replace=False))


def _grow(X, leaf_value, split_gain, sse, max_depth, min_leaf, mtry, rng) -> Tree:
    """Depth-first greedy growth shared by CART and boosting trees.

    ``split_gain(idx, order, nl, m)`` scores every split position of every
    candidate column at once; ``order`` sorts the node rows per column.
    """
    n, d = X.shape
    b = _Builder()
    stack = [(np.arange(n), 0, None)]
    while stack:
        idx, depth, parent_slot = stack.pop()
        i = b.add()
        if parent_slot is not None:
            parent, side = parent_slot
            (b.left if side == 0 else b.right)[parent] = i
        b.value[i] = leaf_value(idx)
        m = idx.shape[0]
        if (max_depth is not None and depth >= max_depth) or m < 2 * min_leaf or m < 2:
            continue
        feats = _choose_features(d, mtry, rng)
        xs, order = _sorted_columns(X[idx], feats)
        nl = np.arange(1, m)[:, None]
        valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (m - nl >= min_leaf)
        if not valid.any():
            continue
        gain = split_gain(idx, order, nl, m)
        col, pos, best = _pick(gain, valid)
        if not best > _GAIN_RTOL * sse(idx):
            continue
        f = int(feats[col])
        thr = _threshold(xs, pos, col)
        go_left = X[idx, f] <= thr
        b.feature[i] = f
        b.threshold[i] = thr
        # right pushed first so the left subtree is numbered first (pre-order)
        stack.append((idx[~go_left], depth + 1, (i, 1)))
        stack.append((idx[go_left], depth + 1, (i, 0)))
    return b.build(d)


def cart_fit(X, y, max_depth: Optional[int] = None, min_leaf: int = 1,
             mtry: Optional[int] = None, rng=None) -> Tree:
    """Greedy variance-reduction regression tree."""
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"{X.shape[0]} rows but {y.shape} targets")
    d = X.shape[1]
    mtry = d if mtry is None else int(mtry)
    if not 1 <= mtry <= d:
        raise ValueError(f"mtry must be in [1, {d}]")
    if mtry < d and rng is None:
        raise ValueError("rng required when mtry < d")

    def leaf_value(idx):
        return float(y[idx].mean())

    def sse(idx):
        r = y[idx] - y[idx].mean()
        return float(r @ r)

    def split_gain(idx, order, nl, m):
        yc = y[idx] - y[idx].mean()
        total = yc.sum()
        left = np.cumsum(yc[order], axis=0)[:-1]
        return left ** 2 / nl + (total - left) ** 2 / (m - nl) - total ** 2 / m

    return _grow(X, leaf_value, split_gain, sse, max_depth, min_leaf, mtry, rng)


@dataclass(frozen=True)
class ForestModel:
    trees: List[Tree]
    mtry: int
    min_leaf: int
    max_depth: Optional[int]
    seed: int
    bootstrap: bool = True

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X) -> np.ndarray:
        X = _check_predict_input(X, self.trees[0].n_features)
        return np.vstack([t.value[t.apply(X)] for t in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    def to_dict(self) -> dict:
        return {"kind": "forest", "version": 1, "mtry": self.mtry, "min_leaf": self.min_leaf,
                "max_depth": self.max_depth, "seed": self.seed, "bootstrap": self.bootstrap,
                "n_features": self.trees[0].n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        trees = [Tree.from_dict(t, d["n_features"]) for t in d["trees"]]
        return cls(trees, d["mtry"], d["min_leaf"], d["max_depth"], d["seed"], d["bootstrap"])


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent stream per tree, so results do not depend on training order."""
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def _fit_one_tree(X, y, t, seed, bootstrap, max_depth, min_leaf, mtry):
    rng = tree_rng(seed, t)
    if bootstrap:
        rows = rng.integers(0, X.shape[0], X.shape[0])
        Xb, yb = X[rows], y[rows]
    else:
        Xb, yb = X, y
    return cart_fit(Xb, yb, max_depth=max_depth, min_leaf=min_leaf, mtry=mtry, rng=rng)


def rf_fit(X, y, n_trees: int = 500, mtry: Optional[int] = None, min_leaf: int = 5,
           max_depth: Optional[int] = None, seed: int = 0, bootstrap: bool = True,
           n_jobs: int = 1) -> ForestModel:
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("random forest needs at least 2 rows")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    d = X.shape[1]
    mtry = math.ceil(d / 3) if mtry is None else int(mtry)
    args = (seed, bootstrap, max_depth, min_leaf, mtry)
    if n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(lambda t: _fit_one_tree(X, y, t, *args), range(n_trees)))
    else:
        trees = [_fit_one_tree(X, y, t, *args) for t in range(n_trees)]
    return ForestModel(trees, mtry, min_leaf, max_depth, seed, bootstrap)


@dataclass(frozen=True)
class BoostModel:
    base_score: float
    trees: List[Tree]
    eta: float
    lam: float
    max_depth: Optional[int]
    n_features: int
    train_rmse: List[float] = field(default_factory=list)

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = _check_predict_input(X, self.n_features)
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            out += self.eta * t.value[t.apply(X)]
        return out

    def to_dict(self) -> dict:
        return {"kind": "boost", "version": 1, "base_score": self.base_score, "eta": self.eta,
                "lambda": self.lam, "max_depth": self.max_depth, "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "BoostModel":
        trees = [Tree.from_dict(t, d["n_features"]) for t in d["trees"]]
        return cls(d["base_score"], trees, d["eta"], d["lambda"], d["max_depth"],
                   d["n_features"])


def boost_tree_fit(X, grad, hess, lam: float, max_depth: Optional[int], min_leaf: int) -> Tree:
    """One second-order boosting tree: leaf weight -G/(H+lam)."""

    def leaf_value(idx):
        return float(-grad[idx].sum() / (hess[idx].sum() + lam))

    def sse(idx):
        g = grad[idx]
        return float(g @ g)

    def split_gain(idx, order, nl, m):
        g, h = grad[idx], hess[idx]
        G, H = g.sum(), h.sum()
        gl = np.cumsum(g[order], axis=0)[:-1]
        hl = np.cumsum(h[order], axis=0)[:-1]
        gr, hr = G - gl, H - hl
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - G ** 2 / (H + lam))
        return np.nan_to_num(gain, nan=-np.inf)

    return _grow(X, leaf_value, split_gain, sse, max_depth, min_leaf, X.shape[1], None)


def xgb_fit(X, y, n_rounds: int = 100, eta: float = 0.3, lam: float = 1.0,
            max_depth: Optional[int] = 3, min_leaf: int = 1) -> BoostModel:
    """Squared-error gradient boosting with exact greedy splits."""
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1:
        raise ValueError("empty training set")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"{X.shape[0]} rows but {y.shape} targets")
    base = float(y.mean())
    pred = np.full(y.shape, base)
    hess = np.ones_like(y)
    trees, history = [], [float(np.sqrt(np.mean((pred - y) ** 2)))]
    for _ in range(n_rounds):
        grad = pred - y
        tree = boost_tree_fit(X, grad, hess, lam, max_depth, min_leaf)
        pred = pred + eta * tree.value[tree.apply(X)]
        trees.append(tree)
        history.append(float(np.sqrt(np.mean((pred - y) ** 2))))
    return BoostModel(base, trees, eta, lam, max_depth, X.shape[1], history)


def tree_predict(model, X) -> np.ndarray:
    return model.predict(X)
