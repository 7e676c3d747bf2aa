"""Random forest of CART trees with Gini splits."""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"VSRF1"


class ModelFormatError(ValueError):
    pass


@dataclass
class Tree:
    """Flat binary tree. ``feature[k] == -1`` marks a leaf.

    Internal nodes send ``x[feature] <= threshold`` left. ``value`` holds the
    positive-class probability of each node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active[r] = self.feature[node[r]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def gini(y) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        return 0.0
    p = y.mean()
    return 2.0 * p * (1.0 - p)


def _best_split(Xn: np.ndarray, yn: np.ndarray, features: np.ndarray):
    """Lowest weighted Gini split among ``features``; None if no valid cut.

    Cuts fall on observed values, so a strictly increasing transform of a
    feature leaves the learned partition unchanged.
    """
    n = len(yn)
    cols = Xn[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    ys = yn[order]
    left_pos = np.cumsum(ys, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    right_pos = ys.sum(axis=0) - left_pos
    p_l = left_pos / n_left
    p_r = right_pos / n_right
    impurity = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)
    flat = int(np.argmin(impurity))
    i, j = divmod(flat, len(features))
    return int(features[j]), float(xs[i, j]), float(impurity[i, j])


def grow_tree(X: np.ndarray, y: np.ndarray, max_depth: int, max_features: int,
              rng: np.random.Generator, min_samples_leaf: int = 1) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = np.arange(len(y))
    stack = [(new_node(root), root, 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        p = yn.mean()
        if depth >= max_depth or p == 0.0 or p == 1.0 or len(idx) < 2 * min_samples_leaf:
            continue
        Xn = X[idx]
        nonconst = np.flatnonzero(Xn.max(axis=0) > Xn.min(axis=0))
        if not len(nonconst):
            continue
        cand = rng.permutation(nonconst)[:max_features] if len(nonconst) > max_features else rng.permutation(nonconst)
        split = _best_split(Xn, yn, np.sort(cand))
        if split is None:
            continue
        f, t, _ = split
        go_left = Xn[:, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        if len(li) < min_samples_leaf or len(ri) < min_samples_leaf:
            continue
        feature[node] = f
        threshold[node] = t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(value, dtype=np.float64),
    )


def stratified_bootstrap(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bootstrap indices drawn within each class, keeping class counts fixed."""
    parts = []
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        parts.append(members[rng.integers(0, len(members), size=len(members))])
    return np.sort(np.concatenate(parts))


@dataclass
class ForestModel:
    trees: list[Tree]
    n_features: int
    max_depth: int = 12
    max_features: int = 1
    seed: int = 0
    feature_names: list[str] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        return rf_predict_proba(self, X)


def rf_train(X, y, n_trees: int = 500, max_depth: int = 12, max_features: int | None = None,
             seed: int = 0, *, min_samples_leaf: int = 1, balanced_bootstrap: bool = True,
             threads: int = 1, feature_names=()) -> ForestModel:
    """Train a forest of Gini CART trees on bootstrap resamples.

    ``max_features`` defaults to ceil(sqrt(d)). Each tree draws its own
    generator from ``seed``, so results do not depend on ``threads``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or len(X) != len(y) or len(y) < 2:
        raise ValueError("X must be 2-D with one row per label and at least two rows")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    if not np.all(np.isfinite(X)):
        raise ValueError("training features must be finite")
    d = X.shape[1]
    m = max_features or max(1, math.ceil(math.sqrt(d)))
    m = min(m, d)
    seeds = np.random.SeedSequence(seed).spawn(n_trees)

    def one(ss):
        rng = np.random.default_rng(ss)
        idx = stratified_bootstrap(y, rng) if balanced_bootstrap else rng.integers(0, len(y), size=len(y))
        return grow_tree(X[idx], y[idx], max_depth, m, rng, min_samples_leaf)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(one, seeds))
    else:
        trees = [one(ss) for ss in seeds]
    return ForestModel(trees, d, max_depth, m, seed, list(feature_names))


def rf_predict_proba(model: ForestModel, X) -> np.ndarray:
    """Mean over trees of the leaf positive-class probability."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    out = np.zeros(len(X))
    for t in model.trees:
        out += t.predict(X)
    return out / max(1, len(model.trees))


# -- VSRF1 file format ---------------------------------------------------------
# magic | u32 n_features | u32 max_depth | u32 max_features | u64 seed | u32 n_names
# | names (u32 len + utf-8) | u32 n_trees | per tree: u32 n_nodes, i32 feature[],
# f64 threshold[], i32 left[], i32 right[], f64 value[]

def save_forest(model: ForestModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIQ", model.n_features, model.max_depth, model.max_features, model.seed))
        fh.write(struct.pack("<I", len(model.feature_names)))
        for name in model.feature_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
        fh.write(struct.pack("<I", len(model.trees)))
        for t in model.trees:
            fh.write(struct.pack("<I", t.n_nodes))
            fh.write(t.feature.astype("<i4").tobytes())
            fh.write(t.threshold.astype("<f8").tobytes())
            fh.write(t.left.astype("<i4").tobytes())
            fh.write(t.right.astype("<i4").tobytes())
            fh.write(t.value.astype("<f8").tobytes())


def _checked(tree: Tree, n_features: int) -> Tree:
    n = tree.n_nodes
    internal = tree.feature >= 0
    if n == 0 or np.any(tree.feature >= n_features) or np.any(tree.feature < -1):
        raise ValueError("feature index out of range")
    kids = np.concatenate([tree.left[internal], tree.right[internal]])
    if np.any(kids <= 0) or np.any(kids >= n):
        raise ValueError("child index out of range")
    return tree


def load_forest(path) -> ForestModel:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic bytes {data[:5]!r}, expected {MAGIC!r}")
    try:
        n_features, max_depth, max_features, seed = struct.unpack_from("<IIIQ", data, 5)
        off = 5 + 20
        (n_names,) = struct.unpack_from("<I", data, off)
        off += 4
        names = []
        for _ in range(n_names):
            (k,) = struct.unpack_from("<I", data, off)
            names.append(data[off + 4:off + 4 + k].decode("utf-8"))
            off += 4 + k
        (n_trees,) = struct.unpack_from("<I", data, off)
        off += 4
        trees = []
        for _ in range(n_trees):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            parts = []
            for dtype in ("<i4", "<f8", "<i4", "<i4", "<f8"):
                arr = np.frombuffer(data, dtype=dtype, count=n, offset=off)
                off += arr.nbytes
                parts.append(arr.astype(np.int64 if dtype == "<i4" else np.float64))
            trees.append(_checked(Tree(*parts), n_features))
    except (struct.error, ValueError) as exc:
        raise ModelFormatError(f"{path}: truncated or corrupt forest file ({exc})") from None
    if off != len(data):
        raise ModelFormatError(f"{path}: {len(data) - off} unexpected trailing byte(s)")
    return ForestModel(trees, n_features, max_depth, max_features, seed, names)
