"""
Bootstrap-aggregated decision trees for ROI pixel vectors.

Trees are axis-aligned, grown greedily on Gini impurity with sqrt(d)
candidate features per split.  The forest predicts by majority vote of the
trees' leaf labels, a tied vote counting as dark.

Features are either the raw pixel vector or its values ranked in descending
order ("sorted").  Ranking discards which pixel was hot but lets a tree count
photon-like pixel events, which raw single-pixel splits cannot do.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ..mc import Label

FOREST_MAGIC = b"SHRF"
FOREST_VERSION = 1
FEATURE_MODES = ("raw", "sorted")
_HEADER = "<HBIIIQ"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_split: int = 2
    max_features: int | None = None   # default floor(sqrt(d))
    seed: int = 0
    features: str = "sorted"

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0:
            raise ValueError("need at least one tree and a non-negative depth")
        if self.features not in FEATURE_MODES:
            raise ValueError(f"feature mode must be one of {FEATURE_MODES}")


def transform(X, mode):
    if mode == "sorted":
        return -np.sort(-X, axis=1)
    return X


@dataclass
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray      # leaf label (int8)

    @property
    def depth(self):
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r, n = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])
        return self.label[node]


def _best_split(Xn, yn, feats):
    """Lowest weighted Gini over ``feats``; returns (feature, threshold) or None."""
    n = len(yn)
    sub = Xn[:, feats]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = yn[order]
    pos_left = np.cumsum(ys, axis=0)[:-1]          # class-1 count left of split i|i+1
    n_left = np.arange(1, n)[:, None]
    n_right = n - n_left
    pos_total = ys.sum(axis=0)
    pl = pos_left / n_left
    pr = (pos_total - pos_left) / n_right
    gini = n_left * 2 * pl * (1 - pl) + n_right * 2 * pr * (1 - pr)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    gini = np.where(valid, gini, np.inf)
    i, j = np.unravel_index(np.argmin(gini), gini.shape)
    return int(feats[j]), 0.5 * (xs[i, j] + xs[i + 1, j])


def _leaf_label(y):
    ones = int(y.sum())
    return Label.BRIGHT if ones > len(y) - ones else Label.DARK


def grow_tree(X, y, max_depth, min_samples_split, max_features, rng) -> Tree:
    d = X.shape[1]
    feature, threshold, left, right, label = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        label[node] = _leaf_label(yn)
        pure = yn.min() == yn.max()
        if pure or depth >= max_depth or len(idx) < min_samples_split:
            continue
        Xn = X[idx]
        split = _best_split(Xn, yn, rng.choice(d, max_features, replace=False))
        if split is None:
            split = _best_split(Xn, yn, np.arange(d))
            if split is None:
                continue
        f, thr = split
        mask = Xn[:, f] <= thr
        l, r = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = f, thr, l, r
        stack.append((r, idx[~mask], depth + 1))
        stack.append((l, idx[mask], depth + 1))
    return Tree(np.array(feature, np.int32), np.array(threshold, float),
                np.array(left, np.int32), np.array(right, np.int32), np.array(label, np.int8))


@dataclass
class ForestModel:
    trees: list
    n_features: int
    params: ForestParams

    def __post_init__(self):
        if not self.trees:
            raise ValueError("forest needs at least one tree")

    @property
    def n_trees(self):
        return len(self.trees)

    def votes(self, X):
        X = transform(_check(X, self.n_features), self.params.features)
        return sum(t.predict(X).astype(np.int64) for t in self.trees)

    def predict(self, X):
        return (2 * self.votes(X) > self.n_trees).astype(np.int8)

    # -- binary dump -------------------------------------------------------
    def dumps(self) -> bytes:
        """
        Layout (little-endian): magic, u16 version, u8 feature mode, u32
        n_trees, u32 n_features, u32 max_depth, u64 seed, then per tree u32 n_nodes and the node
        arrays feature (i32), threshold (f64), left (i32), right (i32),
        label (i8).
        """
        mode = FEATURE_MODES.index(self.params.features)
        out = [FOREST_MAGIC, struct.pack(_HEADER, FOREST_VERSION, mode, self.n_trees, self.n_features,
                                                self.params.max_depth, self.params.seed & (2**64 - 1))]
        for t in self.trees:
            out.append(struct.pack("<I", len(t.feature)))
            out += [t.feature.astype("<i4").tobytes(), t.threshold.astype("<f8").tobytes(),
                    t.left.astype("<i4").tobytes(), t.right.astype("<i4").tobytes(),
                    t.label.astype("i1").tobytes()]
        return b"".join(out)

    @classmethod
    def loads(cls, data: bytes) -> "ForestModel":
        if data[:4] != FOREST_MAGIC:
            raise ValueError("not a forest dump")
        (version,) = struct.unpack_from("<H", data, 4)
        if version != FOREST_VERSION:
            raise ValueError(f"unsupported forest dump version {version}")
        _, mode, n_trees, n_features, depth, seed = struct.unpack_from(_HEADER, data, 4)
        pos = 4 + struct.calcsize(_HEADER)
        trees = []
        for _ in range(n_trees):
            (m,) = struct.unpack_from("<I", data, pos)
            pos += 4
            arrays = []
            for dtype, size in (("<i4", 4), ("<f8", 8), ("<i4", 4), ("<i4", 4), ("i1", 1)):
                arrays.append(np.frombuffer(data, dtype=dtype, count=m, offset=pos).copy())
                pos += size * m
            f, thr, l, r, lab = arrays
            trees.append(Tree(f.astype(np.int32), thr.astype(float), l.astype(np.int32),
                              r.astype(np.int32), lab.astype(np.int8)))
        return cls(trees, n_features, ForestParams(n_trees=n_trees, max_depth=depth, seed=seed,
                                                       features=FEATURE_MODES[mode]))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


def _check(X, d):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None]
    if X.shape[1] != d:
        raise ValueError(f"expected {d} features, got {X.shape[1]}")
    return X


def train_classifier(X, y, params: ForestParams = ForestParams()) -> ForestModel:
    """Fit a forest on labelled pixel vectors (rows of ``X``)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2D with one row per label")
    if not ((y == Label.DARK).any() and (y == Label.BRIGHT).any()):
        raise ValueError("training data needs both classes")
    d = X.shape[1]
    X = transform(X, params.features)
    max_features = params.max_features or max(1, int(math.sqrt(d)))
    max_features = min(max_features, d)
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence(params.seed, spawn_key=(t,)))
        boot = rng.integers(0, len(y), len(y))
        trees.append(grow_tree(X[boot], y[boot], params.max_depth, params.min_samples_split, max_features, rng))
    return ForestModel(trees, d, params)


def classify_pixels(model: ForestModel, pixvec):
    """Majority vote; a single vector returns a Label, a 2D array returns int8 labels."""
    pixvec = np.asarray(pixvec)
    out = model.predict(pixvec)
    return Label(int(out[0])) if pixvec.ndim == 1 else out
