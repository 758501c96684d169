from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import best_gbdt_split, best_gini_split, build_histogram


@dataclass
class Tree:
    """Array-backed binary tree. ``feature == -1`` marks a leaf.

    A sample goes to ``left`` when ``x[feature] <= threshold``. ``bin`` is the
    training-time bin index the threshold was read from.
    """

    feature: np.ndarray
    threshold: np.ndarray
    bin: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return _Builder().finish_with_leaf(value)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.arange(len(X))
        while len(active):
            f = self.feature[node[active]]
            internal = f >= 0
            active = active[internal]
            if not len(active):
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.bin = [], [], []
        self.left, self.right, self.value = [], [], []

    def add(self) -> int:
        for lst, v in ((self.feature, -1), (self.threshold, 0.0), (self.bin, -1),
                       (self.left, -1), (self.right, -1), (self.value, 0.0)):
            lst.append(v)
        return len(self.feature) - 1

    def split(self, node, feature, threshold, bin_):
        left, right = self.add(), self.add()
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.bin[node] = bin_
        self.left[node] = left
        self.right[node] = right
        return left, right

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int32),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.bin, dtype=np.int32),
            np.array(self.left, dtype=np.int32),
            np.array(self.right, dtype=np.int32),
            np.array(self.value, dtype=np.float64),
        )

    def finish_with_leaf(self, value) -> Tree:
        node = self.add()
        self.value[node] = value
        return self.build()


@dataclass
class BinnedData:
    """Training matrix restricted to features with more than one bin."""

    binned: np.ndarray  # (n_active, n_samples) uint8
    active: np.ndarray  # original column index per active feature
    thresholds: list[np.ndarray]  # per active feature
    nbins: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_mapper(cls, mapper, X: np.ndarray) -> "BinnedData":
        nb = mapper.n_bins
        active = np.flatnonzero(nb > 1)
        sub = type(mapper)([mapper.thresholds[j] for j in active])
        binned = sub.transform(X[:, active]) if len(active) else np.zeros((0, len(X)), np.uint8)
        nbins = nb[active].astype(np.int64)
        offsets = np.concatenate([[0], np.cumsum(nbins)[:-1]]).astype(np.int64)
        return cls(np.ascontiguousarray(binned), active, sub.thresholds, nbins, offsets)

    @property
    def total_bins(self) -> int:
        return int(self.nbins.sum())


def grow_gbdt_tree(data: BinnedData, rows: np.ndarray, grad, hess, count, *, max_depth: int,
                   min_samples_leaf: int, lam: float) -> Tree:
    """Depth-wise growth on gradient/hessian histograms.

    The larger child's histogram is the parent's minus the smaller child's.
    """
    b = _Builder()
    root = b.add()
    frontier = [(root, rows, None)]
    for depth in range(max_depth + 1):
        nxt = []
        for node, idx, hist in frontier:
            G = float(grad[idx].sum())
            H = float(hess[idx].sum())
            C = float(count[idx].sum())
            b.value[node] = -G / (H + lam)
            if depth == max_depth or C < 2 * min_samples_leaf or len(data.active) == 0:
                continue
            if hist is None:
                hist = build_histogram(data.binned, data.offsets, data.total_bins, idx, grad, hess, count)
            gain, f, bin_ = best_gbdt_split(hist, data.offsets, data.nbins, G, H, C, lam,
                                            float(min_samples_leaf))
            if f < 0 or not gain > 0.0:
                continue
            go_left = data.binned[f, idx] <= bin_
            li, ri = idx[go_left], idx[~go_left]
            left, right = b.split(node, int(data.active[f]), float(data.thresholds[f][bin_]), int(bin_))
            if len(li) <= len(ri):
                small = build_histogram(data.binned, data.offsets, data.total_bins, li, grad, hess, count)
                nxt += [(left, li, small), (right, ri, hist - small)]
            else:
                small = build_histogram(data.binned, data.offsets, data.total_bins, ri, grad, hess, count)
                nxt += [(left, li, hist - small), (right, ri, small)]
        frontier = nxt
        if not frontier:
            break
    return b.build()


def grow_gini_tree(data: BinnedData, rows: np.ndarray, pos_w, w, rng, *, max_features: int,
                   min_samples_leaf: int, max_depth: int | None) -> Tree:
    """Depth-first CART growth with a fresh feature permutation per node."""
    b = _Builder()
    root = b.add()
    stack = [(root, rows, 0)]
    n_active = len(data.active)
    while stack:
        node, idx, depth = stack.pop()
        P = float(pos_w[idx].sum())
        W = float(w[idx].sum())
        b.value[node] = P / W
        if (
            (max_depth is not None and depth >= max_depth)
            or W < 2 * min_samples_leaf
            or P <= 0.0
            or P >= W
            or n_active == 0
        ):
            continue
        perm = rng.permutation(n_active)
        _, f, bin_ = best_gini_split(data.binned, data.nbins, idx, pos_w, w, perm,
                                     max_features, float(min_samples_leaf))
        if f < 0:
            continue
        go_left = data.binned[f, idx] <= bin_
        left, right = b.split(node, int(data.active[f]), float(data.thresholds[f][bin_]), int(bin_))
        stack.append((right, idx[~go_left], depth + 1))
        stack.append((left, idx[go_left], depth + 1))
    return b.build()
