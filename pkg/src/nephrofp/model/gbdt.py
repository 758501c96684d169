"""Second-order gradient boosting with histogram splits for binary log-loss."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .binning import MAX_BINS, BinMapper
from .ensemble import Dataset, EnsembleModel, log_loss, sigmoid
from .tree import BinnedData, grow_gbdt_tree

LEAF_LAMBDA = 1.0


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 200
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 20
    n_bins: int = 256
    subsample: float = 1.0
    seed: int = 0
    balance_classes: bool = False

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 2 <= self.n_bins <= MAX_BINS:
            raise ValueError(f"n_bins must be in [2, {MAX_BINS}]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")


def _class_weights(y: np.ndarray, balance: bool) -> np.ndarray:
    w = np.ones(len(y))
    if balance:
        pos = y.sum()
        w[y == 1] = (len(y) - pos) / pos
    return w


def train_gbdt(data: Dataset, params: GbdtParams = GbdtParams()) -> EnsembleModel:
    data.require_both_classes()
    X, y = data.features, data.labels.astype(np.float64)
    n = len(y)
    w = _class_weights(y, params.balance_classes)
    rate = float((w * y).sum() / w.sum())
    base = float(np.log(rate / (1.0 - rate)))

    binned = BinnedData.from_mapper(BinMapper.fit(X, params.n_bins), X)
    rng = np.random.default_rng(params.seed)
    count = np.ones(n)
    raw = np.full(n, base)
    trace = [log_loss(y, raw, w)]
    trees = []
    for _ in range(params.n_trees):
        p = sigmoid(raw)
        grad = w * (p - y)
        hess = w * p * (1.0 - p)
        if params.subsample < 1.0:
            k = max(1, int(round(params.subsample * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        else:
            rows = np.arange(n)
        tree = grow_gbdt_tree(binned, rows, grad, hess, count, max_depth=params.max_depth,
                              min_samples_leaf=params.min_samples_leaf, lam=LEAF_LAMBDA)
        trees.append(tree)
        raw += params.learning_rate * tree.predict(X)
        trace.append(log_loss(y, raw, w))
    return EnsembleModel("gbdt", trees, base, params.learning_rate, data.n_features,
                         params=asdict(params), column_names=list(data.column_names), loss_trace=trace)
