"""Bagged Gini trees."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .binning import MAX_BINS, BinMapper
from .ensemble import Dataset, EnsembleModel
from .tree import BinnedData, grow_gini_tree


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    min_samples_leaf: int = 1
    max_depth: int | None = None
    # None means ceil(sqrt(d))
    max_features: int | None = None
    bootstrap: bool = True
    n_bins: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if not 2 <= self.n_bins <= MAX_BINS:
            raise ValueError(f"n_bins must be in [2, {MAX_BINS}]")


def train_random_forest(data: Dataset, params: ForestParams = ForestParams()) -> EnsembleModel:
    data.require_both_classes()
    X, y = data.features, data.labels.astype(np.float64)
    n, d = X.shape
    max_features = params.max_features or math.ceil(math.sqrt(d))
    binned = BinnedData.from_mapper(BinMapper.fit(X, params.n_bins), X)
    rng = np.random.default_rng(params.seed)
    trees = []
    for _ in range(params.n_trees):
        if params.bootstrap:
            mult = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        else:
            mult = np.ones(n)
        rows = np.flatnonzero(mult > 0)
        trees.append(grow_gini_tree(binned, rows, mult * y, mult, rng, max_features=max_features,
                                    min_samples_leaf=params.min_samples_leaf,
                                    max_depth=params.max_depth))
    rate = float(y.mean())
    return EnsembleModel("random_forest", trees, float(np.log(rate / (1 - rate))), 1.0, d,
                         params=asdict(params), column_names=list(data.column_names))
