"""Per-feature quantile binning.

Thresholds sit at midpoints between consecutive distinct training values, so
on features with at most ``n_bins`` distinct values a split on bin ``b`` is
the same partition an exact greedy splitter would produce for the threshold
``thresholds[b]``. A sample goes left of a split when ``x <= threshold``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_BINS = 256


@dataclass
class BinMapper:
    thresholds: list[np.ndarray]

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(t) + 1 for t in self.thresholds], dtype=np.int64)

    @classmethod
    def fit(cls, X: np.ndarray, n_bins: int = MAX_BINS) -> "BinMapper":
        if not 2 <= n_bins <= MAX_BINS:
            raise ValueError(f"n_bins must be in [2, {MAX_BINS}]")
        thresholds = []
        for j in range(X.shape[1]):
            distinct = np.unique(X[:, j])
            if len(distinct) > n_bins:
                qs = np.quantile(X[:, j], np.linspace(0, 1, n_bins + 1)[1:-1], method="midpoint")
                # snap each cut to a midpoint between neighbouring distinct values
                pos = np.clip(np.searchsorted(distinct, qs, side="left"), 1, len(distinct) - 1)
                pos = np.unique(pos)
                distinct_cuts = (distinct[pos - 1] + distinct[pos]) / 2.0
                thresholds.append(distinct_cuts)
            else:
                thresholds.append((distinct[:-1] + distinct[1:]) / 2.0)
        return cls(thresholds)

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Bin codes as a feature-major ``(n_features, n_samples)`` uint8 array."""
        out = np.empty((X.shape[1], X.shape[0]), dtype=np.uint8)
        for j, t in enumerate(self.thresholds):
            out[j] = np.searchsorted(t, X[:, j], side="left")
        return out
