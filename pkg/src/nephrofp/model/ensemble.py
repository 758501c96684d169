from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import Tree

PROBA_CLIP = 1e-6


class DegenerateLabels(ValueError):
    """Training labels contain a single class."""


class ShapeMismatch(ValueError):
    pass


@dataclass
class Dataset:
    """Complete numeric design matrix with binary labels.

    ``binary_columns`` lists indices that must hold only 0/1 (the fingerprint
    block when present).
    """

    features: np.ndarray
    labels: np.ndarray
    column_names: list[str]
    binary_columns: tuple[int, ...] = ()

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeMismatch("features must be 2-D")
        n, d = self.features.shape
        if len(self.labels) != n:
            raise ShapeMismatch(f"{n} feature rows but {len(self.labels)} labels")
        if len(self.column_names) != d:
            raise ShapeMismatch(f"{d} columns but {len(self.column_names)} names")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain missing or non-finite values")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if self.binary_columns:
            block = self.features[:, list(self.binary_columns)]
            if not np.isin(block, (0.0, 1.0)).all():
                raise ValueError("binary columns must hold only 0 and 1")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def require_both_classes(self):
        pos = int(self.labels.sum())
        if pos == 0 or pos == len(self.labels):
            raise DegenerateLabels("training labels must contain both classes")

    def subset(self, rows) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], list(self.column_names), self.binary_columns)


@dataclass
class EnsembleModel:
    """A trained tree ensemble. Treat as immutable once returned by a trainer."""

    kind: str  # "gbdt" or "random_forest"
    trees: list[Tree]
    base_score: float
    learning_rate: float
    n_features: int
    params: dict = field(default_factory=dict)
    column_names: list[str] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("gbdt", "random_forest"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        for t in self.trees:
            internal = t.feature >= 0
            if (t.feature[internal] >= self.n_features).any():
                raise ValueError("tree splits on a feature the model does not have")

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(self, X)
        if self.kind == "gbdt":
            raw = np.full(len(X), self.base_score)
            for t in self.trees:
                raw += self.learning_rate * t.predict(X)
            return raw
        if not self.trees:
            return np.full(len(X), 1.0 / (1.0 + np.exp(-self.base_score)))
        acc = np.zeros(len(X))
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return predict_proba(self, X)


def _check_features(model: EnsembleModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeMismatch(f"model expects {model.n_features} columns, got shape {X.shape}")
    return X


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def predict_proba(model: EnsembleModel, X) -> np.ndarray:
    """Positive-class probability per row."""
    out = model.decision_function(X)
    if model.kind == "gbdt":
        return sigmoid(out)
    return np.clip(out, PROBA_CLIP, 1.0 - PROBA_CLIP)


def log_loss(y: np.ndarray, raw: np.ndarray, weights: np.ndarray | None = None) -> float:
    # log(1 + e^z) - y z, computed stably
    per = np.logaddexp(0.0, raw) - y * raw
    if weights is None:
        return float(per.mean())
    return float((weights * per).sum() / weights.sum())
