"""Ranking and threshold metrics for binary risk scores."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

__all__ = ["SingleClass", "NoPositives", "auroc", "auprc", "f1", "EvalReport", "evaluate"]


class SingleClass(ValueError):
    pass


class NoPositives(ValueError):
    pass


def _prep(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{len(s)} scores but {len(y)} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    return s, y.astype(np.int64)


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate: P(pos > neg) + P(tie) / 2 over all pairs."""
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs both classes")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision with tied scores collapsed into one threshold."""
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("AUPRC needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each block of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[ends]
    k = ends + 1
    precision = tp / k
    d_recall = np.diff(np.r_[0, tp]) / n_pos
    return float((d_recall * precision).sum())


def f1(scores, labels, threshold: float = 0.5) -> float:
    s, y = _prep(scores, labels)
    pred = s >= threshold
    tp = int((pred & (y == 1)).sum())
    if tp == 0:
        return 0.0
    precision = tp / int(pred.sum())
    recall = tp / int(y.sum())
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    auprc: float
    f1: float
    threshold: float
    n_pos: int
    n_neg: int

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        """Write ``<path>.txt`` (key=value lines) and ``<path>.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.with_suffix(".txt").write_text(self.to_text())
        path.with_suffix(".json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "EvalReport":
        return cls(**json.loads(Path(path).with_suffix(".json").read_text()))


def evaluate(scores, labels, threshold: float = 0.5) -> EvalReport:
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    return EvalReport(auroc(s, y), auprc(s, y), f1(s, y, threshold), float(threshold),
                      n_pos, len(y) - n_pos)
