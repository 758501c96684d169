"""Missingness filtering and chained-equation imputation.

:func:`mice` is a deterministic single imputation: every sweep replaces a
column's missing cells with the conditional-mean prediction of a ridge model
(continuous columns) or a ridge-penalised logistic model fitted by IRLS
(binary columns, thresholded at 0.5). No posterior draws are made.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .cohort.features import ID_COLUMN, FeatureMatrix

log = logging.getLogger(__name__)

__all__ = [
    "ImputeConfig",
    "ImputedMatrix",
    "DropReport",
    "AllColumnsDropped",
    "SingularSystem",
    "drop_high_missing",
    "mice",
    "write_imputed",
    "read_imputed",
]

IRLS_MAX_ITER = 25


class AllColumnsDropped(ValueError):
    pass


class SingularSystem(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ImputeConfig:
    drop_threshold: float = 0.20
    cycles: int = 10
    ridge_lambda: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.drop_threshold < 1:
            raise ValueError("drop_threshold must be in (0, 1)")
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")


@dataclass
class DropReport:
    dropped: list[tuple[str, float]]
    kept: list[str]


@dataclass
class ImputedMatrix:
    matrix: FeatureMatrix
    # True where the cell was filled in rather than observed
    imputed: np.ndarray
    dropped_columns: list[tuple[str, float]] = field(default_factory=list)
    fallbacks: list[tuple[int, str]] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return self.matrix.values

    @property
    def provenance(self) -> np.ndarray:
        """1 for imputed cells, 0 for observed ones."""
        return self.imputed.astype(np.int8)


def drop_high_missing(fm: FeatureMatrix, cfg: ImputeConfig = ImputeConfig()):
    """Remove columns whose missing fraction is strictly above the threshold."""
    if len(fm.stay_ids) == 0:
        raise ValueError("feature matrix has no rows")
    frac = fm.missing_fraction()
    keep = [n for n, f in zip(fm.columns, frac) if not f > cfg.drop_threshold]
    dropped = [(n, float(f)) for n, f in zip(fm.columns, frac) if f > cfg.drop_threshold]
    if not keep:
        raise AllColumnsDropped(f"every column exceeds {cfg.drop_threshold:.0%} missing")
    return fm.select(keep), DropReport(dropped, keep)


def _standardize(X: np.ndarray):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    ok = sd > 1e-12
    return (X[:, ok] - mu[ok]) / sd[ok], mu, sd, ok


def _ridge_predict(X_fit, y, X_new, lam):
    Z, mu, sd, ok = _standardize(X_fit)
    y_mean = y.mean()
    A = Z.T @ Z + lam * np.eye(Z.shape[1])
    try:
        beta = np.linalg.solve(A, Z.T @ (y - y_mean))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(beta)):
        raise SingularSystem("non-finite ridge coefficients")
    return y_mean + ((X_new[:, ok] - mu[ok]) / sd[ok]) @ beta


def _logistic_predict(X_fit, y, X_new, lam):
    Z, mu, sd, ok = _standardize(X_fit)
    Z1 = np.column_stack([np.ones(len(Z)), Z])
    if y.min() == y.max():
        return np.full(len(X_new), float(y[0]))
    penalty = lam * np.eye(Z1.shape[1])
    penalty[0, 0] = 0.0
    p0 = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    w = np.zeros(Z1.shape[1])
    w[0] = np.log(p0 / (1 - p0))
    for _ in range(IRLS_MAX_ITER):
        eta = np.clip(Z1 @ w, -30, 30)
        p = 1.0 / (1.0 + np.exp(-eta))
        W = np.maximum(p * (1 - p), 1e-10)
        H = (Z1 * W[:, None]).T @ Z1 + penalty
        g = Z1.T @ (p - y) + penalty @ w
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        w = w - step
        if not np.all(np.isfinite(w)):
            raise SingularSystem("IRLS diverged")
        if np.max(np.abs(step)) < 1e-8:
            break
    Zn = (X_new[:, ok] - mu[ok]) / sd[ok]
    eta = np.clip(w[0] + Zn @ w[1:], -30, 30)
    return 1.0 / (1.0 + np.exp(-eta))


def _initial_fill(col: np.ndarray, observed: np.ndarray, kind: str) -> float:
    obs = col[observed]
    if kind == "binary":
        ones = int((obs == 1).sum())
        # mode, ties go to 0
        return 1.0 if ones > len(obs) - ones else 0.0
    return float(obs.mean())


def mice(fm: FeatureMatrix, cfg: ImputeConfig = ImputeConfig()) -> ImputedMatrix:
    """Fill every missing cell of ``fm``; observed cells are never modified."""
    X = fm.values.copy()
    missing = np.isnan(X)
    n, d = X.shape
    n_obs = (~missing).sum(axis=0)
    if (n_obs < 2).any():
        bad = [fm.columns[j] for j in np.flatnonzero(n_obs < 2)]
        raise ValueError(f"columns with fewer than 2 observed values: {bad}")
    if n and (missing.all(axis=1)).any():
        raise ValueError("rows with no observed value present")

    for j in range(d):
        if missing[:, j].any():
            X[missing[:, j], j] = _initial_fill(X[:, j], ~missing[:, j], fm.kinds[j])

    frac = missing.mean(axis=0)
    order = [j for j in np.argsort(frac, kind="stable") if frac[j] > 0]
    fallbacks = []
    if d > 1:
        for cycle in range(cfg.cycles):
            for j in order:
                rows_obs = ~missing[:, j]
                others = np.delete(np.arange(d), j)
                X_fit = X[rows_obs][:, others]
                X_new = X[missing[:, j]][:, others]
                y = X[rows_obs, j]
                try:
                    if fm.kinds[j] == "binary":
                        pred = (_logistic_predict(X_fit, y, X_new, cfg.ridge_lambda) >= 0.5).astype(float)
                    else:
                        pred = _ridge_predict(X_fit, y, X_new, cfg.ridge_lambda)
                except SingularSystem as exc:
                    log.warning("cycle %d, column %s: %s; using mean fill", cycle, fm.columns[j], exc)
                    fallbacks.append((cycle, fm.columns[j]))
                    pred = np.full(len(X_new), _initial_fill(X[:, j], rows_obs, fm.kinds[j]))
                X[missing[:, j], j] = pred

    out = FeatureMatrix(fm.stay_ids.copy(), list(fm.columns), list(fm.kinds), X, fm.labels.copy(),
                        dict(fm.meta))
    return ImputedMatrix(out, missing, fallbacks=fallbacks)


def write_imputed(im: ImputedMatrix, out_dir, stem: str = "imputed"):
    """Write ``<stem>.csv``, ``<stem>.provenance.csv`` and ``<stem>.manifest.json``."""
    from .cohort.features import write_feature_matrix

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_feature_matrix(
        im.matrix, out_dir / f"{stem}.csv", out_dir / f"{stem}.manifest.json",
        dropped_columns=[{"name": n, "missing_fraction": f} for n, f in im.dropped_columns],
        mice_fallbacks=[{"cycle": c, "column": n} for c, n in im.fallbacks],
    )
    prov = pd.DataFrame(im.provenance, columns=im.matrix.columns)
    prov.insert(0, ID_COLUMN, im.matrix.stay_ids)
    prov.to_csv(out_dir / f"{stem}.provenance.csv", index=False, lineterminator="\n")


def read_imputed(out_dir, stem: str = "imputed") -> ImputedMatrix:
    from .cohort.features import read_feature_matrix

    out_dir = Path(out_dir)
    fm = read_feature_matrix(out_dir / f"{stem}.csv", out_dir / f"{stem}.manifest.json")
    prov = pd.read_csv(out_dir / f"{stem}.provenance.csv")
    doc = json.loads((out_dir / f"{stem}.manifest.json").read_text())
    dropped = [(d["name"], d["missing_fraction"]) for d in doc.get("dropped_columns", [])]
    fb = [(d["cycle"], d["column"]) for d in doc.get("mice_fallbacks", [])]
    for k in ("dropped_columns", "mice_fallbacks"):
        fm.meta.pop(k, None)
    return ImputedMatrix(fm, prov[fm.columns].to_numpy().astype(bool), dropped, fb)
