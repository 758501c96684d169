"""First-day feature extraction and the feature-matrix file format.

Feature CSV: header ``stay_id,<feature columns>,aki_label``; an empty cell is
a missing value. The sidecar manifest is JSON with the column kinds, id and
label column names, the cohort funnel and free-form notes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .records import StayRecord

ID_COLUMN = "stay_id"
LABEL_COLUMN = "aki_label"
AGGREGATIONS = ("value", "max", "mean", "min", "sum", "any")
KINDS = ("continuous", "binary")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    signal: str
    agg: str
    kind: str = "continuous"


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[ColumnSpec, ...]
    window_hours: float = 24.0
    name: str = "custom"

    def __post_init__(self):
        seen = set()
        for c in self.columns:
            if c.name in seen:
                raise SchemaError(f"duplicate column name {c.name!r}")
            if c.name in (ID_COLUMN, LABEL_COLUMN):
                raise SchemaError(f"column name {c.name!r} is reserved")
            if c.agg not in AGGREGATIONS:
                raise SchemaError(f"{c.name}: unknown aggregation {c.agg!r}")
            if c.kind not in KINDS:
                raise SchemaError(f"{c.name}: unknown kind {c.kind!r}")
            seen.add(c.name)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @classmethod
    def from_dict(cls, doc) -> "FeatureSchema":
        cols = tuple(ColumnSpec(**c) for c in doc["columns"])
        return cls(cols, float(doc.get("window_hours", 24.0)), doc.get("name", "custom"))

    @classmethod
    def load(cls, path=None) -> "FeatureSchema":
        """Read a schema file; ``None`` gives the packaged 72-column default."""
        if path is None:
            text = resources.files("nephrofp").joinpath("data/default_schema.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))


def default_schema() -> FeatureSchema:
    return FeatureSchema.load()


def _in_window(arr: np.ndarray, hours: float) -> np.ndarray:
    if len(arr) == 0:
        return arr[:, 1] if arr.ndim == 2 else arr
    t = arr[:, 0]
    return arr[(t >= 0.0) & (t < hours), 1]


def extract_first_day_features(stay: StayRecord, schema: FeatureSchema) -> dict[str, float]:
    """Aggregate events in ``[admit, admit + window)``; NaN marks a missing cell."""
    row = {}
    window = schema.window_hours
    cache: dict[str, np.ndarray] = {}
    for col in schema.columns:
        if col.agg == "value":
            row[col.name] = float(stay.demographics.get(col.signal, math.nan))
            continue
        if col.agg == "any":
            # an existence test: no episode means 0, not missing
            if col.signal == "ventilation":
                hit = any(s < window and e > 0.0 for s, e in stay.ventilation)
            else:
                hit = len(_in_window(stay.signal(col.signal), window)) > 0
            row[col.name] = float(hit)
            continue
        vals = cache.get(col.signal)
        if vals is None:
            vals = cache[col.signal] = _in_window(stay.signal(col.signal), window)
        if len(vals) == 0:
            row[col.name] = math.nan
        elif col.agg == "max":
            row[col.name] = float(vals.max())
        elif col.agg == "min":
            row[col.name] = float(vals.min())
        elif col.agg == "mean":
            row[col.name] = float(vals.mean())
        else:
            row[col.name] = float(vals.sum())
    return row


@dataclass
class FeatureMatrix:
    """Stay-indexed numeric table. NaN cells are missing; ``mask`` marks them."""

    stay_ids: np.ndarray
    columns: list[str]
    kinds: list[str]
    values: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.stay_ids), len(self.columns))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(set(self.columns)) != len(self.columns):
            raise SchemaError("column names must be unique")
        if len(self.kinds) != len(self.columns):
            raise SchemaError("one kind per column required")
        if len(self.labels) != len(self.stay_ids):
            raise ValueError("one label per row required")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def shape(self):
        return self.values.shape

    def missing_fraction(self) -> np.ndarray:
        return self.mask.mean(axis=0) if len(self.stay_ids) else np.zeros(len(self.columns))

    def select(self, names) -> "FeatureMatrix":
        idx = [self.columns.index(n) for n in names]
        return FeatureMatrix(self.stay_ids.copy(), list(names), [self.kinds[i] for i in idx],
                             self.values[:, idx].copy(), self.labels.copy(), dict(self.meta))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.columns)
        df.insert(0, ID_COLUMN, self.stay_ids)
        df[LABEL_COLUMN] = self.labels
        return df


def build_feature_matrix(stays, labels: dict, schema: FeatureSchema) -> FeatureMatrix:
    stays = list(stays)
    rows = [extract_first_day_features(s, schema) for s in stays]
    names = schema.names
    values = np.array([[r[n] for n in names] for r in rows], dtype=float).reshape(len(rows), len(names))
    ids = np.array([s.stay_id for s in stays])
    y = np.array([labels[s.stay_id] for s in stays], dtype=np.int64)
    return FeatureMatrix(ids, names, [c.kind for c in schema.columns], values, y)


def write_feature_matrix(fm: FeatureMatrix, csv_path, manifest_path=None, **manifest_extra):
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    fm.to_frame().to_csv(csv_path, index=False, na_rep="", lineterminator="\n")
    if manifest_path is not None:
        doc = {
            "id_column": ID_COLUMN,
            "label_column": LABEL_COLUMN,
            "columns": [{"name": n, "kind": k} for n, k in zip(fm.columns, fm.kinds)],
            **fm.meta,
            **manifest_extra,
        }
        Path(manifest_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_feature_matrix(csv_path, manifest_path) -> FeatureMatrix:
    doc = json.loads(Path(manifest_path).read_text())
    df = pd.read_csv(csv_path, float_precision="round_trip")
    id_col, label_col = doc.get("id_column", ID_COLUMN), doc.get("label_column", LABEL_COLUMN)
    names = [c["name"] for c in doc["columns"]]
    kinds = [c["kind"] for c in doc["columns"]]
    missing = [c for c in [id_col, label_col, *names] if c not in df.columns]
    if missing:
        raise SchemaError(f"{csv_path} lacks columns {missing}")
    meta = {k: v for k, v in doc.items() if k not in ("id_column", "label_column", "columns")}
    return FeatureMatrix(df[id_col].to_numpy(), names, kinds, df[names].to_numpy(dtype=float),
                         df[label_col].to_numpy(), meta)
