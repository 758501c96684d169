"""Stay records and CSV bundle ingestion.

A bundle is a directory of UTF-8 CSV files with mandatory header rows and
ISO-8601 timestamps:

``stays.csv``          stay_id, patient_id, admit_time
``demographics.csv``   stay_id, age, gender, weight_kg, height_cm, admission_type, ethnicity
``chartevents.csv``    stay_id, charttime, item, value
``labevents.csv``      stay_id, charttime, item, value
``outputevents.csv``   stay_id, charttime, value            (urine, mL)
``ventilation.csv``    stay_id, starttime, endtime
``diagnoses.csv``      patient_id, icd9_code, diagnosis_time
``prescriptions.csv``  stay_id, starttime, drug, drug_name_generic, ndc

Values are assumed to already be in schema units.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..resolver import DrugRecord

log = logging.getLogger(__name__)

TABLES = {
    "stays": ("stay_id", "patient_id", "admit_time"),
    "demographics": ("stay_id", "age", "gender", "weight_kg", "height_cm", "admission_type", "ethnicity"),
    "chartevents": ("stay_id", "charttime", "item", "value"),
    "labevents": ("stay_id", "charttime", "item", "value"),
    "outputevents": ("stay_id", "charttime", "value"),
    "ventilation": ("stay_id", "starttime", "endtime"),
    "diagnoses": ("patient_id", "icd9_code", "diagnosis_time"),
    "prescriptions": ("stay_id", "starttime", "drug", "drug_name_generic", "ndc"),
}

URINE = "urine_output"
AKI_CKD_PREFIXES = ("584", "585", "586", "N17", "N18", "N19")


class DataError(ValueError):
    """Input tables are missing, malformed or inconsistent."""


class InsufficientData(ValueError):
    """A stay has neither creatinine nor usable urine-output data."""


@dataclass(frozen=True)
class KdigoConfig:
    scr_abs_increase: float = 0.3
    scr_abs_window_hours: float = 48.0
    scr_rel_increase: float = 1.5
    urine_rate_threshold: float = 0.5
    urine_hours: int = 6
    label_window: float = 72.0

    def __post_init__(self):
        for name in ("scr_abs_increase", "scr_abs_window_hours", "scr_rel_increase",
                     "urine_rate_threshold", "urine_hours", "label_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class StayRecord:
    """One ICU stay; all times are hours relative to ``admit_time``."""

    stay_id: int
    patient_id: int
    admit_time: pd.Timestamp
    age_at_admission: float
    prior_aki_or_ckd: bool = False
    demographics: dict[str, float] = field(default_factory=dict)
    # signal -> array of shape (n, 2) holding (hours, value), sorted by time
    events: dict[str, np.ndarray] = field(default_factory=dict)
    ventilation: list[tuple[float, float]] = field(default_factory=list)
    prescriptions: list[tuple[DrugRecord, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.age_at_admission >= 0:
            raise ValueError(f"stay {self.stay_id}: age must be >= 0")

    def signal(self, name: str) -> np.ndarray:
        return self.events.get(name, np.empty((0, 2)))


def encode_demographics(row) -> dict[str, float]:
    """Numeric demographic fields from one ``demographics.csv`` row."""

    def num(v):
        try:
            x = float(v)
        except (TypeError, ValueError):
            return math.nan
        return x

    def flag(v, positive):
        if v is None or (isinstance(v, float) and math.isnan(v)) or str(v).strip() == "":
            return math.nan
        return 1.0 if str(v).strip().upper().startswith(positive) else 0.0

    return {
        "age": num(row.get("age")),
        "is_male": flag(row.get("gender"), "M"),
        "weight_kg": num(row.get("weight_kg")),
        "height_cm": num(row.get("height_cm")),
        "emergency_admission": flag(row.get("admission_type"), "EMERGENCY"),
        "ethnicity_white": flag(row.get("ethnicity"), "WHITE"),
    }


def _read(bundle: Path, name: str) -> pd.DataFrame:
    path = bundle / f"{name}.csv"
    if not path.exists():
        raise DataError(f"missing table {path}")
    try:
        df = pd.read_csv(path, dtype={"ndc": str, "icd9_code": str, "drug": str,
                                      "drug_name_generic": str, "item": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    missing = [c for c in TABLES[name] if c not in df.columns]
    if missing:
        raise DataError(f"{path} lacks columns {missing}")
    return df


def _hours(df: pd.DataFrame, col: str, admit: pd.Series) -> np.ndarray:
    try:
        t = pd.to_datetime(df[col], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad timestamp in column {col!r}: {exc}") from exc
    return ((t - admit).dt.total_seconds() / 3600.0).to_numpy()


def _group_events(df: pd.DataFrame, hours: np.ndarray, item: np.ndarray, out: dict):
    if len(df) == 0:
        return
    frame = pd.DataFrame({"stay": df["stay_id"].to_numpy(), "item": item, "h": hours,
                          "v": pd.to_numeric(df["value"], errors="coerce").to_numpy()})
    frame = frame[np.isfinite(frame["h"]) & np.isfinite(frame["v"])]
    frame = frame.sort_values(["stay", "item", "h"], kind="stable")
    stay = frame["stay"].to_numpy()
    it = frame["item"].to_numpy()
    arr = frame[["h", "v"]].to_numpy(dtype=float)
    if len(arr) == 0:
        return
    change = np.r_[True, (stay[1:] != stay[:-1]) | (it[1:] != it[:-1])]
    starts = np.flatnonzero(change)
    ends = np.r_[starts[1:], len(arr)]
    for s, e in zip(starts, ends):
        signals = out.setdefault(stay[s], {})
        prev = signals.get(it[s])
        chunk = arr[s:e]
        if prev is not None:
            chunk = np.concatenate([prev, chunk])
            chunk = chunk[np.argsort(chunk[:, 0], kind="stable")]
        signals[it[s]] = chunk


def load_bundle(path, diagnosis_prefixes=AKI_CKD_PREFIXES) -> list[StayRecord]:
    """Read a CSV bundle into stay records ordered by ``stay_id``."""
    bundle = Path(path)
    stays = _read(bundle, "stays")
    if stays["stay_id"].duplicated().any():
        raise DataError("duplicate stay_id in stays.csv")
    try:
        admit_times = pd.to_datetime(stays["admit_time"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad admit_time: {exc}") from exc
    admit_by_stay = pd.Series(admit_times.to_numpy(), index=stays["stay_id"].to_numpy())
    patient_by_stay = dict(zip(stays["stay_id"], stays["patient_id"]))

    def admit_for(df):
        a = admit_by_stay.reindex(df["stay_id"].to_numpy())
        if a.isna().any():
            unknown = df["stay_id"].to_numpy()[a.isna().to_numpy()][:5]
            raise DataError(f"events reference unknown stays {list(unknown)}")
        return pd.Series(a.to_numpy(), index=df.index)

    demo = _read(bundle, "demographics").set_index("stay_id")
    events: dict = {}
    for table in ("chartevents", "labevents"):
        df = _read(bundle, table)
        _group_events(df, _hours(df, "charttime", admit_for(df)), df["item"].astype(str).to_numpy(), events)
    out_df = _read(bundle, "outputevents")
    _group_events(out_df, _hours(out_df, "charttime", admit_for(out_df)),
                  np.full(len(out_df), URINE, dtype=object), events)

    vent_df = _read(bundle, "ventilation")
    vent: dict = {}
    if len(vent_df):
        admit = admit_for(vent_df)
        s = _hours(vent_df, "starttime", admit)
        e = _hours(vent_df, "endtime", admit)
        for sid, a, b in zip(vent_df["stay_id"].to_numpy(), s, e):
            vent.setdefault(sid, []).append((float(a), float(b)))

    diag = _read(bundle, "diagnoses")
    codes = diag["icd9_code"].fillna("").astype(str).str.replace(".", "", regex=False)
    diag = diag[codes.str.startswith(tuple(diagnosis_prefixes))]
    diag_times: dict = {}
    if len(diag):
        dt = pd.to_datetime(diag["diagnosis_time"], format="ISO8601")
        for pid, t in zip(diag["patient_id"].to_numpy(), dt):
            diag_times.setdefault(pid, []).append(t)

    rx_df = _read(bundle, "prescriptions")
    rx: dict = {}
    if len(rx_df):
        hours = _hours(rx_df, "starttime", admit_for(rx_df))
        for sid, h, drug, generic, ndc in zip(
            rx_df["stay_id"].to_numpy(), hours, rx_df["drug"], rx_df["drug_name_generic"], rx_df["ndc"]
        ):
            ident = [None if (isinstance(v, float) and math.isnan(v)) else v for v in (drug, generic, ndc)]
            try:
                rec = DrugRecord(ident[0], ident[1], ident[2], source_stay_id=sid)
            except ValueError:
                log.warning("stay %s: prescription without any identity field skipped", sid)
                continue
            rx.setdefault(sid, []).append((rec, float(h)))

    records = []
    for sid, admit in admit_by_stay.sort_index().items():
        if sid in demo.index:
            fields = encode_demographics(demo.loc[sid].to_dict())
        else:
            fields = encode_demographics({})
        age = fields["age"]
        if not age >= 0:
            raise DataError(f"stay {sid}: age missing or negative")
        pid = patient_by_stay[sid]
        prior = any(t < admit for t in diag_times.get(pid, ()))
        records.append(StayRecord(
            stay_id=sid, patient_id=pid, admit_time=admit, age_at_admission=age,
            prior_aki_or_ckd=prior, demographics=fields, events=events.get(sid, {}),
            ventilation=vent.get(sid, []), prescriptions=rx.get(sid, []),
        ))
    return records
