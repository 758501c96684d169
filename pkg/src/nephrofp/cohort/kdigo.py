"""KDIGO stage-1 AKI labelling from creatinine and urine output."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .records import URINE, InsufficientData, KdigoConfig, StayRecord

_EPS = 1e-9


@dataclass(frozen=True)
class AkiOutcome:
    label: int
    # earliest qualifying time in hours, over the whole stay (None if never)
    onset: float | None


def creatinine_onset(series: np.ndarray, cfg: KdigoConfig) -> float | None:
    """Earliest time creatinine rises by the absolute or relative criterion.

    Baseline for the relative rule is the first in-stay measurement.
    """
    s = series[series[:, 0] >= 0]
    if len(s) == 0:
        return None
    t, c = s[:, 0], s[:, 1]
    first = c[0]
    for j in range(len(c)):
        if c[j] >= cfg.scr_rel_increase * first - _EPS:
            if j > 0:
                return float(t[j])
        for i in range(j):
            if t[j] - t[i] <= cfg.scr_abs_window_hours + _EPS and c[j] - c[i] >= cfg.scr_abs_increase - _EPS:
                return float(t[j])
    return None


def urine_onset(series: np.ndarray, weight_kg: float, cfg: KdigoConfig) -> float | None:
    """End of the first window of ``urine_hours`` hourly buckets whose mean
    output falls below the rate threshold (mL/kg/h).

    Each event's volume is attributed to the hour bucket of its chart time;
    windows must lie inside the charted span ``[0, last event hour]``.
    """
    s = series[series[:, 0] >= 0]
    if len(s) == 0 or not weight_kg > 0:
        return None
    n_hours = int(math.floor(s[:, 0].max())) + 1
    buckets = np.zeros(n_hours)
    np.add.at(buckets, np.floor(s[:, 0]).astype(int), s[:, 1])
    w = cfg.urine_hours
    if n_hours < w:
        return None
    window_sums = np.convolve(buckets, np.ones(w), mode="valid")
    rates = window_sums / (weight_kg * w)
    low = np.flatnonzero(rates < cfg.urine_rate_threshold)
    return float(low[0] + w) if len(low) else None


def label_aki(stay: StayRecord, cfg: KdigoConfig = KdigoConfig()) -> AkiOutcome:
    """Label 1 iff the earliest KDIGO onset falls within ``cfg.label_window``.

    Raises :class:`InsufficientData` when the stay has no in-stay creatinine
    and no urine output with a recorded weight.
    """
    scr = stay.signal("creatinine")
    uo = stay.signal(URINE)
    weight = stay.demographics.get("weight_kg", math.nan)
    has_scr = bool(len(scr) and (scr[:, 0] >= 0).any())
    has_uo = bool(len(uo) and (uo[:, 0] >= 0).any() and weight > 0)
    if not (has_scr or has_uo):
        raise InsufficientData(f"stay {stay.stay_id}: no creatinine and no urine output")
    onsets = [
        o for o in (
            creatinine_onset(scr, cfg) if has_scr else None,
            urine_onset(uo, weight, cfg) if has_uo else None,
        ) if o is not None
    ]
    onset = min(onsets) if onsets else None
    label = int(onset is not None and onset <= cfg.label_window)
    return AkiOutcome(label, onset)
