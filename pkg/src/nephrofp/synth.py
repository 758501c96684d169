"""Synthetic EHR bundles with a planted drug-substructure effect.

Generator
---------
Each stay draws a latent vector ``z ~ N(0, I_k)``. Every vital and lab signal
has a stay-level value ``mean + sd * (L_s . z + sqrt(1 - |L_s|^2) * e_s)`` with
fixed random loadings ``L_s``, observed several times during the first day
with extra measurement noise. Age, weight and height follow the same scheme.

The AKI label is Bernoulli with log-odds

    b0 + sum_j beta_j * std_level_j + log(effect_odds) * [any drug has substructure]

over a sparse set of signals. ``b0`` is solved so the mean probability equals
the prevalence target. Labels are then written into the creatinine
trajectory: positives rise to 1.6 x baseline at an onset in [24, 72) hours,
negatives stay within 5% of baseline. Urine output stays above 1 mL/kg/h so
it never fires on its own.

Extra stays exercise every exclusion rule and are not counted in ``n_stays``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .molgraph import has_substructure, parse_smiles
from .resolver import normalize_name

__all__ = ["SpecError", "SynthSpec", "SynthResult", "generate_synthetic", "DEFAULT_CATALOG"]

FIXTURE_TIMESTAMP = "2000-01-01T00:00:00+00:00"
BASE_ADMIT = pd.Timestamp("2150-01-01T00:00:00")

DEFAULT_CATALOG = (
    ("aspirin", "CC(=O)OC1=CC=CC=C1C(=O)O"),
    ("acetaminophen", "CC(=O)NC1=CC=C(C=C1)O"),
    ("furosemide", "NS(=O)(=O)c1cc(C(=O)O)c(NCc2ccco2)cc1Cl"),
    ("sulfamethoxazole", "Cc1cc(NS(=O)(=O)c2ccc(N)cc2)no1"),
    ("trimethoprim", "COc1cc(Cc2cnc(N)nc2N)cc(OC)c1OC"),
    ("hydrochlorothiazide", "NS(=O)(=O)c1cc2c(cc1Cl)NCNS2(=O)=O"),
    ("metformin", "CN(C)C(=N)N=C(N)N"),
    ("lisinopril", "NCCCC[C@H](N[C@@H](CCc1ccccc1)C(=O)O)C(=O)N1CCC[C@H]1C(=O)O"),
    ("acyclovir", "Nc1nc2n(COCCO)cnc2c(=O)[nH]1"),
    ("ciprofloxacin", "OC(=O)C1=CN(C2CC2)c2cc(N3CCNCC3)c(F)cc2C1=O"),
    ("naproxen", "COc1ccc2cc([C@H](C)C(=O)O)ccc2c1"),
    ("ketorolac", "OC(=O)C1CCn2c1ccc2C(=O)c1ccccc1"),
    ("celecoxib", "Cc1ccc(-c2cc(C(F)(F)F)nn2-c2ccc(S(N)(=O)=O)cc2)cc1"),
    ("acetazolamide", "CC(=O)Nc1nnc(S(N)(=O)=O)s1"),
    ("caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C"),
    ("ondansetron", "Cc1nccn1CC1CCc2c(C1=O)c1ccccc1n2C"),
    ("pantoprazole", "COc1ccnc(CS(=O)c2nc3cc(OC(F)F)ccc3[nH]2)c1OC"),
    ("metoprolol", "CC(C)NCC(O)COc1ccc(CCOC)cc1"),
    ("warfarin", "CC(=O)CC(c1ccccc1)c1c(O)c2ccccc2oc1=O"),
    ("cefazolin", "Cc1nnc(SCC2=C(N3C(=O)C(NC(=O)Cn4cnnn4)[C@H]3SC2)C(=O)O)s1"),
    ("morphine", "CN1CC[C@]23c4c5ccc(O)c4O[C@H]2[C@@H](O)C=C[C@H]3[C@H]1C5"),
    ("allopurinol", "O=c1[nH]cnc2[nH]ncc12"),
    ("sumatriptan", "CNS(=O)(=O)Cc1ccc2[nH]cc(CCN(C)C)c2c1"),
    ("amiodarone", "CCCCc1oc2ccccc2c1C(=O)c1cc(I)c(OCCN(CC)CC)c(I)c1"),
    ("nitrofurantoin", "O=C1CN(/N=C/c2ccc([N+](=O)[O-])o2)C(=O)N1"),
    ("bortezomib", "CC(C)C[C@H](NC(=O)[C@@H](Cc1ccccc1)NC(=O)c1cnccn1)B(O)O"),
    ("fosfomycin", "C[C@@H]1O[C@@H]1P(=O)(O)O"),
    ("potassium chloride", "[K+].[Cl-]"),
)

# signal: (mean, sd, lower clip, upper clip)
VITALS = {
    "heart_rate": (85.0, 15.0, 30.0, 200.0),
    "sbp": (120.0, 18.0, 60.0, 220.0),
    "dbp": (65.0, 12.0, 25.0, 130.0),
    "mbp": (83.0, 12.0, 40.0, 160.0),
    "resp_rate": (18.0, 4.0, 5.0, 50.0),
    "temperature": (37.0, 0.6, 34.0, 41.5),
    "spo2": (97.0, 2.0, 70.0, 100.0),
    "gcs": (13.0, 2.5, 3.0, 15.0),
}
LABS = {
    "bun": (25.0, 12.0, 2.0, 150.0),
    "sodium": (139.0, 4.0, 115.0, 165.0),
    "potassium": (4.1, 0.5, 2.0, 7.5),
    "chloride": (104.0, 5.0, 80.0, 130.0),
    "bicarbonate": (24.0, 4.0, 8.0, 45.0),
    "glucose": (130.0, 40.0, 40.0, 500.0),
    "hemoglobin": (10.5, 2.0, 4.0, 19.0),
    "hematocrit": (31.0, 6.0, 12.0, 58.0),
    "wbc": (11.0, 5.0, 0.5, 60.0),
    "platelets": (220.0, 90.0, 10.0, 900.0),
    "calcium": (8.5, 0.7, 5.0, 12.0),
    "magnesium": (2.0, 0.3, 0.8, 4.0),
    "phosphate": (3.5, 1.0, 0.8, 10.0),
    "anion_gap": (13.0, 3.0, 3.0, 35.0),
    "inr": (1.3, 0.4, 0.8, 6.0),
    "ptt": (32.0, 8.0, 18.0, 120.0),
    "bilirubin": (1.0, 1.0, 0.1, 20.0),
    "albumin": (3.0, 0.6, 1.0, 5.0),
    "lactate": (2.0, 1.2, 0.3, 15.0),
}
DEMOGRAPHIC = {
    "age": (64.0, 16.0, 18.0, 95.0),
    "weight_kg": (80.0, 18.0, 40.0, 180.0),
    "height_cm": (170.0, 10.0, 140.0, 205.0),
}
VITAL_HOURS = (1.0, 5.0, 9.0, 13.0, 17.0, 21.0)
LAB_HOURS = (3.0, 15.0)
CREATININE_HOURS = tuple(2.0 + 6.0 * k for k in range(16))
URINE_HOURS = tuple(range(1, 96, 2))
RISE_FACTOR = 1.6
LATE_ONSET_HOUR = 80.0

DEFAULT_COEFFICIENTS = (
    ("age", 1.0),
    ("bun", 1.0),
    ("heart_rate", 0.7),
    ("sbp", -0.7),
    ("wbc", 0.7),
    ("hemoglobin", -0.5),
)
DEFAULT_MISSINGNESS = (
    ("bilirubin", 0.30),
    ("albumin", 0.30),
    ("lactate", 0.30),
    ("ptt", 0.30),
    ("height_cm", 0.30),
    ("inr", 0.08),
    ("phosphate", 0.06),
    ("magnesium", 0.05),
    ("temperature", 0.04),
)


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_stays: int = 5000
    prevalence: float = 0.25
    effect_odds: float = 3.0
    catalog: tuple[tuple[str, str], ...] = DEFAULT_CATALOG
    substructure: str = "S(=O)(=O)N"
    drugs_per_stay: tuple[int, int] = (1, 3)
    # (signal, weight) pairs; rescaled so the linear term has sd ``signal_scale``
    coefficients: tuple[tuple[str, float], ...] = DEFAULT_COEFFICIENTS
    signal_scale: float = 0.65
    missingness: tuple[tuple[str, float], ...] = DEFAULT_MISSINGNESS
    n_latent: int = 4
    # extra stays per exclusion rule, as a fraction of n_stays
    excluded_fraction: float = 0.02
    # probability that a stay also gets one unresolvable drug
    unresolvable_rate: float = 0.10
    n_unresolvable: int = 3
    seed: int = 42

    def __post_init__(self):
        if self.n_stays < 10:
            raise SpecError("n_stays must be >= 10")
        if not 0 < self.prevalence < 1:
            raise SpecError("prevalence must be in (0, 1)")
        if not self.effect_odds > 0:
            raise SpecError("effect_odds must be > 0")
        lo, hi = self.drugs_per_stay
        if not 1 <= lo <= hi <= len(self.catalog):
            raise SpecError("drugs_per_stay must satisfy 1 <= lo <= hi <= catalog size")
        names = [n for n, _ in self.catalog]
        if len(set(names)) != len(names):
            raise SpecError("catalog names must be unique")
        known = set(VITALS) | set(LABS) | set(DEMOGRAPHIC)
        for sig, _ in self.coefficients:
            if sig not in known:
                raise SpecError(f"unknown coefficient signal {sig!r}")
        for sig, rate in self.missingness:
            if sig not in known or sig in ("age", "weight_kg"):
                raise SpecError(f"missingness not supported for {sig!r}")
            if not 0 <= rate < 1:
                raise SpecError(f"missingness rate for {sig} must be in [0, 1)")
        if not 0 <= self.excluded_fraction < 1 or not 0 <= self.unresolvable_rate <= 1:
            raise SpecError("fractions must be in [0, 1)")
        if self.signal_scale < 0 or self.n_latent < 1:
            raise SpecError("signal_scale >= 0 and n_latent >= 1 required")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        doc = dict(doc)
        for key in ("catalog", "coefficients", "missingness"):
            if key in doc:
                value = doc[key]
                if isinstance(value, dict):
                    value = value.items()
                doc[key] = tuple(tuple(x) for x in value)
        if "drugs_per_stay" in doc:
            doc["drugs_per_stay"] = tuple(doc["drugs_per_stay"])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown synth spec keys {sorted(unknown)}")
        return cls(**doc)


@dataclass
class SynthResult:
    bundle: Path
    compound_fixture: Path
    ndc_fixture: Path
    manifest: Path
    truth: dict = field(repr=False, default_factory=dict)


def _ndc(i: int) -> str:
    return f"{50000 + i:05d}-{1000 + i:04d}-{i % 100:02d}"


def _drug_identities(spec: SynthSpec):
    """Prescription fields per catalog entry; the path cycles by index."""
    rows = []
    for i, (name, _) in enumerate(spec.catalog):
        path = ("generic", "name", "ndc")[i % 3]
        if path == "generic":
            rows.append((f"{name.title()} 20 mg Tab", name, _ndc(i)))
        elif path == "name":
            rows.append((f"{name.title()} 10mg IV", "", _ndc(i)))
        else:
            rows.append((f"RX-{i:03d} 10 mg vial", f"compound {i:03d}", _ndc(i)))
    return rows


def _write_fixtures(spec: SynthSpec, out: Path):
    compounds = [f"# term\tstatus\tvalue\ttimestamp"]
    for name, smiles in spec.catalog:
        compounds.append(f"{normalize_name(name)}\thit\t{smiles}\t{FIXTURE_TIMESTAMP}")
    ndc = ["# ndc\tstatus\tproprietary_name\ttimestamp"]
    for i, (name, _) in enumerate(spec.catalog):
        digits = _ndc(i).replace("-", "")
        ndc.append(f"{digits}\thit\t{name.upper()}\t{FIXTURE_TIMESTAMP}")
    (out / "compounds.tsv").write_text("\n".join(compounds) + "\n")
    (out / "ndc.tsv").write_text("\n".join(ndc) + "\n")
    return out / "compounds.tsv", out / "ndc.tsv"


def _solve_intercept(linear: np.ndarray, prevalence: float) -> float:
    def gap(b):
        return float(np.mean(1.0 / (1.0 + np.exp(-(b + linear))))) - prevalence

    return float(brentq(gap, -30.0, 30.0, xtol=1e-12))


def _timestamps(admit_idx: np.ndarray, hours: np.ndarray, admits: pd.DatetimeIndex) -> np.ndarray:
    minutes = np.rint(np.asarray(hours, dtype=float) * 60.0).astype(np.int64)
    t = admits[admit_idx] + pd.to_timedelta(minutes, unit="min")
    return np.asarray(t.strftime("%Y-%m-%dT%H:%M:%S"))


def generate_synthetic(spec: SynthSpec, out_dir) -> SynthResult:
    """Write ``bundle/*.csv``, ``compounds.tsv``, ``ndc.tsv`` and ``manifest.json``.

    Output is byte-identical for a fixed spec.
    """
    out = Path(out_dir)
    bundle = out / "bundle"
    bundle.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    pattern = parse_smiles(spec.substructure)
    flagged = np.array([has_substructure(parse_smiles(s), pattern) for _, s in spec.catalog])
    identities = _drug_identities(spec)

    n_extra = int(round(spec.excluded_fraction * spec.n_stays))
    kinds = (["cohort"] * spec.n_stays + ["prior_aki_or_ckd"] * n_extra + ["under_18"] * n_extra
             + ["aki_after_window"] * n_extra + ["insufficient_data"] * n_extra
             + ["no_first_day_prescription"] * n_extra)
    kinds = np.array(kinds)
    n = len(kinds)
    stay_ids = np.arange(200001, 200001 + n)
    patient_ids = np.arange(10001, 10001 + n)
    admits = pd.DatetimeIndex(BASE_ADMIT + pd.to_timedelta(np.arange(n) * 7, unit="h"))

    # latent-driven stay-level values
    signals = {**DEMOGRAPHIC, **VITALS, **LABS}
    z = rng.standard_normal((n, spec.n_latent))
    std_level = {}
    loadings = {}
    for sig in signals:
        raw = rng.standard_normal(spec.n_latent)
        strength = rng.uniform(0.3, 0.7)
        load = strength * raw / np.linalg.norm(raw)
        loadings[sig] = load
        std_level[sig] = z @ load + math.sqrt(1.0 - strength ** 2) * rng.standard_normal(n)
    level = {s: np.clip(signals[s][0] + signals[s][1] * std_level[s], signals[s][2], signals[s][3])
             for s in signals}
    level["age"] = np.where(kinds == "under_18", rng.uniform(15.0, 17.9, n), level["age"])

    # prescriptions
    lo, hi = spec.drugs_per_stay
    n_drugs = rng.integers(lo, hi + 1, n)
    assigned = [rng.choice(len(spec.catalog), size=k, replace=False) for k in n_drugs]
    exposed = np.array([bool(flagged[a].any()) for a in assigned])
    extra_unresolvable = rng.random(n) < spec.unresolvable_rate
    which_unresolvable = rng.integers(0, max(1, spec.n_unresolvable), n)

    # labels
    weights = np.array([w for _, w in spec.coefficients], dtype=float)
    X_lab = np.column_stack([std_level[s] for s, _ in spec.coefficients]) if len(weights) else np.zeros((n, 0))
    cohort = kinds == "cohort"
    lin_raw = X_lab @ weights
    sd = lin_raw[cohort].std()
    beta = weights * (spec.signal_scale / sd if sd > 0 else 0.0)
    log_effect = math.log(spec.effect_odds)
    linear = X_lab @ beta + log_effect * exposed
    b0 = _solve_intercept(linear[cohort], spec.prevalence)
    prob = 1.0 / (1.0 + np.exp(-(b0 + linear)))
    labels = (rng.random(n) < prob).astype(np.int64)
    labels[kinds == "aki_after_window"] = 0
    onset = np.where(labels == 1, rng.integers(24, 72, n).astype(float), np.nan)
    onset[kinds == "aki_after_window"] = LATE_ONSET_HOUR

    # missingness decided per stay and signal
    missing = {sig: rng.random(n) < rate for sig, rate in spec.missingness}

    # tables
    sex = rng.random(n) < 0.55
    emergency = rng.random(n) < 0.7
    white = rng.random(n) < 0.7
    height = np.round(level["height_cm"], 1).astype(object)
    if "height_cm" in missing:
        height[missing["height_cm"]] = ""
    pd.DataFrame({"stay_id": stay_ids, "patient_id": patient_ids,
                  "admit_time": np.asarray(admits.strftime("%Y-%m-%dT%H:%M:%S"))}).to_csv(
        bundle / "stays.csv", index=False, lineterminator="\n")
    pd.DataFrame({
        "stay_id": stay_ids,
        "age": np.round(level["age"], 1),
        "gender": np.where(sex, "M", "F"),
        "weight_kg": np.round(level["weight_kg"], 1),
        "height_cm": height,
        "admission_type": np.where(emergency, "EMERGENCY", "ELECTIVE"),
        "ethnicity": np.where(white, "WHITE", "OTHER"),
    }).to_csv(bundle / "demographics.csv", index=False, lineterminator="\n")

    def events(table_signals, hours, noise_frac):
        parts = []
        for sig in table_signals:
            mean, sdv, lo_c, hi_c = signals[sig]
            keep = ~missing.get(sig, np.zeros(n, bool))
            idx = np.repeat(np.flatnonzero(keep), len(hours))
            h = np.tile(hours, int(keep.sum()))
            v = np.clip(level[sig][idx] + noise_frac * sdv * rng.standard_normal(len(idx)), lo_c, hi_c)
            parts.append(pd.DataFrame({"stay_id": stay_ids[idx], "charttime": _timestamps(idx, h, admits),
                                       "item": sig, "value": np.round(v, 2)}))
        return pd.concat(parts, ignore_index=True)

    events(VITALS, np.array(VITAL_HOURS), 0.3).to_csv(
        bundle / "chartevents.csv", index=False, lineterminator="\n")

    # creatinine: baseline with 5% noise, then a rise at onset
    c0 = np.clip(1.0 + 0.35 * rng.standard_normal(n), 0.5, 2.5)
    ch = np.array(CREATININE_HOURS)
    has_labs = kinds != "insufficient_data"
    rows_idx, rows_h, rows_v = [], [], []
    for i in np.flatnonzero(has_labs):
        h = ch
        if not np.isnan(onset[i]):
            h = np.unique(np.append(ch, onset[i]))
        v = c0[i] * (1.0 + rng.uniform(-0.05, 0.05, len(h)))
        if not np.isnan(onset[i]):
            v = np.where(h >= onset[i], RISE_FACTOR * c0[i], v)
        rows_idx.append(np.full(len(h), i))
        rows_h.append(h)
        rows_v.append(v)
    ci, chh, cv = np.concatenate(rows_idx), np.concatenate(rows_h), np.concatenate(rows_v)
    creat = pd.DataFrame({"stay_id": stay_ids[ci], "charttime": _timestamps(ci, chh, admits),
                          "item": "creatinine", "value": np.round(cv, 3)})
    labs = events(LABS, np.array(LAB_HOURS), 0.2)
    labs = labs[np.isin(labs["stay_id"].to_numpy(), stay_ids[has_labs])]
    pd.concat([creat, labs], ignore_index=True).to_csv(
        bundle / "labevents.csv", index=False, lineterminator="\n")

    # urine: every other hour, volume for two hours at >= 1 mL/kg/h
    uh = np.array(URINE_HOURS, dtype=float)
    ui = np.repeat(np.flatnonzero(has_labs), len(uh))
    uhh = np.tile(uh, int(has_labs.sum()))
    rate = rng.uniform(1.0, 2.0, n)[ui] * rng.uniform(1.0, 1.2, len(ui))
    vol = np.round(2.0 * level["weight_kg"][ui] * rate, 1)
    pd.DataFrame({"stay_id": stay_ids[ui], "charttime": _timestamps(ui, uhh, admits),
                  "value": vol}).to_csv(bundle / "outputevents.csv", index=False, lineterminator="\n")

    vent = rng.random(n) < 0.3
    vi = np.flatnonzero(vent)
    vs = rng.uniform(0.0, 20.0, len(vi))
    ve = vs + rng.uniform(4.0, 48.0, len(vi))
    pd.DataFrame({"stay_id": stay_ids[vi], "starttime": _timestamps(vi, vs, admits),
                  "endtime": _timestamps(vi, ve, admits)}).to_csv(
        bundle / "ventilation.csv", index=False, lineterminator="\n")

    prior = np.flatnonzero(kinds == "prior_aki_or_ckd")
    noise_dx = np.flatnonzero(rng.random(n) < 0.1)
    dx_idx = np.concatenate([prior, noise_dx])
    dx_codes = ["5859"] * len(prior) + ["4019"] * len(noise_dx)
    pd.DataFrame({"patient_id": patient_ids[dx_idx], "icd9_code": dx_codes,
                  "diagnosis_time": _timestamps(dx_idx, np.full(len(dx_idx), -24.0 * 365), admits)}).to_csv(
        bundle / "diagnoses.csv", index=False, lineterminator="\n")

    rx = []
    for i in range(n):
        start = 30.0 if kinds[i] == "no_first_day_prescription" else None
        for d in assigned[i]:
            h = start if start is not None else float(rng.integers(0, 24 * 60)) / 60.0
            rx.append((i, h, *identities[d]))
        if extra_unresolvable[i]:
            k = int(which_unresolvable[i])
            h = start if start is not None else float(rng.integers(0, 24 * 60)) / 60.0
            rx.append((i, h, f"Investigational Agent {k} 5 mg", f"investigational agent {k}", ""))
    rx_idx = np.array([r[0] for r in rx])
    pd.DataFrame({
        "stay_id": stay_ids[rx_idx],
        "starttime": _timestamps(rx_idx, np.array([r[1] for r in rx]), admits),
        "drug": [r[2] for r in rx],
        "drug_name_generic": [r[3] for r in rx],
        "ndc": [r[4] for r in rx],
    }).to_csv(bundle / "prescriptions.csv", index=False, lineterminator="\n")

    compound_path, ndc_path = _write_fixtures(spec, out)

    realized = labels[cohort]
    truth = {
        "spec": {k: v for k, v in asdict(spec).items()},
        "intercept": b0,
        "coefficients": {s: float(b) for (s, _), b in zip(spec.coefficients, beta)},
        "log_effect": log_effect,
        "loadings": {s: [float(x) for x in v] for s, v in loadings.items()},
        "catalog": [
            {"name": name, "smiles": smiles, "has_substructure": bool(f), "path": ("generic", "name", "ndc")[i % 3]}
            for i, ((name, smiles), f) in enumerate(zip(spec.catalog, flagged))
        ],
        "cohort_size": int(cohort.sum()),
        "extra_stays": {k: n_extra for k in ("prior_aki_or_ckd", "under_18", "aki_after_window",
                                             "insufficient_data", "no_first_day_prescription")},
        "realized_prevalence": float(realized.mean()),
        "exposed_fraction": float(exposed[cohort].mean()),
        "stays": {
            "stay_id": [int(x) for x in stay_ids],
            "kind": [str(k) for k in kinds],
            "label": [int(x) for x in labels],
            "exposed": [bool(x) for x in exposed],
            "true_logit": [float(x) for x in b0 + linear],
            "baseline_logit": [float(x) for x in b0 + X_lab @ beta],
        },
        "files": {},
    }
    for path in sorted(bundle.glob("*.csv")) + [compound_path, ndc_path]:
        truth["files"][str(path.relative_to(out))] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n")
    return SynthResult(bundle, compound_path, ndc_path, manifest, truth)
