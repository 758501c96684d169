"""Pipeline stages and the paired baseline/multimodal experiment.

Every stage reads its inputs from and writes its outputs to one working
directory, so the CLI subcommands and :func:`run_experiment` share a single
code path. Files in the working directory:

``synthetic/``                  generated bundle and fixtures (synthetic mode)
``features.csv`` + manifest     raw first-day cohort features, funnel in manifest
``first_day_drugs.csv``         stay_id, drug, drug_name_generic, ndc
``resolutions.csv``             one row per first-day drug with status and SMILES
``fingerprints.csv``            stay_id, space-separated on-bit indices
``imputed.*``                   imputed cohort features and provenance
``split.json``                  train/test stay ids
``models/<arm>.nfpm``           trained models
``report.txt`` / ``report.json`` the paired evaluation
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .cohort import (
    DataError,
    FeatureSchema,
    KdigoConfig,
    apply_exclusions,
    build_feature_matrix,
    filter_first_day_prescription,
    first_day_drugs,
    load_bundle,
    read_feature_matrix,
    write_feature_matrix,
)
from .fingerprint import DEFAULT_RADIUS, DEFAULT_WIDTH, aggregate_counts, aggregate_stay_fingerprint, ecfp
from .impute import ImputeConfig, ImputedMatrix, drop_high_missing, mice, read_imputed, write_imputed
from .metrics import EvalReport, evaluate
from .model import (
    Dataset,
    ForestParams,
    GbdtParams,
    load_model,
    predict_proba,
    save_model,
    train_gbdt,
    train_random_forest,
)
from .molgraph import parse_smiles
from .resolver import DrugRecord, ResolverCache, ResolverConfig, build_lookups, resolve_batch
from .synth import SynthSpec, generate_synthetic

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

ARMS = ("baseline", "multimodal")
EXCLUSION_ORDER = ("prior_aki_or_ckd", "under_18", "aki_after_window", "insufficient_data")
AGGREGATIONS = ("or", "sum-clipped")


class ConfigError(ValueError):
    pass


@dataclass
class FingerprintConfig:
    radius: int = DEFAULT_RADIUS
    width: int = DEFAULT_WIDTH
    aggregation: str = "or"


@dataclass
class SplitConfig:
    train_fraction: float = 0.8
    stratified: bool = True
    seed: int = 42


@dataclass
class LearnerConfig:
    kind: str = "gbdt"
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    random_forest: ForestParams = field(default_factory=ForestParams)

    def train(self, data: Dataset):
        if self.kind == "gbdt":
            return train_gbdt(data, self.gbdt)
        return train_random_forest(data, self.random_forest)

    def params(self) -> dict:
        return asdict(self.gbdt if self.kind == "gbdt" else self.random_forest)


@dataclass
class ExperimentConfig:
    bundle: Path | None = None
    synthetic: SynthSpec | None = None
    schema: Path | None = None
    kdigo: KdigoConfig = field(default_factory=KdigoConfig)
    resolver: ResolverConfig = field(default_factory=ResolverConfig)
    fingerprint: FingerprintConfig = field(default_factory=FingerprintConfig)
    impute: ImputeConfig = field(default_factory=ImputeConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    f1_threshold: float = 0.5
    out_dir: Path = Path("runs/default")

    def validate(self) -> "ExperimentConfig":
        if (self.bundle is None) == (self.synthetic is None):
            raise ConfigError("exactly one of data.bundle and data.synthetic is required")
        if self.bundle is not None and not Path(self.bundle).is_dir():
            raise ConfigError(f"bundle directory {self.bundle} does not exist")
        if self.schema is not None and not Path(self.schema).is_file():
            raise ConfigError(f"schema file {self.schema} does not exist")
        if not 0 < self.split.train_fraction < 1:
            raise ConfigError("split.train_fraction must be in (0, 1)")
        if self.learner.kind not in ("gbdt", "random_forest"):
            raise ConfigError(f"learner.kind must be gbdt or random_forest, got {self.learner.kind!r}")
        if self.fingerprint.aggregation not in AGGREGATIONS:
            raise ConfigError(f"fingerprint.aggregation must be one of {AGGREGATIONS}")
        if self.fingerprint.radius < 0:
            raise ConfigError("fingerprint.radius must be >= 0")
        w = self.fingerprint.width
        if w < 2 or w & (w - 1):
            raise ConfigError("fingerprint.width must be a power of two >= 2")
        if not 0 <= self.f1_threshold <= 1:
            raise ConfigError("f1_threshold must be in [0, 1]")
        if self.synthetic is None:
            for name in ("compound_fixture", "ndc_fixture"):
                p = getattr(self.resolver, name)
                if p is not None and not Path(p).is_file():
                    raise ConfigError(f"resolver.{name} {p} does not exist")
            try:
                self.resolver.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return self

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same config with the split, learner and synthetic seeds set to ``seed``."""
        return replace(
            self,
            synthetic=replace(self.synthetic, seed=seed) if self.synthetic else None,
            split=replace(self.split, seed=seed),
            learner=LearnerConfig(self.learner.kind, replace(self.learner.gbdt, seed=seed),
                                  replace(self.learner.random_forest, seed=seed)),
        )


def _section(doc: dict, key: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return dict(value)


def _build(cls, values: dict, where: str):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def config_from_dict(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Build a config from the parsed TOML document; see ``configs/example.toml``."""

    def path(v):
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else base_dir / p

    data = _section(doc, "data")
    synthetic = None
    if "synthetic" in data:
        try:
            synthetic = SynthSpec.from_dict(data.pop("synthetic"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[data.synthetic]: {exc}") from exc
    bundle = path(data.pop("bundle", None))
    schema = path(data.pop("schema", None))
    if data:
        raise ConfigError(f"[data]: unknown keys {sorted(data)}")

    res = _section(doc, "resolver")
    for k in ("compound_fixture", "ndc_fixture", "cache"):
        if k in res:
            res[k] = path(res[k])
    learner = _section(doc, "learner")
    gbdt = _build(GbdtParams, learner.pop("gbdt", {}), "learner.gbdt")
    forest = _build(ForestParams, learner.pop("random_forest", {}), "learner.random_forest")
    kind = learner.pop("kind", "gbdt")
    if learner:
        raise ConfigError(f"[learner]: unknown keys {sorted(learner)}")
    evaluate_sec = _section(doc, "evaluate")
    output = _section(doc, "output")
    unknown = set(doc) - {"data", "kdigo", "resolver", "fingerprint", "impute", "learner", "split",
                          "evaluate", "output"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    return ExperimentConfig(
        bundle=bundle,
        synthetic=synthetic,
        schema=schema,
        kdigo=_build(KdigoConfig, _section(doc, "kdigo"), "kdigo"),
        resolver=_build(ResolverConfig, res, "resolver"),
        fingerprint=_build(FingerprintConfig, _section(doc, "fingerprint"), "fingerprint"),
        impute=_build(ImputeConfig, _section(doc, "impute"), "impute"),
        learner=LearnerConfig(kind, gbdt, forest),
        split=_build(SplitConfig, _section(doc, "split"), "split"),
        f1_threshold=float(evaluate_sec.get("f1_threshold", 0.5)),
        out_dir=path(output.get("dir", "runs/default")),
    )


def load_config(path, environ=None) -> ExperimentConfig:
    """Read a TOML config; ``NEPHROFP_*`` environment variables override it."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = config_from_dict(doc, path.parent)
    environ = os.environ if environ is None else environ
    try:
        cfg.resolver.with_env(environ)
        if "NEPHROFP_OUT_DIR" in environ:
            cfg.out_dir = Path(environ["NEPHROFP_OUT_DIR"])
        if "NEPHROFP_SEED" in environ:
            cfg = cfg.with_seed(int(environ["NEPHROFP_SEED"]))
    except ValueError as exc:
        raise ConfigError(f"bad environment override: {exc}") from exc
    return cfg


# stages


def _sha(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if isinstance(a, (dict, list, str)):
            h.update(json.dumps(a, sort_keys=True).encode())
        else:
            a = np.ascontiguousarray(a)
            h.update(str(a.dtype).encode() + str(a.shape).encode())
            h.update(a.tobytes())
    return h.hexdigest()


def prepare_inputs(cfg: ExperimentConfig) -> ExperimentConfig:
    """Generate the synthetic bundle when configured and point the config at it."""
    if cfg.synthetic is None:
        return cfg
    out = Path(cfg.out_dir) / "synthetic"
    res = generate_synthetic(cfg.synthetic, out)
    resolver = replace(cfg.resolver, mode="offline", compound_fixture=res.compound_fixture,
                       ndc_fixture=res.ndc_fixture)
    return replace(cfg, bundle=res.bundle, synthetic=None, resolver=resolver)


def stage_featurize(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stays = load_bundle(cfg.bundle)
    excl = apply_exclusions(stays, cfg.kdigo)
    kept, rx = filter_first_day_prescription(excl.included)
    funnel = {
        "stays_in": len(stays),
        "excluded": excl.counts,
        "after_exclusions": len(excl.included),
        "after_prescription_filter": rx["with_first_day_prescription"],
    }
    labels = {sid: o.label for sid, o in excl.outcomes.items()}
    fm = build_feature_matrix(kept, labels, FeatureSchema.load(cfg.schema))
    write_feature_matrix(fm, out / "features.csv", out / "features.manifest.json", funnel=funnel)
    drugs = [(s.stay_id, r.drug_name, r.generic_name, r.ndc) for s in kept for r in first_day_drugs(s)]
    pd.DataFrame(drugs, columns=["stay_id", "drug", "drug_name_generic", "ndc"]).to_csv(
        out / "first_day_drugs.csv", index=False, lineterminator="\n")
    return funnel


def _read_drugs(out: Path) -> list[DrugRecord]:
    df = pd.read_csv(out / "first_day_drugs.csv", dtype=str, keep_default_na=False)
    return [DrugRecord(d or None, g or None, n or None, source_stay_id=int(s))
            for s, d, g, n in zip(df["stay_id"], df["drug"], df["drug_name_generic"], df["ndc"])]


def stage_resolve(cfg: ExperimentConfig) -> dict:
    """Resolve first-day drugs and write per-stay fingerprints."""
    out = Path(cfg.out_dir)
    if not (out / "first_day_drugs.csv").exists():
        raise DataError(f"{out / 'first_day_drugs.csv'} missing; run featurize first")
    records = _read_drugs(out)
    compound, ndc = build_lookups(cfg.resolver)
    cache = ResolverCache(cfg.resolver.cache)
    batch = resolve_batch(records, compound, ndc, cache, parallelism=cfg.resolver.parallelism)
    pd.DataFrame({
        "stay_id": [r.source_stay_id for r in records],
        "drug": [r.drug_name or "" for r in records],
        "drug_name_generic": [r.generic_name or "" for r in records],
        "ndc": [r.ndc or "" for r in records],
        "status": [x.status.value for x in batch.resolutions],
        "queried_term": [x.queried_term or "" for x in batch.resolutions],
        "smiles": [x.smiles or "" for x in batch.resolutions],
    }).to_csv(out / "resolutions.csv", index=False, lineterminator="\n")

    stay_ids = read_feature_matrix(out / "features.csv", out / "features.manifest.json").stay_ids
    fp_cfg = cfg.fingerprint
    per_smiles: dict[str, object] = {}
    by_stay: dict[int, list] = {int(s): [] for s in stay_ids}
    for rec, res in zip(records, batch.resolutions):
        if not res.status.resolved:
            continue
        fp = per_smiles.get(res.smiles)
        if fp is None:
            fp = per_smiles[res.smiles] = ecfp(parse_smiles(res.smiles), fp_cfg.radius, fp_cfg.width)
        by_stay.setdefault(int(rec.source_stay_id), []).append(fp)
    lines = []
    all_unresolved = 0
    for sid in stay_ids:
        fps = by_stay.get(int(sid), [])
        if not fps:
            all_unresolved += 1
        if fp_cfg.aggregation == "or":
            vec = aggregate_stay_fingerprint(fps, fp_cfg.width).bits.astype(np.int64)
        else:
            vec = aggregate_counts(fps, width=fp_cfg.width)
        on = np.flatnonzero(vec)
        lines.append(f"{int(sid)},{' '.join(f'{j}:{int(vec[j])}' for j in on)}")
    (out / "fingerprints.csv").write_text(
        f"# width={fp_cfg.width} radius={fp_cfg.radius} aggregation={fp_cfg.aggregation}\n"
        "stay_id,bits\n" + "\n".join(lines) + "\n")
    if all_unresolved:
        log.info("%d stays have no resolved first-day drug; their fingerprint is all zero", all_unresolved)
    summary = {
        "drugs": len(records),
        "unique_records": batch.unique_records,
        "status_counts": batch.counts(),
        "upstream_calls": batch.upstream_calls,
        "cache_hits": batch.cache_hits,
        "stays_with_resolved_drug": len(stay_ids) - all_unresolved,
        "stays_all_unresolved": all_unresolved,
    }
    (out / "resolve_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def read_fingerprints(path, stay_ids) -> tuple[np.ndarray, int]:
    """Dense ``(len(stay_ids), width)`` matrix in ``stay_ids`` order."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
    try:
        width = int(dict(kv.split("=") for kv in header[1:].split())["width"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad header line") from exc
    df = pd.read_csv(path, comment="#", dtype={"bits": str}, keep_default_na=False)
    rows = {int(s): b for s, b in zip(df["stay_id"], df["bits"])}
    X = np.zeros((len(stay_ids), width))
    for i, sid in enumerate(stay_ids):
        if int(sid) not in rows:
            raise DataError(f"{path}: no fingerprint for stay {sid}")
        for tok in rows[int(sid)].split():
            j, v = tok.split(":")
            X[i, int(j)] = float(v)
    return X, width


def stage_impute(cfg: ExperimentConfig) -> ImputedMatrix:
    out = Path(cfg.out_dir)
    fm = read_feature_matrix(out / "features.csv", out / "features.manifest.json")
    kept, report = drop_high_missing(fm, cfg.impute)
    im = mice(kept, cfg.impute)
    im.dropped_columns = report.dropped
    write_imputed(im, out)
    return im


def stratified_split(labels: np.ndarray, train_fraction: float, seed: int, stratified: bool = True):
    """Sorted ``(train, test)`` row indices."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    groups = [np.flatnonzero(labels == c) for c in (0, 1)] if stratified else [np.arange(len(labels))]
    train = []
    for g in groups:
        perm = rng.permutation(g)
        train.append(perm[: int(round(train_fraction * len(g)))])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(len(labels)), train)
    if len(train) == 0 or len(test) == 0:
        raise DataError("split leaves an empty train or test set")
    return train, test


def _design(cfg: ExperimentConfig, arm: str):
    out = Path(cfg.out_dir)
    im = read_imputed(out)
    fm = im.matrix
    X, names, binary = fm.values, list(fm.columns), ()
    if arm == "multimodal":
        F, width = read_fingerprints(out / "fingerprints.csv", fm.stay_ids)
        d = X.shape[1]
        X = np.hstack([X, F])
        names += [f"ecfp_{j}" for j in range(width)]
        if cfg.fingerprint.aggregation == "or":
            binary = tuple(range(d, d + width))
    return fm, X, names, binary


def stage_train(cfg: ExperimentConfig, arms=ARMS) -> dict:
    out = Path(cfg.out_dir)
    im = read_imputed(out)
    train, test = stratified_split(im.matrix.labels, cfg.split.train_fraction, cfg.split.seed,
                                   cfg.split.stratified)
    ids = im.matrix.stay_ids
    (out / "split.json").write_text(json.dumps({
        "seed": cfg.split.seed,
        "train_fraction": cfg.split.train_fraction,
        "train": [int(x) for x in ids[train]],
        "test": [int(x) for x in ids[test]],
    }, sort_keys=True) + "\n")
    (out / "models").mkdir(exist_ok=True)
    hashes = {}
    for arm in arms:
        fm, X, names, binary = _design(cfg, arm)
        data = Dataset(X[train], fm.labels[train], names, binary)
        model = cfg.learner.train(data)
        save_model(model, out / "models" / f"{arm}.nfpm")
        d = fm.values.shape[1]
        hashes[arm] = {
            "cohort_features": _sha(X[:, :d]),
            "labels": _sha(fm.labels),
            "train_rows": _sha(train),
            "test_rows": _sha(test),
            "learner_params": _sha(cfg.learner.params()),
        }
        if arm == "multimodal":
            hashes[arm]["fingerprints"] = _sha(X[:, d:])
    (out / "train_hashes.json").write_text(json.dumps(hashes, indent=2, sort_keys=True) + "\n")
    return hashes


def stage_evaluate(cfg: ExperimentConfig, arms=ARMS) -> dict[str, EvalReport]:
    out = Path(cfg.out_dir)
    split = json.loads((out / "split.json").read_text())
    reports = {}
    for arm in arms:
        fm, X, _, _ = _design(cfg, arm)
        pos = {int(s): i for i, s in enumerate(fm.stay_ids)}
        test = np.array([pos[s] for s in split["test"]])
        model = load_model(out / "models" / f"{arm}.nfpm")
        scores = predict_proba(model, X[test])
        reports[arm] = evaluate(scores, fm.labels[test], cfg.f1_threshold)
        reports[arm].write(out / f"eval_{arm}")
    return reports


ROW_LABELS = {"baseline": "baseline (cohort features)", "multimodal": "multimodal (cohort + ECFP)"}


def render_report(cfg: ExperimentConfig, reports: dict, funnel: dict, resolve: dict, hashes: dict,
                  dropped: list) -> tuple[str, dict]:
    delta = {m: getattr(reports["multimodal"], m) - getattr(reports["baseline"], m)
             for m in ("auroc", "auprc", "f1")}
    lines = [
        f"# nephrofp {__version__} paired experiment",
        f"# learner: {cfg.learner.kind}, identical params and seed for both arms",
        f"# split: {'stratified ' if cfg.split.stratified else ''}"
        f"{cfg.split.train_fraction:.0%} train, seed {cfg.split.seed}",
        f"# fingerprints: radius {cfg.fingerprint.radius}, width {cfg.fingerprint.width}, "
        f"aggregation {cfg.fingerprint.aggregation}; appended after imputation (never imputed)",
        "",
        f"{'features':<30}{'AUROC':>8}{'AUPRC':>8}{'F1':>8}",
    ]
    for arm in ARMS:
        r = reports[arm]
        lines.append(f"{ROW_LABELS[arm]:<30}{r.auroc:>8.3f}{r.auprc:>8.3f}{r.f1:>8.3f}")
    lines.append(f"{'delta':<30}{delta['auroc']:>+8.3f}{delta['auprc']:>+8.3f}{delta['f1']:>+8.3f}")
    r = reports["baseline"]
    lines += [
        f"test rows: {r.n_pos + r.n_neg} ({r.n_pos} AKI), F1 threshold {r.threshold}",
        "",
        "cohort funnel",
        f"  stays in                      {funnel['stays_in']}",
        *[f"  excluded: {k:<20}{funnel['excluded'][k]}" for k in EXCLUSION_ORDER],
        f"  after exclusions              {funnel['after_exclusions']}",
        f"  after prescription filter     {funnel['after_prescription_filter']}",
        f"  with a resolved drug          {resolve['stays_with_resolved_drug']}",
        f"  all drugs unresolved (kept)   {resolve['stays_all_unresolved']}",
        "",
        "drug resolution",
        *[f"  {k:<28}{v}" for k, v in resolve["status_counts"].items()],
        f"dropped columns (> {cfg.impute.drop_threshold:.0%} missing): "
        + (", ".join(n for n, _ in dropped) or "none"),
        "",
        "shared intermediates equal across arms: "
        + str(all(hashes["baseline"][k] == hashes["multimodal"][k] for k in hashes["baseline"])),
    ]
    doc = {
        "version": __version__,
        "learner": cfg.learner.kind,
        "learner_params": cfg.learner.params(),
        "split": asdict(cfg.split),
        "fingerprint": asdict(cfg.fingerprint),
        "reports": {arm: reports[arm].to_dict() for arm in ARMS},
        "delta": delta,
        "funnel": {**funnel, "with_resolved_drug": resolve["stays_with_resolved_drug"],
                   "all_drugs_unresolved": resolve["stays_all_unresolved"]},
        "resolution": resolve["status_counts"],
        "dropped_columns": [{"name": n, "missing_fraction": f} for n, f in dropped],
        "hashes": hashes,
    }
    return "\n".join(lines) + "\n", doc


@dataclass
class ExperimentResult:
    baseline: EvalReport
    multimodal: EvalReport
    delta: dict
    report_text: str
    report: dict
    out_dir: Path


def stage_report(cfg: ExperimentConfig, reports: dict | None = None) -> ExperimentResult:
    out = Path(cfg.out_dir)
    if reports is None:
        reports = {arm: EvalReport.read(out / f"eval_{arm}") for arm in ARMS}
    funnel = json.loads((out / "features.manifest.json").read_text())["funnel"]
    resolve = json.loads((out / "resolve_summary.json").read_text())
    # call counts depend on cache warmth, so they stay out of the report
    resolve = {k: v for k, v in resolve.items() if k not in ("upstream_calls", "cache_hits")}
    hashes = json.loads((out / "train_hashes.json").read_text())
    dropped = read_imputed(out).dropped_columns
    text, doc = render_report(cfg, reports, funnel, resolve, hashes, dropped)
    (out / "report.txt").write_text(text)
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(reports["baseline"], reports["multimodal"], doc["delta"], text, doc, out)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Featurize, resolve, impute, train both arms on the same split, evaluate, report."""
    cfg = prepare_inputs(cfg.validate())
    cfg.validate()
    stage_featurize(cfg)
    stage_resolve(cfg)
    stage_impute(cfg)
    stage_train(cfg)
    reports = stage_evaluate(cfg)
    return stage_report(cfg, reports)


def run_seeds(cfg: ExperimentConfig, seeds) -> tuple[list[ExperimentResult], dict]:
    """Run the experiment once per seed under ``<out_dir>/seed_<s>``; return mean deltas."""
    results = []
    for s in seeds:
        c = replace(cfg.with_seed(s), out_dir=Path(cfg.out_dir) / f"seed_{s}")
        results.append(run_experiment(c))
    mean = {m: float(np.mean([r.delta[m] for r in results])) for m in ("auroc", "auprc", "f1")}
    return results, mean
