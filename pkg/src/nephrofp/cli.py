"""Command-line entry point: ``nephrofp <subcommand> --config PATH [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .cohort import DataError, SchemaError
from .experiment import (
    ConfigError,
    ExperimentConfig,
    load_config,
    prepare_inputs,
    run_experiment,
    stage_evaluate,
    stage_featurize,
    stage_impute,
    stage_report,
    stage_resolve,
    stage_train,
)
from .impute import AllColumnsDropped
from .model import DegenerateLabels, FormatVersionMismatch, ShapeMismatch
from .synth import SpecError, generate_synthetic

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
SUBCOMMANDS = ("synth", "featurize", "resolve", "impute", "train", "evaluate", "run")
DATA_ERRORS = (DataError, SchemaError, AllColumnsDropped, DegenerateLabels, ShapeMismatch,
               FormatVersionMismatch, FileNotFoundError)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nephrofp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate the configured synthetic bundle and fixtures",
        "featurize": "build the cohort and first-day feature matrix",
        "resolve": "resolve first-day drugs to SMILES and write fingerprints",
        "impute": "drop sparse columns and impute the rest",
        "train": "train baseline and multimodal models on one split",
        "evaluate": "score saved models on the saved test split and write the report",
        "run": "all stages in order",
    }
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--seed", type=int, default=None, help="override split, learner and synthetic seeds")
        s.add_argument("--out", type=Path, default=None, help="working directory (overrides output.dir)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg.validate()


def _staged(cfg: ExperimentConfig) -> ExperimentConfig:
    """Point a synthetic config at an already generated bundle."""
    if cfg.synthetic is None:
        return cfg
    syn = Path(cfg.out_dir) / "synthetic"
    if not (syn / "manifest.json").exists():
        raise DataError(f"no synthetic bundle in {syn}; run `nephrofp synth` first")
    resolver = replace(cfg.resolver, mode="offline", compound_fixture=syn / "compounds.tsv",
                       ndc_fixture=syn / "ndc.tsv")
    return replace(cfg, bundle=syn / "bundle", synthetic=None, resolver=resolver).validate()


def _dispatch(command: str, cfg: ExperimentConfig) -> str:
    if command == "run":
        return run_experiment(cfg).report_text
    if command == "synth":
        if cfg.synthetic is None:
            raise ConfigError("config has no [data.synthetic] section")
        res = generate_synthetic(cfg.synthetic, Path(cfg.out_dir) / "synthetic")
        return f"wrote {res.bundle} (realized prevalence {res.truth['realized_prevalence']:.4f})\n"
    if command == "featurize":
        generated = (Path(cfg.out_dir) / "synthetic" / "manifest.json").exists()
        if cfg.synthetic is not None and not generated:
            cfg = prepare_inputs(cfg)
        else:
            cfg = _staged(cfg)
        return json.dumps(stage_featurize(cfg), indent=2) + "\n"
    cfg = _staged(cfg)
    if command == "resolve":
        return json.dumps(stage_resolve(cfg), indent=2, sort_keys=True) + "\n"
    if command == "impute":
        im = stage_impute(cfg)
        return (f"imputed {int(im.imputed.sum())} cells; dropped "
                f"{', '.join(n for n, _ in im.dropped_columns) or 'no columns'}\n")
    if command == "train":
        stage_train(cfg)
        return f"models written to {Path(cfg.out_dir) / 'models'}\n"
    reports = stage_evaluate(cfg)
    return stage_report(cfg, reports).report_text


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        sys.stdout.write(_dispatch(args.command, cfg))
    except (ConfigError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
