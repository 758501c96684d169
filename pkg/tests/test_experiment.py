import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from nephrofp.cli import EXIT_CONFIG, EXIT_DATA, main
from nephrofp.experiment import (
    ARMS,
    ConfigError,
    config_from_dict,
    load_config,
    read_fingerprints,
    run_experiment,
    stage_evaluate,
    stratified_split,
)

SMALL = """
[data.synthetic]
n_stays = 400
seed = 7

[learner.gbdt]
n_trees = 20
min_samples_leaf = 10

[learner.random_forest]
n_trees = 15

[resolver]
cache = "cache/resolver.tsv"

[output]
dir = "run"
"""


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp")
    path = root / "small.toml"
    path.write_text(SMALL)
    return path


@pytest.fixture(scope="module")
def small_run(small_config, tmp_path_factory):
    cfg = load_config(small_config, environ={})
    cfg = replace(cfg, out_dir=tmp_path_factory.mktemp("run_a"))
    return run_experiment(cfg)


# ---- config -----------------------------------------------------------------------

def test_example_config_loads():
    cfg = load_config(Path(__file__).parents[1] / "configs" / "example.toml", environ={})
    cfg.validate()
    assert cfg.synthetic.n_stays == 5000 and cfg.synthetic.effect_odds == 3.0
    assert cfg.learner.kind == "gbdt" and cfg.learner.gbdt.n_trees == 200
    assert cfg.fingerprint.width == 1024 and cfg.split.train_fraction == 0.8


def test_paths_resolve_against_config_dir(small_config):
    cfg = load_config(small_config, environ={})
    assert cfg.out_dir == small_config.parent / "run"
    assert cfg.resolver.cache == small_config.parent / "cache" / "resolver.tsv"


def test_env_overrides(small_config, tmp_path):
    cfg = load_config(small_config, environ={"NEPHROFP_SEED": "9", "NEPHROFP_OUT_DIR": str(tmp_path),
                                             "NEPHROFP_PARALLELISM": "2"})
    assert cfg.split.seed == cfg.learner.gbdt.seed == cfg.synthetic.seed == 9
    assert cfg.out_dir == tmp_path
    assert cfg.resolver.parallelism == 2
    with pytest.raises(ConfigError):
        load_config(small_config, environ={"NEPHROFP_SEED": "nine"})


@pytest.mark.parametrize("doc", [
    {},
    {"data": {"bundle": "/nonexistent", "synthetic": {"n_stays": 100}}},
    {"data": {"bundle": "/nonexistent"}},
    {"data": {"synthetic": {"n_stays": 100}}, "split": {"train_fraction": 1.0}},
    {"data": {"synthetic": {"n_stays": 100}}, "learner": {"kind": "svm"}},
    {"data": {"synthetic": {"n_stays": 100}}, "fingerprint": {"width": 1000}},
    {"data": {"synthetic": {"n_stays": 100}}, "fingerprint": {"aggregation": "mean"}},
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc).validate()


@pytest.mark.parametrize("doc", [
    {"data": {"synthetic": {"n_stays": 100, "bogus": 1}}},
    {"data": {"synthetic": {"n_stays": 100}}, "learner": {"gbdt": {"n_trees": -3}}},
    {"data": {"synthetic": {"n_stays": 100}}, "extra": {}},
    {"data": {"synthetic": {"n_stays": 100}}, "impute": {"drop_threshold": 2}},
])
def test_rejected_while_parsing(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


# ---- split --------------------------------------------------------------------------

def test_stratified_split():
    y = np.array([1] * 50 + [0] * 150)
    train, test = stratified_split(y, 0.8, seed=1)
    assert len(np.intersect1d(train, test)) == 0
    assert len(train) + len(test) == 200
    assert y[train].sum() == 40 and y[test].sum() == 10
    again, _ = stratified_split(y, 0.8, seed=1)
    np.testing.assert_array_equal(train, again)
    other, _ = stratified_split(y, 0.8, seed=2)
    assert not np.array_equal(train, other)


# ---- end to end -----------------------------------------------------------------------

def test_report_shape(small_run):
    text = small_run.report_text
    assert "baseline (cohort features)" in text and "multimodal (cohort + ECFP)" in text
    assert "shared intermediates equal across arms: True" in text
    funnel = small_run.report["funnel"]
    assert funnel["stays_in"] >= funnel["after_exclusions"] >= funnel["after_prescription_filter"]
    assert funnel["after_prescription_filter"] == 400
    assert small_run.report["resolution"]["Unresolved"] > 0
    for key in ("ResolvedByGeneric", "ResolvedByName", "ResolvedByNdc"):
        assert small_run.report["resolution"][key] > 0


def test_shared_intermediates_hash_equal(small_run):
    hashes = small_run.report["hashes"]
    for key, value in hashes["baseline"].items():
        assert hashes["multimodal"][key] == value
    assert "fingerprints" in hashes["multimodal"]


def test_run_twice_byte_identical(small_config, small_run, tmp_path):
    cfg = replace(load_config(small_config, environ={}), out_dir=tmp_path)
    again = run_experiment(cfg)
    assert again.report_text == small_run.report_text
    for name in ("report.txt", "report.json", "models/baseline.nfpm", "models/multimodal.nfpm"):
        assert (tmp_path / name).read_bytes() == (small_run.out_dir / name).read_bytes()


def test_evaluate_reproduces_report(small_config, small_run):
    cfg = replace(load_config(small_config, environ={}), out_dir=small_run.out_dir)
    reports = stage_evaluate(cfg)
    assert reports["baseline"] == small_run.baseline
    assert reports["multimodal"] == small_run.multimodal


def test_fingerprint_file(small_run):
    out = small_run.out_dir
    header = (out / "fingerprints.csv").read_text().splitlines()[0]
    assert header == "# width=1024 radius=2 aggregation=or"
    ids = json.loads((out / "split.json").read_text())["train"][:50]
    X, width = read_fingerprints(out / "fingerprints.csv", ids)
    assert width == 1024 and X.shape == (50, 1024)
    assert set(np.unique(X)) <= {0.0, 1.0}


def test_dropped_columns_are_the_sparse_ones(small_run):
    dropped = {d["name"] for d in small_run.report["dropped_columns"]}
    expected = {f"{s}_{a}" for s in ("bilirubin", "albumin", "lactate", "ptt") for a in ("max", "min")}
    assert dropped == expected | {"height_cm"}


def test_random_forest_arm(small_config, tmp_path):
    cfg = load_config(small_config, environ={})
    cfg = replace(cfg, out_dir=tmp_path, learner=replace(cfg.learner, kind="random_forest"))
    res = run_experiment(cfg)
    assert res.report["learner"] == "random_forest"
    assert 0.5 < res.baseline.auroc <= 1.0


def test_sum_clipped_aggregation(small_config, tmp_path):
    cfg = load_config(small_config, environ={})
    cfg = replace(cfg, out_dir=tmp_path, fingerprint=replace(cfg.fingerprint, aggregation="sum-clipped"))
    run_experiment(cfg)
    X, _ = read_fingerprints(tmp_path / "fingerprints.csv",
                             json.loads((tmp_path / "split.json").read_text())["test"])
    assert X.max() > 1


# ---- CLI ---------------------------------------------------------------------------------

def cli(*args) -> int:
    return main([str(a) for a in args])


def test_cli_staged_equals_run(small_config, tmp_path, capsys):
    run_dir, staged = tmp_path / "run", tmp_path / "staged"
    assert cli("run", "--config", small_config, "--out", run_dir) == 0
    run_stdout = capsys.readouterr().out
    for cmd in ("synth", "featurize", "resolve", "impute", "train", "evaluate"):
        assert cli(cmd, "--config", small_config, "--out", staged) == 0, cmd
    staged_stdout = capsys.readouterr().out
    assert staged_stdout.endswith(run_stdout)
    for name in ("features.csv", "fingerprints.csv", "imputed.csv", "split.json", "models/baseline.nfpm",
                 "models/multimodal.nfpm", "eval_baseline.json", "report.txt", "report.json"):
        assert (staged / name).read_bytes() == (run_dir / name).read_bytes(), name


def test_cli_resolve_twice_zero_upstream(tmp_path, capsys):
    # own config so the cache starts cold
    config = tmp_path / "cold.toml"
    config.write_text(SMALL)
    out = tmp_path / "r"
    assert cli("featurize", "--config", config, "--out", out) == 0
    capsys.readouterr()
    assert cli("resolve", "--config", config, "--out", out) == 0
    first = json.loads(capsys.readouterr().out)
    assert first["upstream_calls"] > 0
    assert cli("resolve", "--config", config, "--out", out) == 0
    second = json.loads(capsys.readouterr().out)
    assert second["upstream_calls"] == 0
    assert second["status_counts"] == first["status_counts"]


def test_cli_seed_override(small_config, tmp_path, capsys):
    assert cli("run", "--config", small_config, "--out", tmp_path, "--seed", "11") == 0
    assert json.loads((tmp_path / "split.json").read_text())["seed"] == 11


def test_cli_config_errors(tmp_path, capsys):
    assert cli("run", "--config", tmp_path / "missing.toml") == EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text("[data\n")
    assert cli("run", "--config", bad) == EXIT_CONFIG
    wrong = tmp_path / "wrong.toml"
    wrong.write_text('[data.synthetic]\nprevalence = 2.0\n')
    assert cli("synth", "--config", wrong) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_data_errors(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    bundle.mkdir()
    (bundle / "stays.csv").write_text("stay_id,patient_id,admit_time\n1,1,2150-01-01T00:00:00\n")
    cfg = tmp_path / "real.toml"
    cfg.write_text(f'[data]\nbundle = "bundle"\n[resolver]\ncompound_fixture = "c.tsv"\n'
                   f'[output]\ndir = "out"\n')
    (tmp_path / "c.tsv").write_text("")
    assert cli("featurize", "--config", cfg) == EXIT_DATA
    assert cli("evaluate", "--config", cfg) == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_cli_resolve_before_featurize(small_config, tmp_path, capsys):
    out = tmp_path / "x"
    assert cli("synth", "--config", small_config, "--out", out) == 0
    assert cli("resolve", "--config", small_config, "--out", out) == EXIT_DATA


def test_arms_constant():
    assert ARMS == ("baseline", "multimodal")
