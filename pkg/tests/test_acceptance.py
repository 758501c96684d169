"""Acceptance criteria, one test each, each printing a single PASS/FAIL line."""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import read_tsv
from oracles import exact_gbdt_tree_predict, pairwise_auroc, separable_toy
from nephrofp import molgraph
from nephrofp.cohort import FeatureMatrix
from nephrofp.experiment import ExperimentConfig, run_experiment, run_seeds
from nephrofp.fingerprint import ecfp
from nephrofp.impute import drop_high_missing, mice
from nephrofp.metrics import auprc, auroc
from nephrofp.model import (
    LEAF_LAMBDA,
    BinMapper,
    Dataset,
    ForestParams,
    GbdtParams,
    train_gbdt,
    train_random_forest,
)
from nephrofp.model.tree import BinnedData, grow_gbdt_tree
from nephrofp.molgraph import SmilesError, parse_smiles
from nephrofp.resolver import (
    DrugRecord,
    FixtureCompoundDb,
    FixtureNdcDb,
    ResolutionStatus,
    ResolverCache,
    resolve,
    resolve_batch,
)
from nephrofp.synth import SynthSpec

SEEDS = [42, 43, 44, 45, 46]


def verdict(number: int, title: str, ok: bool, detail: str, capsys) -> None:
    with capsys.disabled():
        print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def planted(tmp_path_factory):
    cfg = ExperimentConfig(synthetic=SynthSpec(n_stays=5000, effect_odds=3.0, seed=42),
                           out_dir=tmp_path_factory.mktemp("planted"))
    t0 = time.perf_counter()
    results, mean = run_seeds(cfg, SEEDS)
    return cfg, results, mean, time.perf_counter() - t0


@pytest.fixture(scope="session")
def null(tmp_path_factory):
    cfg = ExperimentConfig(synthetic=SynthSpec(n_stays=5000, effect_odds=1.0, seed=42),
                           out_dir=tmp_path_factory.mktemp("null"))
    return run_seeds(cfg, SEEDS)


def test_criterion_01_planted_signal(planted, capsys):
    _, _, mean, elapsed = planted
    ok = mean["auroc"] >= 0.05 and mean["auprc"] >= 0.04 and elapsed <= 300
    verdict(1, "planted signal", ok,
            f"mean dAUROC {mean['auroc']:+.4f} (>= 0.05), mean dAUPRC {mean['auprc']:+.4f} (>= 0.04), "
            f"{elapsed:.0f} s for 5 seeds (<= 300)", capsys)


def test_criterion_02_null_effect(null, capsys):
    _, mean = null
    verdict(2, "null effect", abs(mean["auroc"]) <= 0.02,
            f"mean dAUROC {mean['auroc']:+.4f} (|.| <= 0.02)", capsys)


def test_criterion_03_metric_oracles(capsys):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, int(rng.integers(2, 20)), n) / 7.0
        worst = max(worst, abs(auroc(s, y) - pairwise_auroc(s, y)))
    ap = auprc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    ok = worst <= 1e-12 and abs(ap - 5 / 6) <= 1e-12
    verdict(3, "metric oracles", ok, f"max AUROC gap {worst:.1e} over 1000 instances, worked AP {ap:.6f}", capsys)


def test_criterion_04_fingerprint_invariance(drug_corpus, permuted_pairs, capsys):
    pair_fail = [name for name, a, b in permuted_pairs
                 if any(ecfp(parse_smiles(a), r) != ecfp(parse_smiles(b), r) for r in range(4))]
    mono_fail = []
    for name, smiles, *_ in drug_corpus:
        mol = parse_smiles(smiles)
        sets = [set(ecfp(mol, r, 1024).on_bits()) for r in range(4)]
        if any(not sets[r] <= sets[r + 1] for r in range(3)):
            mono_fail.append(name)
    golden = read_tsv("fingerprint_golden.tsv")
    golden_fail = [s for s, r, w, bits in golden
                   if ecfp(parse_smiles(s), int(r), int(w)).on_bits() != [int(b) for b in bits.split(",")]]
    ok = (len(permuted_pairs) == 50 and len(drug_corpus) == 30 and len(golden) == 30
          and not pair_fail and not mono_fail and not golden_fail)
    verdict(4, "fingerprint invariance", ok,
            f"{len(permuted_pairs) - len(pair_fail)}/{len(permuted_pairs)} permuted pairs identical, "
            f"{len(drug_corpus) - len(mono_fail)}/{len(drug_corpus)} radius-monotone, "
            f"{len(golden) - len(golden_fail)}/{len(golden)} golden fixtures", capsys)


def test_criterion_05_parser_corpus(drug_corpus, capsys):
    count_ok = 0
    for _, smiles, n_atoms, n_bonds, h_total in drug_corpus:
        mol = parse_smiles(smiles)
        count_ok += (len(mol.atoms), len(mol.bonds), sum(mol.implicit_h)) == (n_atoms, n_bonds, h_total)
    malformed = read_tsv("malformed_smiles.tsv")
    err_ok = 0
    for smiles, error in malformed:
        try:
            parse_smiles(smiles)
        except SmilesError as e:
            err_ok += type(e) is getattr(molgraph, error)
    ok = count_ok == len(drug_corpus) == 30 and err_ok == len(malformed) == 12
    verdict(5, "parser corpus", ok,
            f"{count_ok}/{len(drug_corpus)} fixtures match counts, {err_ok}/{len(malformed)} malformed raise "
            f"the documented error", capsys)


def test_criterion_06_mice_recovery(capsys):
    ratios, preserved, complete = [], True, True
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=200)
        y = 2 * x + 1 + rng.normal(scale=0.1, size=200)
        masked = rng.choice(200, 60, replace=False)
        X = np.column_stack([x, y])
        X[masked, 1] = np.nan
        fm = FeatureMatrix(np.arange(200), ["x", "y"], ["continuous"] * 2, X, np.zeros(200, dtype=int))
        out = mice(fm).values
        observed = ~np.isnan(X)
        preserved &= np.array_equal(out[observed], X[observed])
        complete &= not np.isnan(out).any()
        rmse = np.sqrt(np.mean((out[masked, 1] - y[masked]) ** 2))
        rmse_mean = np.sqrt(np.mean((np.nanmean(X[:, 1]) - y[masked]) ** 2))
        ratios.append(rmse / rmse_mean)
    ok = max(ratios) <= 0.5 and preserved and complete
    verdict(6, "MICE recovery", ok,
            f"worst RMSE ratio {max(ratios):.3f} (<= 0.5) over 5 seeds, observed cells identical={preserved}, "
            f"complete={complete}", capsys)


def test_criterion_07_missingness_threshold(capsys):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 3))
    X[rng.choice(100, 21, replace=False), 0] = np.nan
    X[rng.choice(100, 20, replace=False), 1] = np.nan
    fm = FeatureMatrix(np.arange(100), ["m21", "m20", "full"], ["continuous"] * 3, X, np.zeros(100, dtype=int))
    reduced, report = drop_high_missing(fm)
    ok = reduced.columns == ["m20", "full"] and [d[0] for d in report.dropped] == ["m21"]
    verdict(7, "missingness threshold", ok, f"kept {reduced.columns}, dropped {[d[0] for d in report.dropped]}",
            capsys)


def test_criterion_08_learner_sanity(capsys):
    X, y = separable_toy()
    toy = Dataset(X, y, ["x0", "x1"])
    gbdt = train_gbdt(toy, GbdtParams(n_trees=50, seed=0))
    forest = train_random_forest(toy, ForestParams(n_trees=50, seed=0))
    a_g, a_f = auroc(gbdt.predict_proba(X), y), auroc(forest.predict_proba(X), y)
    rise = float(np.max(np.diff(gbdt.loss_trace)))
    exact_ok = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        Xl = rng.integers(0, 5, size=(150, 3)).astype(float)
        grad = rng.normal(size=150) + 0.3 * Xl[:, 0]
        hess = rng.uniform(0.05, 0.25, size=150)
        tree = grow_gbdt_tree(BinnedData.from_mapper(BinMapper.fit(Xl, 256), Xl), np.arange(150), grad, hess,
                              np.ones(150), max_depth=3, min_samples_leaf=5, lam=LEAF_LAMBDA)
        expected = exact_gbdt_tree_predict(Xl, grad, hess, LEAF_LAMBDA, 5, 3)
        exact_ok += np.allclose(tree.predict(Xl), expected, rtol=1e-9, atol=1e-12)
    ok = a_g >= 0.99 and a_f >= 0.99 and rise <= 1e-9 and exact_ok == 40
    verdict(8, "learner sanity", ok,
            f"train AUROC gbdt {a_g:.4f} forest {a_f:.4f}, max loss rise {rise:.1e}, "
            f"{exact_ok}/40 histogram trees equal exact trees", capsys)


def test_criterion_09_resolver_contract(tmp_path, capsys):
    def dbs():
        compound = FixtureCompoundDb({"aspirin": "CC(=O)Oc1ccccc1C(=O)O",
                                      "acetaminophen": "CC(=O)Nc1ccc(O)cc1",
                                      "tylenol": "CC(=O)Nc1ccc(O)cc1"})
        return compound, FixtureNdcDb({"50580049660": "TYLENOL", "00000000019": "mystery brand"})

    records = [DrugRecord(drug_name="Bayer", generic_name="aspirin"),
               DrugRecord(drug_name="Acetaminophen 325mg Tab", generic_name="paracetamol"),
               DrugRecord(drug_name="zzz brand", generic_name="zzz other", ndc="50580049660"),
               DrugRecord(drug_name="zzz brand", generic_name="zzzumab", ndc="00000000019")]
    statuses = [resolve(r, *dbs()).status for r in records]
    expected = [ResolutionStatus.RESOLVED_BY_GENERIC, ResolutionStatus.RESOLVED_BY_NAME,
                ResolutionStatus.RESOLVED_BY_NDC, ResolutionStatus.UNRESOLVED]
    compound, ndc = dbs()
    order = resolve(records[3], compound, ndc).attempts
    cache = tmp_path / "cache.tsv"
    first = resolve_batch(records, *dbs(), cache=ResolverCache(cache))
    compound2, ndc2 = dbs()
    second = resolve_batch(records, compound2, ndc2, cache=ResolverCache(cache))
    warm_calls = second.upstream_calls + compound2.calls + ndc2.calls
    ok = (statuses == expected and order == ("zzzumab", "zzz brand", "mystery brand")
          and first.upstream_calls > 0 and warm_calls == 0 and second.resolutions == first.resolutions)
    verdict(9, "resolver contract", ok,
            f"paths {[s.value for s in statuses]}, attempt order {order}, warm-cache upstream calls {warm_calls}",
            capsys)


def test_criterion_10_determinism_and_symmetry(planted, tmp_path, capsys):
    cfg, results, _, _ = planted
    first = results[0]
    again = run_experiment(replace(cfg.with_seed(SEEDS[0]), out_dir=tmp_path))
    same_bytes = all((tmp_path / f).read_bytes() == (first.out_dir / f).read_bytes()
                     for f in ("report.txt", "report.json"))
    hashes = again.report["hashes"]
    shared = all(hashes["multimodal"][k] == v for k, v in hashes["baseline"].items())
    verdict(10, "determinism and symmetry", same_bytes and shared,
            f"reports byte-identical={same_bytes}, shared intermediates equal={shared} "
            f"({', '.join(sorted(hashes['baseline']))})", capsys)
