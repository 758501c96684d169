import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, read_tsv
from oracles import reference_bits, reference_ecfp_ids
from nephrofp.fingerprint import (
    Fingerprint,
    InvalidWidth,
    WidthMismatch,
    aggregate_counts,
    aggregate_stay_fingerprint,
    ecfp,
    ecfp_features,
    initial_identifiers,
    tanimoto,
)
from nephrofp.molgraph import parse_smiles

GOLDEN = read_tsv("fingerprint_golden.tsv")


def test_methane_single_bit_and_golden_id():
    mol = parse_smiles("C")
    fp = ecfp(mol, 2, 1024)
    assert fp.popcount() == 1
    golden = int((FIXTURES / "methane_id.txt").read_text())
    assert initial_identifiers(mol) == {0: golden}
    assert fp.on_bits() == [golden % 1024]


def test_terminal_carbons_share_identifier():
    ids = initial_identifiers(parse_smiles("CCO"))
    assert ids[0] != ids[1]
    assert ids[0] != ids[2]
    ids = initial_identifiers(parse_smiles("CCC"))
    assert ids[0] == ids[2]


@pytest.mark.parametrize("r", [0, 1, 2])
@pytest.mark.parametrize("w", [256, 1024])
def test_order_invariance_small(r, w):
    assert ecfp(parse_smiles("CCO"), r, w) == ecfp(parse_smiles("OCC"), r, w)


@pytest.mark.parametrize("smiles,radius,width,bits", GOLDEN, ids=[g[0][:20] for g in GOLDEN])
def test_golden_bits(smiles, radius, width, bits):
    fp = ecfp(parse_smiles(smiles), int(radius), int(width))
    assert fp.on_bits() == [int(b) for b in bits.split(",")]


def test_golden_corpus_size():
    assert len(GOLDEN) == 30


def test_matches_independent_reference(drug_corpus):
    for name, smiles, *_ in drug_corpus:
        mol = parse_smiles(smiles)
        for r in range(4):
            assert {f.value for f in ecfp_features(mol, r)} == reference_ecfp_ids(mol, r), (name, r)
        assert ecfp(mol, 3, 2048).on_bits() == reference_bits(mol, 3, 2048)


def test_permuted_pairs_identical(permuted_pairs):
    for name, a, b in permuted_pairs:
        for r in range(4):
            assert ecfp(parse_smiles(a), r) == ecfp(parse_smiles(b), r), (name, r)


def test_radius_monotone_on_corpus(drug_corpus):
    for name, smiles, *_ in drug_corpus:
        mol = parse_smiles(smiles)
        prev = set()
        for r in range(4):
            bits = set(ecfp(mol, r, 1024).on_bits())
            assert prev <= bits, (name, r)
            prev = bits


def test_fold_consistency(drug_corpus):
    for _, smiles, *_ in drug_corpus:
        mol = parse_smiles(smiles)
        feats = ecfp_features(mol, 2)
        fp = ecfp(mol, 2, 512)
        assert set(fp.on_bits()) == {f.value % 512 for f in feats}
        assert 1 <= fp.popcount() <= len(feats)
        n_bonds = len(mol.bonds)
        assert all(f.iteration <= 2 and all(0 <= b < n_bonds for b in f.bond_set) for f in feats)


def test_dedup_prefers_lower_iteration():
    # ethane: round-1 features of both carbons cover the same single bond
    feats = ecfp_features(parse_smiles("CC"), 2)
    covering = [f for f in feats if f.bond_set == frozenset({0})]
    assert len(covering) == 1 and covering[0].iteration == 1


@pytest.mark.parametrize("w", [0, 1, 3, 1000, -8])
def test_invalid_width(w):
    with pytest.raises(InvalidWidth):
        ecfp(parse_smiles("CCO"), 2, w)


def test_aggregate_or():
    a = Fingerprint(np.array([0, 0, 1, 1], bool))
    b = Fingerprint(np.array([0, 1, 0, 1], bool))
    assert aggregate_stay_fingerprint([a, b]).on_bits() == [1, 2, 3]
    assert aggregate_stay_fingerprint([a]) == a
    empty = aggregate_stay_fingerprint([])
    assert empty.width == 1024 and empty.popcount() == 0
    with pytest.raises(WidthMismatch):
        aggregate_stay_fingerprint([a, Fingerprint.zeros(8)])


def test_aggregate_counts_clip():
    a = Fingerprint.from_on_bits([0, 1], 4)
    out = aggregate_counts([a] * 6 + [Fingerprint.from_on_bits([2], 4)])
    assert out.tolist() == [4, 4, 1, 0]


def test_tanimoto():
    a = Fingerprint.from_on_bits([0, 1], 4)
    b = Fingerprint.from_on_bits([1, 2], 4)
    assert tanimoto(a, b) == pytest.approx(1 / 3)
    assert tanimoto(a, a) == 1.0
    assert tanimoto(a, Fingerprint.from_on_bits([3], 4)) == 0.0
    assert tanimoto(Fingerprint.zeros(4), Fingerprint.zeros(4)) == 1.0
    with pytest.raises(WidthMismatch):
        tanimoto(a, Fingerprint.zeros(8))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 29), min_size=1, max_size=4), st.integers(0, 3))
def test_or_contains_members(picks, r):
    corpus = read_tsv("drug_corpus.tsv")
    fps = [ecfp(parse_smiles(corpus[i][1]), r) for i in picks]
    agg = set(aggregate_stay_fingerprint(fps).on_bits())
    for fp in fps:
        assert set(fp.on_bits()) <= agg
        assert 0.0 <= tanimoto(fp, fps[0]) <= 1.0
