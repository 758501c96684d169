"""Regenerate the frozen fixtures under tests/fixtures.

Fingerprint goldens come from the independent reference in tests/oracles.py,
and are only written after the package agrees with it. The GBDT golden vector
is written only after the model passes the training-AUROC sanity bar.
"""
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import reference_bits, reference_ecfp_ids, separable_toy  # noqa: E402

from nephrofp.fingerprint import ecfp, initial_identifiers  # noqa: E402
from nephrofp.metrics import auroc  # noqa: E402
from nephrofp.model import GbdtParams, Dataset, predict_proba, train_gbdt  # noqa: E402
from nephrofp.molgraph import parse_smiles  # noqa: E402

FIX = ROOT / "tests" / "fixtures"
GOLDEN_RADIUS, GOLDEN_WIDTH = 2, 1024
GBDT_GOLDEN_PARAMS = GbdtParams(n_trees=50, seed=0)

MALFORMED = [
    ("C(C", "SmilesSyntaxError"),
    ("CC)", "SmilesSyntaxError"),
    ("[NH4+", "SmilesSyntaxError"),
    ("CXC", "SmilesSyntaxError"),
    ("[Xx]", "SmilesSyntaxError"),
    ("C==C", "SmilesSyntaxError"),
    ("C1CC", "RingClosureError"),
    ("C%12CC", "RingClosureError"),
    ("C11", "RingClosureError"),
    ("C=1CC-1", "RingClosureError"),
    ("FC(F)(F)(F)F", "ValenceError"),
    ("O=O=O", "ValenceError"),
]


def corpus():
    for line in (FIX / "drug_corpus.tsv").read_text().splitlines():
        if line and not line.startswith("#"):
            name, smiles = line.split("\t")[:2]
            yield name, smiles


def main():
    rows = ["# smiles\tradius\twidth\tbits"]
    for name, smi in corpus():
        mol = parse_smiles(smi)
        expected = reference_bits(mol, GOLDEN_RADIUS, GOLDEN_WIDTH)
        got = ecfp(mol, GOLDEN_RADIUS, GOLDEN_WIDTH).on_bits()
        if got != expected:
            raise SystemExit(f"package disagrees with the reference on {name}")
        rows.append(f"{smi}\t{GOLDEN_RADIUS}\t{GOLDEN_WIDTH}\t{','.join(map(str, expected))}")
    (FIX / "fingerprint_golden.tsv").write_text("\n".join(rows) + "\n")

    methane = parse_smiles("C")
    (value,) = reference_ecfp_ids(methane, 0)
    assert initial_identifiers(methane) == {0: value}
    (FIX / "methane_id.txt").write_text(f"{value}\n")

    (FIX / "malformed_smiles.tsv").write_text(
        "# smiles\terror\n" + "".join(f"{s}\t{e}\n" for s, e in MALFORMED))

    X, y = separable_toy()
    model = train_gbdt(Dataset(X, y, ["x0", "x1"]), GBDT_GOLDEN_PARAMS)
    p = predict_proba(model, X)
    if auroc(p, y) < 0.99:
        raise SystemExit("GBDT fails the toy sanity bar; not freezing")
    (FIX / "gbdt_toy_golden.txt").write_text("".join(f"{v!r}\n" for v in p.tolist()))
    print(f"wrote fixtures to {FIX}")


if __name__ == "__main__":
    main()
