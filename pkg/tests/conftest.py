import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))


def read_tsv(name):
    rows = []
    for line in (FIXTURES / name).read_text().splitlines():
        if line and not line.startswith("#"):
            rows.append(line.split("\t"))
    return rows


@pytest.fixture(scope="session")
def drug_corpus():
    return [(r[0], r[1], int(r[2]), int(r[3]), int(r[4])) for r in read_tsv("drug_corpus.tsv")]


@pytest.fixture(scope="session")
def permuted_pairs():
    return [tuple(r) for r in read_tsv("permuted_pairs.tsv")]
