"""Extended-connectivity fingerprints over :class:`~nephrofp.molgraph.Molecule`.

Identifiers are 32-bit values from :func:`hash32`, a BLAKE2b digest truncated
to four bytes over the little-endian int64 serialisation of an integer tuple.
The choice is pinned by ``tests/fixtures/fingerprint_golden.tsv``; changing it
changes every fingerprint.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .molgraph import BondOrder, Molecule, heavy_degree

__all__ = [
    "DEFAULT_RADIUS",
    "DEFAULT_WIDTH",
    "Fingerprint",
    "FeatureId",
    "InvalidWidth",
    "WidthMismatch",
    "hash32",
    "initial_identifiers",
    "ecfp_features",
    "ecfp",
    "aggregate_stay_fingerprint",
    "aggregate_counts",
    "tanimoto",
]

DEFAULT_RADIUS = 2
DEFAULT_WIDTH = 1024


class InvalidWidth(ValueError):
    pass


class WidthMismatch(ValueError):
    pass


def hash32(values) -> int:
    data = struct.pack(f"<{len(values)}q", *values)
    return int.from_bytes(hashlib.blake2b(data, digest_size=4).digest(), "little")


@dataclass(frozen=True)
class FeatureId:
    value: int
    iteration: int
    bond_set: frozenset[int]
    atom: int


@dataclass(frozen=True, eq=False)
class Fingerprint:
    bits: np.ndarray
    radius: int = DEFAULT_RADIUS

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[0]

    def on_bits(self) -> list[int]:
        return np.flatnonzero(self.bits).tolist()

    def popcount(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.width == other.width and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.width, self.bits.tobytes()))

    @classmethod
    def zeros(cls, width: int = DEFAULT_WIDTH, radius: int = DEFAULT_RADIUS) -> "Fingerprint":
        return cls(np.zeros(width, dtype=bool), radius)

    @classmethod
    def from_on_bits(cls, on_bits, width: int, radius: int = DEFAULT_RADIUS) -> "Fingerprint":
        bits = np.zeros(width, dtype=bool)
        bits[list(on_bits)] = True
        return cls(bits, radius)


def _atom_invariant(mol: Molecule, i: int) -> tuple[int, ...]:
    atom = mol.atoms[i]
    # aromatic bonds count 1.5; doubled to stay integral, then floored back
    twice = 0
    for j, k in mol.neighbors(i):
        if mol.atoms[j].element == 1:
            continue
        order = mol.bonds[k].order
        twice += 3 if order == BondOrder.AROMATIC else 2 * int(order)
    return (
        heavy_degree(mol, i),
        twice // 2,
        atom.element,
        atom.isotope or 0,
        atom.formal_charge,
        mol.total_h(i),
        int(mol.ring_member[i]),
    )


def initial_identifiers(mol: Molecule) -> dict[int, int]:
    """Iteration-0 identifier for every heavy atom, keyed by atom index."""
    return {i: hash32(_atom_invariant(mol, i)) for i in mol.heavy_atoms()}


def ecfp_features(mol: Molecule, radius: int = DEFAULT_RADIUS) -> list[FeatureId]:
    """Surviving features after structural deduplication, before folding."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    heavy = mol.heavy_atoms()
    ids = initial_identifiers(mol)
    cover = {i: frozenset() for i in heavy}
    all_features = [FeatureId(ids[i], 0, cover[i], i) for i in heavy]

    for it in range(1, radius + 1):
        new_ids, new_cover = {}, {}
        for i in heavy:
            nbrs = []
            bonds = set(cover[i])
            for j, k in mol.neighbors(i):
                if mol.atoms[j].element == 1:
                    continue
                nbrs.append((int(mol.bonds[k].order), ids[j]))
                bonds.add(k)
                bonds |= cover[j]
            nbrs.sort()
            flat = [it, ids[i]]
            for pair in nbrs:
                flat.extend(pair)
            new_ids[i] = hash32(flat)
            new_cover[i] = frozenset(bonds)
        ids, cover = new_ids, new_cover
        all_features.extend(FeatureId(ids[i], it, cover[i], i) for i in heavy)

    best: dict = {}
    for f in all_features:
        # an empty bond set identifies nothing beyond the atom itself
        key = f.bond_set if f.bond_set else ("atom", f.atom)
        kept = best.get(key)
        if kept is None or (f.iteration, f.value) < (kept.iteration, kept.value):
            best[key] = f
    return sorted(best.values(), key=lambda f: (f.iteration, f.value, f.atom))


def _check_width(width: int):
    if width < 2 or width & (width - 1):
        raise InvalidWidth(f"width must be a power of two >= 2, got {width}")


def ecfp(mol: Molecule, radius: int = DEFAULT_RADIUS, width: int = DEFAULT_WIDTH) -> Fingerprint:
    _check_width(width)
    bits = np.zeros(width, dtype=bool)
    for f in ecfp_features(mol, radius):
        bits[f.value % width] = True
    return Fingerprint(bits, radius)


def _common_width(fps, width: int | None) -> int:
    widths = {fp.width for fp in fps}
    if width is not None:
        widths.add(width)
    if len(widths) > 1:
        raise WidthMismatch(f"fingerprints have differing widths {sorted(widths)}")
    return widths.pop() if widths else DEFAULT_WIDTH


def aggregate_stay_fingerprint(fps, width: int | None = None) -> Fingerprint:
    """Bitwise OR of ``fps``; an empty list gives an all-zero vector."""
    fps = list(fps)
    w = _common_width(fps, width)
    if not fps:
        return Fingerprint.zeros(w)
    bits = np.logical_or.reduce([fp.bits for fp in fps])
    return Fingerprint(bits, fps[0].radius)


def aggregate_counts(fps, clip: int = 4, width: int | None = None) -> np.ndarray:
    """Per-bit number of fingerprints setting the bit, clipped at ``clip``."""
    fps = list(fps)
    w = _common_width(fps, width)
    if not fps:
        return np.zeros(w, dtype=np.int64)
    counts = np.sum([fp.bits for fp in fps], axis=0, dtype=np.int64)
    return np.minimum(counts, clip)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width:
        raise WidthMismatch(f"widths differ: {a.width} vs {b.width}")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a.bits, b.bits).sum()) / union
