"""SMILES parsing into molecular graphs.

Supports the constitution-level subset of the SMILES grammar: organic-subset
and bracket atoms (isotope, charge, hydrogen count), bond symbols ``- = # :``,
branches, ring closures (``1``..``9`` and ``%nn``), ``.`` fragments and
lowercase aromatic atoms. Stereo markers (``/``, ``\\``, ``@``, ``@@``) and
atom classes are parsed and dropped.

Multi-fragment input keeps the fragment with the most heavy atoms (first
fragment in the string wins ties), which strips counter-ions from salts.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import networkx as nx

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "Molecule",
    "SmilesError",
    "SmilesSyntaxError",
    "RingClosureError",
    "ValenceError",
    "parse_smiles",
    "heavy_degree",
    "invariant_signature",
    "has_substructure",
]

_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe "
    "Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg "
    "Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg "
    "Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og"
).split()
ATOMIC_NUMBER = {sym: z for z, sym in enumerate(_SYMBOLS, start=1)}
SYMBOL = {z: sym for sym, z in ATOMIC_NUMBER.items()}

ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
AROMATIC_BRACKET = ("se", "as", "te", "b", "c", "n", "o", "p", "s")

# allowed valences for organic-subset atoms, lowest first
DEFAULT_VALENCE = {
    5: (3,),
    6: (4,),
    7: (3,),
    8: (2,),
    15: (3, 5),
    16: (2, 4, 6),
    9: (1,),
    17: (1,),
    35: (1,),
    53: (1,),
}

MAX_OPEN_RINGS = 100


class SmilesError(ValueError):
    """Base class for SMILES parse failures."""


class SmilesSyntaxError(SmilesError):
    pass


class RingClosureError(SmilesError):
    pass


class ValenceError(SmilesError):
    pass


class BondOrder(enum.IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
}


@dataclass(frozen=True)
class Atom:
    element: int
    formal_charge: int = 0
    explicit_h: int | None = None
    isotope: int | None = None
    aromatic: bool = False
    index: int = 0

    @property
    def symbol(self) -> str:
        return SYMBOL[self.element]

    @property
    def bracket(self) -> bool:
        return self.explicit_h is not None


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    order: BondOrder

    def other(self, atom_index: int) -> int:
        return self.end if atom_index == self.begin else self.begin


@dataclass(frozen=True)
class Molecule:
    """Immutable molecular graph with derived hydrogen and ring annotations."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    implicit_h: tuple[int, ...]
    ring_member: tuple[bool, ...]
    _adjacency: tuple[tuple[tuple[int, int], ...], ...] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for k, b in enumerate(self.bonds):
            adj[b.begin].append((b.end, k))
            adj[b.end].append((b.begin, k))
        object.__setattr__(self, "_adjacency", tuple(tuple(a) for a in adj))

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, atom_index: int) -> tuple[tuple[int, int], ...]:
        """``(neighbor index, bond index)`` pairs of an atom."""
        return self._adjacency[atom_index]

    def total_h(self, atom_index: int) -> int:
        """Implicit hydrogens plus explicit ``[H]`` neighbours."""
        n = self.implicit_h[atom_index]
        return n + sum(1 for j, _ in self._adjacency[atom_index] if self.atoms[j].element == 1)

    def heavy_atoms(self) -> list[int]:
        return [a.index for a in self.atoms if a.element != 1]


def heavy_degree(mol: Molecule, atom_index: int) -> int:
    """Number of non-hydrogen neighbours of ``atom_index``."""
    if not 0 <= atom_index < len(mol.atoms):
        raise IndexError(f"atom index {atom_index} out of range for {len(mol.atoms)} atoms")
    return sum(1 for j, _ in mol.neighbors(atom_index) if mol.atoms[j].element != 1)


class _Scanner:
    """Single pass over a SMILES string building atoms and bonds."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[Atom] = []
        self.bonds: list[tuple[int, int, BondOrder | None]] = []
        self.pairs: set[frozenset[int]] = set()

    def error(self, msg: str) -> SmilesSyntaxError:
        return SmilesSyntaxError(f"{msg} at position {self.pos} in {self.text!r}")

    def peek(self, k: int = 0) -> str:
        i = self.pos + k
        return self.text[i] if i < len(self.text) else ""

    def add_bond(self, a: int, b: int, order: BondOrder | None, ring: bool = False):
        key = frozenset((a, b))
        if a == b or key in self.pairs:
            exc = RingClosureError if ring else SmilesSyntaxError
            raise exc(f"duplicate or self bond between atoms {a} and {b} in {self.text!r}")
        self.pairs.add(key)
        self.bonds.append((a, b, order))

    def parse(self):
        prev: int | None = None
        pending: BondOrder | None = None
        branches: list[tuple[int, int]] = []
        rings: dict[int, tuple[int, BondOrder | None]] = {}
        n_closures = 0
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch == "[" or ch.isalpha() or ch == "*":
                idx = self.read_atom()
                if prev is not None:
                    self.add_bond(prev, idx, pending)
                elif pending is not None:
                    raise self.error("bond without preceding atom")
                prev, pending = idx, None
            elif ch in _BOND_SYMBOLS:
                if prev is None or pending is not None:
                    raise self.error(f"unexpected bond symbol {ch!r}")
                pending = _BOND_SYMBOLS[ch]
                self.pos += 1
            elif ch == "(":
                if prev is None or pending is not None:
                    raise self.error("branch without preceding atom")
                branches.append((prev, len(self.atoms)))
                self.pos += 1
            elif ch == ")":
                if not branches:
                    raise self.error("unbalanced ')'")
                if pending is not None:
                    raise self.error("dangling bond before ')'")
                prev, n_before = branches.pop()
                if len(self.atoms) == n_before:
                    raise self.error("empty branch")
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    raise self.error("ring closure without preceding atom")
                label = self.read_ring_label()
                if label in rings:
                    other, order0 = rings.pop(label)
                    if order0 is not None and pending is not None and order0 != pending:
                        raise RingClosureError(
                            f"conflicting bond orders on ring closure {label} in {text!r}"
                        )
                    self.add_bond(other, prev, order0 if order0 is not None else pending, ring=True)
                    n_closures += 1
                else:
                    if len(rings) >= MAX_OPEN_RINGS:
                        raise self.error("too many open ring closures")
                    rings[label] = (prev, pending)
                pending = None
            elif ch == ".":
                if pending is not None or prev is None:
                    raise self.error("misplaced '.'")
                if branches:
                    raise self.error("'.' inside a branch")
                prev = None
                self.pos += 1
            else:
                raise self.error(f"unknown token {ch!r}")
        if branches:
            raise self.error("unbalanced '('")
        if pending is not None:
            raise self.error("dangling bond at end of input")
        if prev is None:
            raise self.error("input ends without an atom")
        if rings:
            labels = ", ".join(str(k) for k in sorted(rings))
            raise RingClosureError(f"unclosed ring bond(s) {labels} in {text!r}")
        return n_closures

    def read_ring_label(self) -> int:
        ch = self.peek()
        if ch == "%":
            digits = self.text[self.pos + 1 : self.pos + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise self.error("'%' must be followed by two digits")
            self.pos += 3
            return int(digits)
        self.pos += 1
        return int(ch)

    def new_atom(self, **kw) -> int:
        idx = len(self.atoms)
        self.atoms.append(Atom(index=idx, **kw))
        return idx

    def read_atom(self) -> int:
        text = self.text
        if text[self.pos] == "[":
            return self.read_bracket()
        for sym in ORGANIC_SUBSET:
            if text.startswith(sym, self.pos):
                self.pos += len(sym)
                return self.new_atom(element=ATOMIC_NUMBER[sym])
        ch = text[self.pos]
        if ch in AROMATIC_ORGANIC:
            self.pos += 1
            return self.new_atom(element=ATOMIC_NUMBER[ch.upper()], aromatic=True)
        raise self.error(f"unknown atom symbol {ch!r}")

    def read_int(self) -> int | None:
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        return int(self.text[start : self.pos]) if self.pos > start else None

    def read_bracket(self) -> int:
        end = self.text.find("]", self.pos)
        if end < 0:
            raise self.error("unclosed '['")
        self.pos += 1
        isotope = self.read_int()

        aromatic = False
        element = None
        for sym in AROMATIC_BRACKET:
            if self.text.startswith(sym, self.pos):
                # 'sc' style ambiguity does not arise: the first letter is lowercase
                element, aromatic = ATOMIC_NUMBER[sym.capitalize()], True
                self.pos += len(sym)
                break
        else:
            two = self.text[self.pos : self.pos + 2]
            one = self.text[self.pos : self.pos + 1]
            if len(two) == 2 and two[1].islower() and two in ATOMIC_NUMBER:
                element = ATOMIC_NUMBER[two]
                self.pos += 2
            elif one in ATOMIC_NUMBER:
                element = ATOMIC_NUMBER[one]
                self.pos += 1
        if element is None:
            raise self.error("unknown element in bracket atom")

        # chirality: @, @@, @TH1, @AL2, @SP3, @TB12, @OH25
        if self.peek() == "@":
            self.pos += 1
            if self.peek() == "@":
                self.pos += 1
            elif self.text[self.pos : self.pos + 2] in ("TH", "AL", "SP", "TB", "OH"):
                self.pos += 2
                if self.read_int() is None:
                    raise self.error("chiral class without number")

        h_count = 0
        if self.peek() == "H":
            self.pos += 1
            n = self.read_int()
            h_count = 1 if n is None else n

        charge = 0
        sign = self.peek()
        if sign in "+-" and sign:
            self.pos += 1
            unit = 1 if sign == "+" else -1
            n = self.read_int()
            if n is not None:
                charge = unit * n
            else:
                charge = unit
                while self.peek() == sign:
                    charge += unit
                    self.pos += 1

        if self.peek() == ":":
            self.pos += 1
            if self.read_int() is None:
                raise self.error("atom class without number")

        if self.pos != end:
            raise self.error("malformed bracket atom")
        self.pos += 1
        if aromatic and element not in (5, 6, 7, 8, 15, 16, 33, 34, 52):
            raise self.error("element cannot be aromatic")
        return self.new_atom(
            element=element, formal_charge=charge, explicit_h=h_count, isotope=isotope,
            aromatic=aromatic,
        )


def _select_fragment(atoms, bonds):
    g = nx.Graph()
    g.add_nodes_from(range(len(atoms)))
    g.add_edges_from((a, b) for a, b, _ in bonds)
    components = [sorted(c) for c in nx.connected_components(g)]
    if len(components) == 1:
        return atoms, bonds
    components.sort(key=lambda c: c[0])
    best = max(components, key=lambda c: sum(1 for i in c if atoms[i].element != 1))
    remap = {old: new for new, old in enumerate(best)}
    new_atoms = [
        Atom(
            element=atoms[i].element, formal_charge=atoms[i].formal_charge,
            explicit_h=atoms[i].explicit_h, isotope=atoms[i].isotope,
            aromatic=atoms[i].aromatic, index=remap[i],
        )
        for i in best
    ]
    new_bonds = [(remap[a], remap[b], o) for a, b, o in bonds if a in remap]
    return new_atoms, new_bonds


def _implicit_hydrogens(atoms: list[Atom], bonds: list[Bond]) -> list[int]:
    bond_sum = [0] * len(atoms)
    n_aromatic = [0] * len(atoms)
    exo_double = [False] * len(atoms)
    for b in bonds:
        for i in (b.begin, b.end):
            if b.order == BondOrder.AROMATIC:
                bond_sum[i] += 1
                n_aromatic[i] += 1
            else:
                bond_sum[i] += int(b.order)
                if b.order == BondOrder.DOUBLE:
                    exo_double[i] = True
    out = []
    for atom in atoms:
        i = atom.index
        if atom.bracket:
            out.append(atom.explicit_h)
            continue
        valences = DEFAULT_VALENCE[atom.element]
        if bond_sum[i] > valences[-1]:
            raise ValenceError(
                f"{atom.symbol} atom {i} has {bond_sum[i]} bonds, "
                f"above the maximum valence {valences[-1]}"
            )
        if atom.aromatic:
            # one unit of the lowest valence goes to the aromatic pi system
            pi = 1 if n_aromatic[i] and not exo_double[i] else 0
            out.append(max(0, valences[0] - bond_sum[i] - pi))
        else:
            target = next(v for v in valences if v >= bond_sum[i])
            out.append(target - bond_sum[i])
    return out


def _ring_membership(n_atoms: int, bonds: list[Bond]) -> list[bool]:
    g = nx.Graph()
    g.add_nodes_from(range(n_atoms))
    g.add_edges_from((b.begin, b.end) for b in bonds)
    bridges = {frozenset(e) for e in nx.bridges(g)}
    member = [False] * n_atoms
    for b in bonds:
        if frozenset((b.begin, b.end)) not in bridges:
            member[b.begin] = member[b.end] = True
    return member


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a :class:`Molecule`.

    Raises :class:`SmilesSyntaxError`, :class:`RingClosureError` or
    :class:`ValenceError` on malformed input.
    """
    if not isinstance(text, str) or not text:
        raise SmilesSyntaxError("empty SMILES")
    if not text.isascii():
        raise SmilesSyntaxError(f"non-ASCII SMILES {text!r}")
    scanner = _Scanner(text.strip())
    scanner.parse()
    atoms, raw_bonds = _select_fragment(scanner.atoms, scanner.bonds)

    bonds = []
    for a, b, order in raw_bonds:
        if order is None:
            both = atoms[a].aromatic and atoms[b].aromatic
            order = BondOrder.AROMATIC if both else BondOrder.SINGLE
        bonds.append(Bond(a, b, order))
    implicit = _implicit_hydrogens(atoms, bonds)
    ring = _ring_membership(len(atoms), bonds)
    return Molecule(tuple(atoms), tuple(bonds), tuple(implicit), tuple(ring))


def invariant_signature(mol: Molecule) -> tuple[tuple, tuple]:
    """Relabeling-invariant summary used to compare two spellings of a molecule.

    Sorted multiset of per-atom ``(element, charge, degree, implicit_h,
    ring_member)`` plus the sorted multiset of bond orders.
    """
    atoms = sorted(
        (a.element, a.formal_charge, len(mol.neighbors(a.index)), mol.implicit_h[a.index],
         mol.ring_member[a.index])
        for a in mol.atoms
    )
    bonds = sorted(int(b.order) for b in mol.bonds)
    return tuple(atoms), tuple(bonds)


def to_networkx(mol: Molecule) -> nx.Graph:
    g = nx.Graph()
    for a in mol.atoms:
        g.add_node(a.index, element=a.element, aromatic=a.aromatic)
    for b in mol.bonds:
        g.add_edge(b.begin, b.end, order=int(b.order))
    return g


def has_substructure(mol: Molecule, pattern: Molecule) -> bool:
    """True when ``pattern`` maps onto a subgraph of ``mol``.

    Atoms match on element and aromaticity, bonds on order. Hydrogen counts
    are not constrained, so ``S(=O)(=O)N`` matches primary and secondary
    sulfonamides alike.
    """
    from networkx.algorithms import isomorphism

    matcher = isomorphism.GraphMatcher(
        to_networkx(mol),
        to_networkx(pattern),
        node_match=lambda a, b: a["element"] == b["element"] and a["aromatic"] == b["aromatic"],
        edge_match=lambda a, b: a["order"] == b["order"],
    )
    return matcher.subgraph_is_monomorphic()
