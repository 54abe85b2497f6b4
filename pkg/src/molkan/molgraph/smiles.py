"""A SMILES subset reader producing hydrogen-suppressed molecular graphs.

Supported: organic-subset and bracket atoms, bond symbols ``- = # : / \\``,
branches, ring closures (``1``-``9`` and ``%nn``) and ``.`` fragments.
Stereo marks are read and dropped. Of a multi-fragment string only the
largest fragment is kept.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORGANIC = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {**AROMATIC_ORGANIC, "se": "Se", "as": "As", "te": "Te"}

# normal valences, lowest first
VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}

ELEMENTS = frozenset("""
H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn
Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce
Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn
Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl
Mc Lv Ts Og
""".split())

SINGLE, DOUBLE, TRIPLE, AROMATIC = "single", "double", "triple", "aromatic"
BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)
_BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC, "/": SINGLE, "\\": SINGLE}
_BOND_VALENCE = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}


class SmilesError(ValueError):
    """Unparseable SMILES; ``position`` is the offending character index."""

    def __init__(self, message: str, smiles: str, position: int):
        super().__init__(f"{message} at position {position} in {smiles!r}")
        self.smiles = smiles
        self.position = position


@dataclass
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int | None = None
    degree: int = 0
    implicit_h: int = 0


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    order: str

    @property
    def endpoints(self) -> tuple[int, int]:
        return self.begin, self.end


@dataclass
class MolecularGraph:
    atoms: list[Atom]
    bonds: list[Bond]
    source_smiles: str = ""
    warnings: list[str] = field(default_factory=list)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def edge_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed edges ``(src, dst)``; bond ``b`` gives entries ``2b`` and ``2b+1``."""
        src = np.empty(2 * len(self.bonds), dtype=np.int64)
        dst = np.empty_like(src)
        for i, b in enumerate(self.bonds):
            src[2 * i], dst[2 * i] = b.begin, b.end
            src[2 * i + 1], dst[2 * i + 1] = b.end, b.begin
        return src, dst

    def neighbors(self) -> list[list[tuple[int, str]]]:
        adj: list[list[tuple[int, str]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.begin].append((b.end, b.order))
            adj[b.end].append((b.begin, b.order))
        return adj


class _Reader:
    def __init__(self, smiles: str):
        self.s = smiles
        self.i = 0
        self.atoms: list[Atom] = []
        self.bracket: list[bool] = []
        self.bonds: dict[frozenset, Bond] = {}
        self.order: list[frozenset] = []

    def error(self, msg, pos=None):
        raise SmilesError(msg, self.s, self.i if pos is None else pos)

    def add_bond(self, a: int, b: int, order: str | None, pos: int):
        if a == b:
            self.error("atom bonded to itself", pos)
        if order is None:
            both = self.atoms[a].aromatic and self.atoms[b].aromatic
            order = AROMATIC if both else SINGLE
        key = frozenset((a, b))
        if key in self.bonds:
            self.error("duplicate bond", pos)
        self.bonds[key] = Bond(a, b, order)
        self.order.append(key)

    def read_bracket(self) -> Atom:
        s, start = self.s, self.i
        end = s.find("]", start)
        if end < 0:
            self.error("unterminated bracket atom")
        body = s[start + 1:end]
        j = 0
        while j < len(body) and body[j].isdigit():
            j += 1  # isotope, discarded
        sym = None
        for cand in (body[j:j + 2], body[j:j + 1]):
            if cand in AROMATIC_BRACKET and cand.islower():
                sym, aromatic = AROMATIC_BRACKET[cand], True
                break
            if cand in ELEMENTS:
                sym, aromatic = cand, False
                break
        if sym is None:
            self.error(f"unknown element in [{body}]", start + 1 + j)
        j += len(sym)
        while j < len(body) and body[j] == "@":
            j += 1
        if body[j:j + 2] in ("TH", "AL", "SP", "TB", "OH"):
            j += 2
            while j < len(body) and body[j].isdigit():
                j += 1
        h = 0
        if j < len(body) and body[j] == "H":
            j += 1
            h = 1
            if j < len(body) and body[j].isdigit():
                h = int(body[j])
                j += 1
        charge = 0
        if j < len(body) and body[j] in "+-":
            sign = 1 if body[j] == "+" else -1
            j += 1
            if j < len(body) and body[j].isdigit():
                k = j
                while j < len(body) and body[j].isdigit():
                    j += 1
                charge = sign * int(body[k:j])
            else:
                charge = sign
                while j < len(body) and body[j] == ("+" if sign > 0 else "-"):
                    charge += sign
                    j += 1
        if j < len(body) and body[j] == ":":
            j += 1
            while j < len(body) and body[j].isdigit():
                j += 1
        if j != len(body):
            self.error(f"unexpected {body[j]!r} in bracket atom", start + 1 + j)
        self.i = end + 1
        return Atom(sym, aromatic, max(-2, min(2, charge)), explicit_h=h)

    def read_organic(self) -> Atom | None:
        s, i = self.s, self.i
        two = s[i:i + 2]
        if two in ("Cl", "Br"):
            self.i += 2
            return Atom(two)
        ch = s[i]
        if ch in ORGANIC:
            self.i += 1
            return Atom(ch)
        if ch in AROMATIC_ORGANIC:
            self.i += 1
            return Atom(AROMATIC_ORGANIC[ch], aromatic=True)
        return None

    def parse(self):
        s = self.s
        prev: int | None = None
        pending: str | None = None
        pending_pos = 0
        branches: list[int | None] = []
        rings: dict[int, tuple[int, str | None, int]] = {}
        while self.i < len(s):
            ch = s[self.i]
            pos = self.i
            if ch == "(":
                if prev is None:
                    self.error("branch without a preceding atom")
                branches.append(prev)
                self.i += 1
            elif ch == ")":
                if not branches:
                    self.error("unmatched ')'")
                if pending is not None:
                    self.error("bond symbol before ')'")
                prev = branches.pop()
                self.i += 1
            elif ch in _BOND_SYMBOLS:
                if pending is not None:
                    self.error("two consecutive bond symbols")
                pending, pending_pos = _BOND_SYMBOLS[ch], pos
                self.i += 1
            elif ch == ".":
                if pending is not None:
                    self.error("bond symbol before '.'")
                prev = None
                self.i += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    self.error("ring closure without a preceding atom")
                if ch == "%":
                    digits = s[self.i + 1:self.i + 3]
                    if len(digits) != 2 or not digits.isdigit():
                        self.error("'%' must be followed by two digits")
                    num = int(digits)
                    self.i += 3
                else:
                    num = int(ch)
                    self.i += 1
                if num in rings:
                    other, order, _ = rings.pop(num)
                    if pending is not None and order is not None and pending != order:
                        self.error("conflicting ring-closure bond orders")
                    self.add_bond(other, prev, pending or order, pos)
                else:
                    rings[num] = (prev, pending, pos)
                pending = None
            else:
                if ch == "[":
                    atom, bracket = self.read_bracket(), True
                else:
                    atom, bracket = self.read_organic(), False
                    if atom is None:
                        self.error(f"unknown atom symbol {ch!r}")
                self.atoms.append(atom)
                self.bracket.append(bracket)
                idx = len(self.atoms) - 1
                if prev is not None:
                    self.add_bond(prev, idx, pending, pos)
                elif pending is not None:
                    self.error("bond symbol without a preceding atom", pending_pos)
                pending = None
                prev = idx
        if pending is not None:
            self.error("dangling bond symbol", pending_pos)
        if branches:
            self.error("unclosed '('", len(s))
        if rings:
            num, (_, _, pos) = next(iter(rings.items()))
            self.error(f"unclosed ring bond {num}", pos)
        if not self.atoms:
            self.error("no atoms", 0)


def _components(n: int, bonds: list[Bond]) -> list[int]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for b in bonds:
        ra, rb = find(b.begin), find(b.end)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return [find(a) for a in range(n)]


def _assign_hydrogens(atoms: list[Atom], bonds: list[Bond], bracket: list[bool], warnings: list[str]):
    total = [0.0] * len(atoms)
    for b in bonds:
        v = _BOND_VALENCE[b.order]
        total[b.begin] += v
        total[b.end] += v
        atoms[b.begin].degree += 1
        atoms[b.end].degree += 1
    for i, atom in enumerate(atoms):
        if bracket[i]:
            atom.implicit_h = atom.explicit_h or 0
            continue
        used = int(np.floor(total[i]))
        valences = VALENCES[atom.element]
        if atom.aromatic:
            # deficits are expected for pyrrole/furan-type atoms
            atom.implicit_h = max(valences[0] - used, 0)
            continue
        target = next((v for v in valences if v >= used), None)
        if target is None:
            warnings.append(f"valence exceeded on atom {i} ({atom.element})")
            atom.implicit_h = 0
        else:
            atom.implicit_h = target - used


def parse_smiles(smiles: str) -> MolecularGraph:
    """Parse ``smiles`` into a :class:`MolecularGraph` (largest fragment only)."""
    if not isinstance(smiles, str) or not smiles.strip():
        raise SmilesError("empty SMILES", str(smiles), 0)
    smiles = smiles.strip()
    if not smiles.isascii():
        raise SmilesError("non-ASCII SMILES", smiles, 0)
    reader = _Reader(smiles)
    reader.parse()
    atoms, bracket = reader.atoms, reader.bracket
    bonds = [reader.bonds[k] for k in reader.order]
    warnings: list[str] = []

    comp = _components(len(atoms), bonds)
    if len(set(comp)) > 1:
        sizes: dict[int, int] = {}
        for c in comp:
            sizes[c] = sizes.get(c, 0) + 1
        keep = max(sizes, key=lambda c: (sizes[c], -c))
        remap, kept_atoms, kept_bracket = {}, [], []
        for i, c in enumerate(comp):
            if c == keep:
                remap[i] = len(kept_atoms)
                kept_atoms.append(atoms[i])
                kept_bracket.append(bracket[i])
        bonds = [Bond(remap[b.begin], remap[b.end], b.order) for b in bonds if comp[b.begin] == keep]
        atoms, bracket = kept_atoms, kept_bracket
        warnings.append(f"kept largest of {len(sizes)} fragments")

    _assign_hydrogens(atoms, bonds, bracket, warnings)
    return MolecularGraph(atoms, bonds, smiles, warnings)
