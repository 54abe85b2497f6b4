"""Random molecule strings and node relabeling, for invariance checks."""
from __future__ import annotations

import numpy as np

from .smiles import Bond, MolecularGraph

_ELEMENTS = ("C", "C", "C", "C", "N", "N", "O", "S", "F", "Cl")
_VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1}


def random_smiles(rng: np.random.Generator, n_atoms: int | None = None, max_rings: int = 2) -> str:
    """A random valence-respecting molecule: a random tree plus up to ``max_rings`` ring closures."""
    n = int(rng.integers(2, 16)) if n_atoms is None else int(n_atoms)
    elem = ["C"] + [str(rng.choice(_ELEMENTS)) for _ in range(n - 1)]
    free = [_VALENCE[e] for e in elem]
    parent = [-1] * n
    children: list[list[int]] = [[] for _ in range(n)]
    bond_sym = {}
    for v in range(1, n):
        open_ = [u for u in range(v) if free[u] > 0]
        if not open_:
            elem[v:], free[v:] = [], []
            n = v
            break
        u = int(rng.choice(open_))
        parent[v] = u
        children[u].append(v)
        double = min(free[u], free[v]) >= 2 and rng.random() < 0.15
        bond_sym[v] = "=" if double else ""
        free[u] -= 1 + double
        free[v] -= 1 + double

    rings: list[list[int]] = [[] for _ in range(n)]
    closed: set[tuple[int, int]] = set()
    label = 1
    for _ in range(int(rng.integers(0, max_rings + 1))):
        if n < 3:
            break
        u, v = sorted(int(a) for a in rng.choice(n, size=2, replace=False))
        if parent[u] == v or parent[v] == u or (u, v) in closed or min(free[u], free[v]) < 1:
            continue
        closed.add((u, v))
        free[u] -= 1
        free[v] -= 1
        rings[u].append(label)
        rings[v].append(label)
        label += 1

    def emit(v: int) -> str:
        out = elem[v] + "".join(str(d) for d in rings[v])
        kids = children[v]
        for c in kids[:-1]:
            out += "(" + bond_sym[c] + emit(c) + ")"
        if kids:
            out += bond_sym[kids[-1]] + emit(kids[-1])
        return out

    return emit(0)


def permute_graph(g: MolecularGraph, rng: np.random.Generator) -> tuple[MolecularGraph, np.ndarray]:
    """Relabel atoms by a random permutation and shuffle bond order and direction.

    Returns the new graph and ``perm`` with ``new_atoms[i] = old_atoms[perm[i]]``.
    """
    perm = rng.permutation(g.n_atoms)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(g.n_atoms)
    atoms = [g.atoms[int(i)] for i in perm]
    bonds = []
    for j in rng.permutation(len(g.bonds)):
        b = g.bonds[int(j)]
        a, c = int(inverse[b.begin]), int(inverse[b.end])
        if rng.random() < 0.5:
            a, c = c, a
        bonds.append(Bond(a, c, b.order))
    return MolecularGraph(atoms, bonds, g.source_smiles, list(g.warnings)), perm
