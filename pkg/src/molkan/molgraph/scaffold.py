"""Bemis-Murcko frameworks keyed by a Weisfeiler-Leman hash."""
from __future__ import annotations

import hashlib

from .smiles import MolecularGraph


def _digest(text: str, size: int = 8) -> str:
    return hashlib.blake2b(text.encode(), digest_size=size).hexdigest()


def framework_atoms(g: MolecularGraph) -> list[int]:
    """Atoms left after repeatedly stripping terminal non-ring atoms; [] if acyclic."""
    n = g.n_atoms
    if len(g.bonds) < n:
        # a connected graph with fewer bonds than atoms is a tree
        return []
    adj = [set() for _ in range(n)]
    for b in g.bonds:
        adj[b.begin].add(b.end)
        adj[b.end].add(b.begin)
    alive = set(range(n))
    leaves = [v for v in range(n) if len(adj[v]) <= 1]
    while leaves:
        v = leaves.pop()
        if v not in alive:
            continue
        alive.discard(v)
        for u in adj[v]:
            adj[u].discard(v)
            if u in alive and len(adj[u]) <= 1:
                leaves.append(u)
        adj[v].clear()
    return sorted(alive)


def wl_hash(g: MolecularGraph, keep: list[int] | None = None) -> str:
    """WL refinement over (element, aromatic) colors and bond-order labels, |V| rounds."""
    keep = list(range(g.n_atoms)) if keep is None else keep
    if not keep:
        return ""
    kept = set(keep)
    nbrs = {v: [] for v in keep}
    for b in g.bonds:
        if b.begin in kept and b.end in kept:
            nbrs[b.begin].append((b.end, b.order))
            nbrs[b.end].append((b.begin, b.order))
    colors = {v: f"{g.atoms[v].element}{'a' if g.atoms[v].aromatic else ''}" for v in keep}
    for _ in range(len(keep)):
        colors = {
            v: _digest(colors[v] + "|" + ",".join(sorted(f"{o}:{colors[u]}" for u, o in nbrs[v])))
            for v in keep
        }
    return _digest(";".join(sorted(colors.values())), size=16)


def murcko_scaffold(g: MolecularGraph) -> str:
    """Hex key of the ring-and-linker framework; "" for acyclic molecules."""
    return wl_hash(g, framework_atoms(g))
