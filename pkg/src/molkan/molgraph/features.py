"""One-hot atom/bond features and disjoint-union batching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .smiles import BOND_ORDERS, ORGANIC, MolecularGraph

ELEMENT_VOCAB = ORGANIC + ("Other",)
MAX_DEGREE = 5
CHARGES = (-2, -1, 0, 1, 2)
MAX_HYDROGENS = 4

# column offsets of each one-hot block
_ELEM = 0
_DEG = _ELEM + len(ELEMENT_VOCAB)
_CHG = _DEG + MAX_DEGREE + 1
_ARO = _CHG + len(CHARGES)
_HYD = _ARO + 1
NODE_DIM = _HYD + MAX_HYDROGENS + 1
EDGE_DIM = len(BOND_ORDERS)


@dataclass
class FeatureMatrices:
    node: np.ndarray  # N x NODE_DIM
    edge: np.ndarray  # 2|bonds| x EDGE_DIM, rows aligned with edge_index


def element_index(element: str) -> int:
    try:
        return ELEMENT_VOCAB.index(element)
    except ValueError:
        return len(ELEMENT_VOCAB) - 1


def featurize(g: MolecularGraph) -> FeatureMatrices:
    node = np.zeros((g.n_atoms, NODE_DIM))
    for i, atom in enumerate(g.atoms):
        node[i, _ELEM + element_index(atom.element)] = 1.0
        node[i, _DEG + min(atom.degree, MAX_DEGREE)] = 1.0
        node[i, _CHG + CHARGES.index(max(-2, min(2, atom.formal_charge)))] = 1.0
        node[i, _ARO] = float(atom.aromatic)
        node[i, _HYD + min(atom.implicit_h, MAX_HYDROGENS)] = 1.0
    edge = np.zeros((2 * len(g.bonds), EDGE_DIM))
    for b, bond in enumerate(g.bonds):
        col = BOND_ORDERS.index(bond.order)
        edge[2 * b, col] = 1.0
        edge[2 * b + 1, col] = 1.0
    return FeatureMatrices(node, edge)


@dataclass
class BatchedGraph:
    node: np.ndarray
    edge: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    graph_id: np.ndarray
    n_graphs: int

    @property
    def n_nodes(self) -> int:
        return self.node.shape[0]

    def degree(self) -> np.ndarray:
        """In-degree per node (equal to out-degree; edges are symmetric)."""
        return np.bincount(self.dst, minlength=self.n_nodes)

    def graph_sizes(self) -> np.ndarray:
        return np.bincount(self.graph_id, minlength=self.n_graphs)


def batch_graphs(items: Sequence[tuple[MolecularGraph, FeatureMatrices]]) -> BatchedGraph:
    """Disjoint union of ``(graph, features)`` pairs, preserving order."""
    if len(items) == 0:
        raise ValueError("cannot batch an empty list of graphs")
    nodes, edges, srcs, dsts, gids = [], [], [], [], []
    offset = 0
    for k, (g, feats) in enumerate(items):
        src, dst = g.edge_index
        nodes.append(feats.node)
        edges.append(feats.edge)
        srcs.append(src + offset)
        dsts.append(dst + offset)
        gids.append(np.full(g.n_atoms, k, dtype=np.int64))
        offset += g.n_atoms
    return BatchedGraph(
        node=np.concatenate(nodes, axis=0),
        edge=np.concatenate(edges, axis=0).reshape(-1, EDGE_DIM),
        src=np.concatenate(srcs).astype(np.int64),
        dst=np.concatenate(dsts).astype(np.int64),
        graph_id=np.concatenate(gids),
        n_graphs=len(items),
    )
