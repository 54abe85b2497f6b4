"""SMILES parsing, featurization, scaffolds and batching."""
from .features import (EDGE_DIM, NODE_DIM, BatchedGraph, FeatureMatrices, batch_graphs,
                       featurize)
from .scaffold import framework_atoms, murcko_scaffold, wl_hash
from .smiles import Atom, Bond, MolecularGraph, SmilesError, parse_smiles

__all__ = [
    "Atom", "Bond", "MolecularGraph", "SmilesError", "parse_smiles",
    "FeatureMatrices", "BatchedGraph", "featurize", "batch_graphs", "NODE_DIM", "EDGE_DIM",
    "murcko_scaffold", "framework_atoms", "wl_hash",
]
