"""SMILES CSV ingestion into featurized, batchable datasets."""
from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .molgraph import (BatchedGraph, FeatureMatrices, MolecularGraph, SmilesError, batch_graphs,
                       featurize, murcko_scaffold, parse_smiles)

log = logging.getLogger(__name__)

TASK_KINDS = ("classification", "regression")


class DatasetError(ValueError):
    """Fatal problem with a dataset file or its configuration."""


@dataclass
class MoleculeDataset:
    smiles: list[str]
    graphs: list[MolecularGraph]
    features: list[FeatureMatrices]
    labels: np.ndarray  # N x T, NaN where missing
    task: str
    label_names: list[str]
    parse_stats: dict = field(default_factory=dict)
    _scaffolds: list[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise DatasetError(f"task must be one of {TASK_KINDS}, got {self.task!r}")
        self.labels = np.asarray(self.labels, dtype=float).reshape(len(self.graphs), -1)
        self.mask = np.isfinite(self.labels).astype(float)
        if self.task == "classification":
            present = self.labels[self.mask > 0]
            if not np.all((present == 0) | (present == 1)):
                raise DatasetError("classification labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def n_tasks(self) -> int:
        return self.labels.shape[1]

    def batch(self, indices) -> BatchedGraph:
        return batch_graphs([(self.graphs[i], self.features[i]) for i in indices])

    def scaffold_keys(self) -> list[str]:
        if self._scaffolds is None:
            self._scaffolds = [murcko_scaffold(g) for g in self.graphs]
        return self._scaffolds

    @classmethod
    def from_smiles(cls, smiles: Sequence[str], labels, task: str, label_names=None) -> "MoleculeDataset":
        """Build from in-memory SMILES; raises on any unparseable entry."""
        graphs = [parse_smiles(s) for s in smiles]
        labels = np.asarray(labels, dtype=float).reshape(len(graphs), -1)
        names = list(label_names) if label_names else [f"task_{t}" for t in range(labels.shape[1])]
        return cls(list(smiles), graphs, [featurize(g) for g in graphs], labels, task, names,
                   {"read": len(graphs), "parsed": len(graphs), "skipped": 0, "reasons": {}})


def _to_float(cell: str) -> float:
    cell = cell.strip()
    if cell == "":
        return np.nan
    return float(cell)


def _numeric_columns(rows: list[dict], columns: list[str]) -> list[str]:
    out = []
    for col in columns:
        try:
            vals = [_to_float(r[col] or "") for r in rows]
        except ValueError:
            continue
        if any(np.isfinite(vals)):
            out.append(col)
    return out


def infer_task(labels: np.ndarray) -> str:
    present = labels[np.isfinite(labels)]
    return "classification" if np.all((present == 0) | (present == 1)) else "regression"


SMILES_COLUMNS = ("smiles", "mol")


def load_csv_dataset(path, task: str | None = None, label_columns: Sequence[str] | None = None,
                     smiles_column: str | None = None) -> MoleculeDataset:
    """Parse a CSV with a SMILES column plus label columns.

    The SMILES column defaults to the first of ``smiles`` / ``mol`` present.

    Without ``label_columns`` every other column whose non-empty cells are all
    numeric is taken as a label. Rows whose SMILES fail to parse are skipped
    and counted by reason.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    lookup = {h.strip().lower(): h for h in header}
    if smiles_column is None:
        smiles_column = next((c for c in SMILES_COLUMNS if c in lookup), SMILES_COLUMNS[0])
    if smiles_column.lower() not in lookup:
        raise DatasetError(f"{path}: no {smiles_column!r} column in header {header}")
    smiles_key = lookup[smiles_column.lower()]
    if label_columns:
        missing = [c for c in label_columns if c not in header]
        if missing:
            raise DatasetError(f"{path}: label columns not found: {missing}")
        label_columns = list(label_columns)
    else:
        label_columns = _numeric_columns(rows, [h for h in header if h != smiles_key])
    if not label_columns:
        raise DatasetError(f"{path}: no numeric label columns")

    reasons: Counter = Counter()
    smiles, graphs, labels = [], [], []
    for row in rows:
        s = (row.get(smiles_key) or "").strip()
        try:
            y = [_to_float(row.get(c) or "") for c in label_columns]
        except ValueError:
            reasons["bad label"] += 1
            continue
        try:
            g = parse_smiles(s)
        except SmilesError as err:
            reasons[str(err).split(" at position")[0]] += 1
            continue
        smiles.append(s)
        graphs.append(g)
        labels.append(y)
    if not graphs:
        raise DatasetError(f"{path}: no parseable rows ({dict(reasons)})")
    labels = np.asarray(labels, dtype=float)
    task = task or infer_task(labels)
    stats = {
        "read": len(rows),
        "parsed": len(graphs),
        "skipped": len(rows) - len(graphs),
        "reasons": dict(sorted(reasons.items())),
        "with_warnings": sum(1 for g in graphs if g.warnings),
    }
    if stats["skipped"]:
        log.warning("%s: skipped %d rows %s", path.name, stats["skipped"], stats["reasons"])
    return MoleculeDataset(smiles, graphs, [featurize(g) for g in graphs], labels, task,
                           label_columns, stats)
