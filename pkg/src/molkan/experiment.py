"""Config-driven multi-seed runs writing a JSON report, a CSV summary and checkpoints."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import TASK_KINDS, MoleculeDataset, load_csv_dataset
from .mpnn import HEAD_KINDS, HOSTS, UPDATE_KINDS, GnnConfig, GnnModel
from .training import (RunReport, SplitIndices, TrainConfig, aggregate, dumps, environment_note,
                       random_split, scaffold_split, train_loop)

log = logging.getLogger(__name__)

SPLIT_KINDS = ("scaffold", "random")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset_path: str = ""
    task: str | None = None
    label_columns: list[str] | None = None
    smiles_column: str | None = None
    host: str = "gine"
    update_kind: str = "skan"
    head_kind: str = "mlp"
    depth: int = 2
    hidden: int = 256
    M: int = 8
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    split: str = "scaffold"
    split_seed: int = 0
    output_path: str = "runs/experiment"
    gat_heads: int = 4
    skan_in_aggregation: bool = False
    grid_size: int = 8
    spline_order: int = 3
    bandwidth: float | None = None
    save_checkpoints: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self, check_file: bool = True):
        checks = [("host", HOSTS), ("update_kind", UPDATE_KINDS), ("head_kind", HEAD_KINDS),
                  ("split", SPLIT_KINDS)]
        for name, allowed in checks:
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.task is not None and self.task not in TASK_KINDS:
            raise ConfigError(f"task must be one of {TASK_KINDS}, got {self.task!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        for name in ("depth", "hidden", "M", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if check_file and not Path(self.dataset_path).is_file():
            raise ConfigError(f"dataset not found: {self.dataset_path}")
        return self

    def gnn_config(self, n_tasks: int) -> GnnConfig:
        return GnnConfig(host=self.host, depth=self.depth, hidden=self.hidden,
                         update_kind=self.update_kind, head_kind=self.head_kind, n_rbf=self.M,
                         n_tasks=n_tasks, gat_heads=self.gat_heads,
                         skan_in_aggregation=self.skan_in_aggregation, grid_size=self.grid_size,
                         spline_order=self.spline_order, bandwidth=self.bandwidth)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch_size)


def make_split(dataset: MoleculeDataset, kind: str = "scaffold", seed: int = 0) -> SplitIndices:
    if kind == "scaffold":
        return scaffold_split(dataset.scaffold_keys(), seed=seed)
    return random_split(len(dataset), seed=seed)


@dataclass
class ExperimentResult:
    config: dict
    runs: list[RunReport]
    failures: list[dict]
    split_sizes: list[int]
    split_kind: str
    parse_stats: dict

    @property
    def metric_values(self) -> list[float | None]:
        return [r.test_metric for r in self.runs if r.status == "ok"]

    @property
    def summary(self) -> dict:
        return aggregate(self.metric_values)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "runs": [r.to_dict() for r in self.runs],
            "failures": self.failures,
            "split": {"kind": self.split_kind, "sizes": self.split_sizes},
            "parse_stats": self.parse_stats,
            "environment": environment_note(),
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["seed", "test_metric", "epoch_time_s", "param_count"])
        for r in self.runs:
            epoch_time = float(np.mean(r.epoch_seconds)) if r.epoch_seconds else ""
            writer.writerow([r.seed, "" if r.test_metric is None else repr(r.test_metric),
                             epoch_time if epoch_time == "" else f"{epoch_time:.6f}", r.param_count])
        return buf.getvalue()


def run_experiment(config: ExperimentConfig, dataset: MoleculeDataset | None = None,
                   write: bool = True) -> ExperimentResult:
    """Split once, train one model per seed, aggregate, and write outputs."""
    config.validate(check_file=dataset is None)
    if dataset is None:
        dataset = load_csv_dataset(config.dataset_path, task=config.task,
                                   label_columns=config.label_columns,
                                   smiles_column=config.smiles_column)
    split = make_split(dataset, config.split, config.split_seed)
    log.info("split %s sizes %s", split.kind, split.sizes())
    out_dir = Path(config.output_path)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    runs, failures = [], []
    for seed in config.seeds:
        model = GnnModel(config.gnn_config(dataset.n_tasks), seed=seed)
        try:
            report = train_loop(model, dataset, split, config.train_config(), seed=seed,
                                config_echo=config.to_dict())
        except Exception as err:  # a failed seed must not sink the others
            log.exception("seed %d failed", seed)
            failures.append({"seed": seed, "error": f"{type(err).__name__}: {err}"})
            continue
        report.parse_stats = dataset.parse_stats
        runs.append(report)
        if report.status != "ok":
            failures.append({"seed": seed, "error": report.diagnostic})
        if write and config.save_checkpoints:
            save_checkpoint(model, out_dir / f"model_seed{seed}.ckpt")
    result = ExperimentResult(config.to_dict(), runs, failures, list(split.sizes()), split.kind,
                              dataset.parse_stats)
    if write:
        (out_dir / "report.json").write_text(result.to_json())
        (out_dir / "summary.csv").write_text(result.summary_csv())
    return result


def split_stats(dataset: MoleculeDataset) -> dict:
    """Scaffold group-size histogram and the resulting split sizes."""
    keys = dataset.scaffold_keys()
    counts: dict[str, int] = {}
    for k in keys:
        counts[k] = counts.get(k, 0) + 1
    hist: dict[int, int] = {}
    for c in counts.values():
        hist[c] = hist.get(c, 0) + 1
    split = scaffold_split(keys)
    return {
        "molecules": len(dataset),
        "scaffold_groups": len(counts),
        "acyclic": counts.get("", 0),
        "largest_group": max(counts.values()),
        "group_size_histogram": {str(size): hist[size] for size in sorted(hist)},
        "split_kind": split.kind,
        "split_sizes": list(split.sizes()),
        "parse_stats": dataset.parse_stats,
    }
