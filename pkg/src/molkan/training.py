"""Optimizer, losses, metrics, scaffold splitting and the epoch loop."""
from __future__ import annotations

import json
import logging
import math
import platform
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor
from .molgraph import batch_graphs

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- optimizer


class Adam:
    """Adam with bias correction; updates ``Parameter.value`` in place and clears grads."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.skipped = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                log.warning("non-finite gradient for %s; step skipped", p.name)
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        for p in self.params:
            p.zero_grad()


# ---------------------------------------------------------------- losses and metrics


def sigmoid(z):
    return ad.sigmoid_np(np.asarray(z, dtype=float))


def masked_bce_loss(logits: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    return ad.bce_with_logits(logits, labels, mask)


def mse_loss(pred: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Masked mean squared error; targets are in normalized units."""
    targets = np.asarray(targets, dtype=float)
    mask = np.ones_like(targets) if mask is None else np.asarray(mask, dtype=float)
    count = mask.sum()
    if count == 0:
        return ad.sum_(pred * 0.0)
    diff = (pred - np.where(mask > 0, targets, 0.0)) * mask
    return ad.sum_(ad.square(diff)) * (1.0 / count)


def mae_metric(pred: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None) -> list[float | None]:
    """Per-task mean absolute error; tasks without labels give ``None``."""
    pred = np.asarray(pred, dtype=float).reshape(len(pred), -1)
    targets = np.asarray(targets, dtype=float).reshape(pred.shape)
    mask = np.isfinite(targets) if mask is None else np.asarray(mask, dtype=bool).reshape(pred.shape)
    out = []
    for t in range(pred.shape[1]):
        sel = mask[:, t]
        out.append(float(np.mean(np.abs(pred[sel, t] - targets[sel, t]))) if sel.any() else None)
    return out


def _auc_single(scores: np.ndarray, labels: np.ndarray) -> float | None:
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average ranks; ties count one half
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(scores, labels, mask=None) -> tuple[list[float | None], float | None]:
    """Rank-sum ROC-AUC per task and the macro average over tasks that have both classes."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.ndim == 1:
        scores, labels = scores[:, None], labels[:, None]
        mask = None if mask is None else np.asarray(mask)[:, None]
    mask = np.isfinite(labels) if mask is None else np.asarray(mask, dtype=bool)
    per_task = []
    for t in range(scores.shape[1]):
        sel = mask[:, t]
        per_task.append(_auc_single(scores[sel, t], labels[sel, t]))
    valid = [a for a in per_task if a is not None]
    return per_task, (float(np.mean(valid)) if valid else None)


# ---------------------------------------------------------------- tasks and splits


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, y: np.ndarray, mask: np.ndarray) -> "Normalizer":
        n_tasks = y.shape[1]
        mean, std = np.zeros(n_tasks), np.ones(n_tasks)
        for t in range(n_tasks):
            vals = y[mask[:, t] > 0, t]
            if vals.size:
                mean[t] = vals.mean()
                s = vals.std()
                if not np.isfinite(s) or s == 0:
                    log.warning("task %d has zero spread on the train split; std set to 1", t)
                    s = 1.0
                std[t] = s
        return cls(mean, std)

    def transform(self, y):
        return (y - self.mean) / self.std

    def inverse(self, z):
        return z * self.std + self.mean


@dataclass
class SplitIndices:
    train: list[int]
    valid: list[int]
    test: list[int]
    kind: str = "scaffold"

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.valid), len(self.test)


def random_split(n: int, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> SplitIndices:
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(fractions[0] * n))
    n_valid = int(math.floor(fractions[1] * n))
    return SplitIndices(sorted(perm[:n_train].tolist()), sorted(perm[n_train:n_train + n_valid].tolist()),
                        sorted(perm[n_train + n_valid:].tolist()), kind="random")


def scaffold_groups(keys: Sequence[str]) -> list[tuple[str, list[int]]]:
    """Groups sorted by size (descending) then key (ascending)."""
    groups: dict[str, list[int]] = defaultdict(list)
    for i, k in enumerate(keys):
        groups[k].append(i)
    return sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))


def scaffold_split(keys: Sequence[str], fractions=(0.8, 0.1, 0.1), seed: int = 0) -> SplitIndices:
    """Greedy whole-group fill: train to >= 80%, then valid to >= 90%, rest test."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    n = len(keys)
    groups = scaffold_groups(keys)
    if len(groups) < 3:
        log.warning("only %d scaffold groups; falling back to a random split", len(groups))
        return random_split(n, fractions, seed)
    train_cut = fractions[0] * n
    valid_cut = (fractions[0] + fractions[1]) * n
    train, valid, test = [], [], []
    for _, members in groups:
        if len(train) < train_cut - 1e-9:
            train.extend(members)
        elif len(train) + len(valid) < valid_cut - 1e-9:
            valid.extend(members)
        else:
            test.extend(members)
    return SplitIndices(sorted(train), sorted(valid), sorted(test), kind="scaffold")


# ---------------------------------------------------------------- loop


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    eval_batch_size: int = 256


@dataclass
class RunReport:
    config: dict
    seed: int
    task: str
    metric: str
    train_loss: list[float] = field(default_factory=list)
    valid_metric: list[float | None] = field(default_factory=list)
    selected_epoch: int | None = None
    test_metric: float | None = None
    test_per_task: list[float | None] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    param_count: int = 0
    status: str = "ok"
    diagnostic: str = ""
    skipped_steps: int = 0
    environment: str = field(default_factory=lambda: environment_note())
    parse_stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def environment_note() -> str:
    return f"{platform.system()} {platform.machine()} python {platform.python_version()} numpy {np.__version__}"


def _finite_or_none(x):
    return None if x is None or not np.isfinite(x) else float(x)


def predict_dataset(model, dataset, indices, batch_size=256) -> np.ndarray:
    outs = []
    for start in range(0, len(indices), batch_size):
        idx = indices[start:start + batch_size]
        outs.append(model(Tape(), dataset.batch(idx)).data)
    if not outs:
        return np.zeros((0, dataset.n_tasks))
    return np.concatenate(outs, axis=0)


def evaluate(model, dataset, indices, normalizer: Normalizer | None = None, batch_size=256):
    """Return (headline metric or None, per-task list) on ``indices``."""
    if len(indices) == 0:
        return None, []
    pred = predict_dataset(model, dataset, indices, batch_size)
    y, mask = dataset.labels[indices], dataset.mask[indices]
    if dataset.task == "classification":
        per_task, macro = roc_auc(pred, y, mask)
        return macro, per_task
    if normalizer is not None:
        pred = normalizer.inverse(pred)
    per_task = mae_metric(pred, y, mask)
    vals = [v for v in per_task if v is not None]
    return (float(np.mean(vals)) if vals else None), per_task


def better(a, b, task: str) -> bool:
    if a is None:
        return False
    if b is None:
        return True
    return a > b if task == "classification" else a < b


def train_loop(model, dataset, split: SplitIndices, config: TrainConfig, seed: int = 0,
               config_echo: dict | None = None, normalizer: Normalizer | None = None) -> RunReport:
    """Minibatch Adam training with best-validation model selection.

    For regression the targets are standardized with ``normalizer``, fitted
    on the train split when not given. The model ends holding the selected
    epoch's parameters.
    """
    task = dataset.task
    report = RunReport(config=config_echo or {}, seed=seed, task=task,
                       metric="roc_auc" if task == "classification" else "mae",
                       param_count=model.parameter_count())
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng(seed)
    train_idx = np.asarray(split.train, dtype=np.int64)
    targets = dataset.labels
    if task == "regression":
        if normalizer is None:
            normalizer = Normalizer.fit(dataset.labels[train_idx], dataset.mask[train_idx])
        targets = normalizer.transform(dataset.labels)
    targets = np.where(dataset.mask > 0, targets, 0.0)

    best_state, best_metric = None, None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = train_idx[rng.permutation(len(train_idx))]
        total, seen = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            tape = Tape()
            out = model(tape, dataset.batch(idx))
            if task == "classification":
                loss = masked_bce_loss(out, targets[idx], dataset.mask[idx])
            else:
                loss = mse_loss(out, targets[idx], dataset.mask[idx])
            value = loss.item()
            if not np.isfinite(value):
                report.status = "diverged"
                report.diagnostic = f"non-finite loss at epoch {epoch} batch {start // config.batch_size}"
                report.epoch_seconds.append(time.perf_counter() - t0)
                return report
            ad.backward(loss)
            opt.step()
            total += value * len(idx)
            seen += len(idx)
        report.train_loss.append(total / max(seen, 1))
        metric, _ = evaluate(model, dataset, split.valid, normalizer, config.eval_batch_size)
        report.valid_metric.append(_finite_or_none(metric))
        report.epoch_seconds.append(time.perf_counter() - t0)
        if best_state is None or better(metric, best_metric, task):
            best_state, best_metric = model.state_dict(), metric
            report.selected_epoch = epoch
        log.info("epoch %d loss %.4f valid %s", epoch, report.train_loss[-1], metric)
    if best_state is not None:
        model.load_state_dict(best_state)
    test_metric, per_task = evaluate(model, dataset, split.test, normalizer, config.eval_batch_size)
    report.test_metric = _finite_or_none(test_metric)
    report.test_per_task = [_finite_or_none(v) for v in per_task]
    report.skipped_steps = opt.skipped
    return report


def aggregate(values: Sequence[float | None]) -> dict:
    """Mean and sample std over completed values; std is None for a single value."""
    vals = [v for v in values if v is not None]
    if not vals:
        return {"mean": None, "std": None, "n": 0}
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
    return {"mean": float(np.mean(vals)), "std": std, "n": len(vals)}
