"""Forward+backward timing of one KAN layer per family."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .kan import FAMILIES, make_layer

WARMUP = 3


@dataclass
class BenchRow:
    family: str
    median_s: float
    min_s: float
    param_count: int
    repeats: int


def time_layer(layer, x: np.ndarray, repeats: int) -> list[float]:
    def once():
        tape = ad.Tape()
        out = layer(tape, tape.watch(x))
        ad.backward(ad.sum_(out))

    for _ in range(WARMUP):
        once()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        once()
        times.append(time.perf_counter() - t0)
    layer.zero_grad()
    return times


def bench_kan_variants(n_in: int = 64, n_out: int | None = None, batch: int = 128, M: int = 8,
                       G: int = 8, k: int = 3, repeats: int = 20, seed: int = 0,
                       families=FAMILIES) -> list[BenchRow]:
    """Median wall-clock of forward+backward per family on one shared random batch."""
    if repeats < 10:
        raise ValueError("repeats must be >= 10")
    if min(n_in, batch, M, G, k) < 1:
        raise ValueError("sizes must be positive")
    n_out = n_in if n_out is None else n_out
    x = np.random.default_rng(seed).uniform(-2.0, 2.0, (batch, n_in))
    rows = []
    for family in families:
        layer = make_layer(family, n_in, n_out, n_rbf=M, grid_size=G, spline_order=k, seed=seed)
        times = time_layer(layer, x, repeats)
        rows.append(BenchRow(family, float(np.median(times)), float(np.min(times)),
                             layer.parameter_count(), repeats))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    lines = [f"{'family':<12} {'median_ms':>10} {'min_ms':>10} {'params':>9}"]
    for r in rows:
        lines.append(f"{r.family:<12} {r.median_s * 1e3:10.3f} {r.min_s * 1e3:10.3f} {r.param_count:9d}")
    return "\n".join(lines)


def rows_to_dicts(rows):
    return [asdict(r) for r in rows]
