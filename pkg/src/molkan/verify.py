"""Self-checks over every module: gradients, invariants and metric oracles.

Each check returns a :class:`CheckResult`; :func:`run_verify` runs them all
and reports. Nothing here reads datasets, so it runs on a fresh install.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .kan import FAMILIES, BSplineKanLayer, FastKanLayer, SkanLayer, bspline_basis, make_layer, uniform_knots
from .molgraph import batch_graphs, featurize, murcko_scaffold, parse_smiles
from .molgraph.synth import permute_graph, random_smiles
from .mpnn import HEAD_KINDS, HOSTS, UPDATE_KINDS, GnnConfig, GnnModel
from .training import roc_auc, scaffold_split

GRAD_STEP = 1e-5
GRAD_TOL = 1e-4
OP_TOL = 1e-6
CHECK_MOLECULE = "CC(=O)N"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<28} {self.detail} ({self.seconds:.1f}s)"


# ---------------------------------------------------------------- op gradients


def _u(rng, *shape):
    return rng.uniform(-2.0, 2.0, shape)


def _op_case(kind: str, rng):
    """(parameters, f(tape) -> tensor) exercising exactly one op kind."""
    if kind in ("add", "sub", "mul"):
        a, b = Parameter(_u(rng, 3, 4), "a"), Parameter(_u(rng, 4), "b")
        fn = {"add": ad.add, "sub": ad.sub, "mul": ad.mul}[kind]
        return [a, b], lambda t: fn(t.param(a), t.param(b))
    if kind == "div":
        # denominators kept away from the pole at 0
        a = Parameter(_u(rng, 3, 4), "a")
        b = Parameter(rng.uniform(0.5, 2.0, (3, 1)) * rng.choice([-1.0, 1.0], (3, 1)), "b")
        return [a, b], lambda t: ad.div(t.param(a), t.param(b))
    x = Parameter(_u(rng, 3, 4), "x")
    unary = {
        "exp": ad.exp, "square": ad.square, "silu": ad.silu, "relu": ad.relu,
        "leaky_relu": lambda v: ad.leaky_relu(v, 0.2), "clip": lambda v: ad.clip(v, -1.0, 1.0),
        "sum": lambda v: ad.sum_(v, axis=0, keepdims=True), "mean": lambda v: ad.mean(v, axis=1),
        "transpose": ad.transpose, "reshape": lambda v: ad.reshape(v, (2, 6)),
        "slice": lambda v: ad.slice_(v, (slice(1, None), slice(None, None, 2))),
        "gather_rows": lambda v: ad.gather_rows(v, np.array([0, 2, 2, 1])),
        "scatter_add": lambda v: ad.scatter_add(v, np.array([1, 0, 1]), 4),
    }
    if kind in unary:
        return [x], lambda t: unary[kind](t.param(x))
    if kind == "broadcast":
        r = Parameter(_u(rng, 1, 4), "r")
        return [r], lambda t: ad.broadcast(t.param(r), (3, 4))
    if kind == "matmul":
        w = Parameter(_u(rng, 4, 2), "w")
        return [x, w], lambda t: ad.matmul(t.param(x), t.param(w))
    if kind == "concat":
        y = Parameter(_u(rng, 2, 4), "y")
        return [x, y], lambda t: ad.concat([t.param(x), t.param(y)], axis=0)
    if kind == "bce":
        labels = rng.integers(0, 2, (3, 4)).astype(float)
        mask = (rng.random((3, 4)) < 0.7).astype(float)
        mask[0, 0] = 1.0
        return [x], lambda t: ad.bce_with_logits(t.param(x), labels, mask)
    raise KeyError(kind)


def op_gradient_errors(kinds=ad.OP_KINDS, trials: int = 20, seed: int = 0) -> dict[str, float]:
    """Worst relative error per op kind over ``trials`` random inputs."""
    rng = np.random.default_rng(seed)
    worst = {}
    for kind in kinds:
        err = 0.0
        for _ in range(trials):
            params, f = _op_case(kind, rng)
            shape = f(ad.Tape()).shape
            cot = rng.normal(size=shape) if shape else None
            rep = ad.grad_check(f, params, step=GRAD_STEP, tol=OP_TOL, cotangent=cot)
            err = max(err, rep.max_rel_error)
        worst[kind] = err
    return worst


def check_op_gradients() -> CheckResult:
    worst = op_gradient_errors()
    bad = [k for k, e in worst.items() if e > OP_TOL]
    top = max(worst.values())
    detail = f"{len(worst)} op kinds, max rel err {top:.1e}"
    if bad:
        detail += f"; failing: {', '.join(bad)}"
    return CheckResult("op gradients", not bad, detail)


def check_negative_control(kind: str = "mul") -> CheckResult:
    """A scaled backward rule must be caught and attributed to its op."""

    def corrupt(vjp):
        return lambda g: tuple(None if v is None else 1.5 * v for v in vjp(g))

    with ad.override_vjp(kind, corrupt):
        worst = op_gradient_errors(trials=2)
    flagged = [k for k, e in worst.items() if e > OP_TOL]
    return CheckResult("negative control", flagged == [kind],
                       f"corrupted {kind!r}, flagged {flagged}")


# ---------------------------------------------------------------- KAN layers


def check_kan_gradients(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, (6, 4))
    errs = {}
    for family in FAMILIES:
        layer = make_layer(family, 4, 4, n_rbf=5, grid_size=5, seed=seed)
        rep = ad.grad_check(lambda t: ad.mean(layer(t, x)), layer.parameters(),
                            step=GRAD_STEP, tol=GRAD_TOL)
        errs[family] = rep.max_rel_error
    ok = all(e <= GRAD_TOL for e in errs.values())
    return CheckResult("KAN layer gradients", ok,
                       ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def check_partition_of_unity() -> CheckResult:
    worst = 0.0
    for k in range(1, 6):
        for grid in (3, 5, 8, 11):
            knots = uniform_knots(grid, k)
            for x in np.linspace(-2.0, 2.0, 101):
                worst = max(worst, abs(bspline_basis(x, knots, k).sum() - 1.0))
    return CheckResult("partition of unity", worst <= 1e-12, f"max |sum - 1| = {worst:.1e}")


def check_parameter_counts() -> CheckResult:
    sizes = [(1, 1), (1, 7), (2, 3), (3, 2), (4, 4), (5, 1), (8, 3), (16, 16), (7, 11), (32, 8)]
    bad = []
    for (n_in, n_out), m in itertools.product(sizes, (3, 8)):
        g, k = m, 3
        expected = {
            "skan": n_in * n_out * m + n_in * n_out + 2 * m,
            "fastkan": n_in * n_out * m + n_in * n_out,
            "bspline_kan": n_in * n_out * (g + k) + 2 * n_in * n_out,
        }
        layers = {
            "skan": SkanLayer(n_in, n_out, n_rbf=m),
            "fastkan": FastKanLayer(n_in, n_out, n_rbf=m),
            "bspline_kan": BSplineKanLayer(n_in, n_out, grid_size=g, spline_order=k),
        }
        for fam, layer in layers.items():
            counted = sum(p.value.size for _, p in layer.named_parameters())
            if counted != expected[fam]:
                bad.append((fam, n_in, n_out, m, counted, expected[fam]))
    return CheckResult("parameter counts", not bad, f"{len(sizes) * 2} size points x 3 families" +
                       (f"; mismatches {bad[:3]}" if bad else ""))


# ---------------------------------------------------------------- models


def randomize_offsets(model, seed: int = 7):
    """Move biases and eps off zero so checks avoid relu kinks at exact zeros."""
    rng = np.random.default_rng(seed)
    for name, p in model.named_parameters():
        if name.endswith("bias") or name.endswith("eps"):
            p.value[...] = rng.uniform(-0.5, 0.5, p.shape)


def model_gradient_error(host, update_kind, head_kind, smiles=CHECK_MOLECULE, seed=1) -> float:
    g = parse_smiles(smiles)
    batch = batch_graphs([(g, featurize(g))])
    cfg = GnnConfig(host=host, hidden=4, update_kind=update_kind, head_kind=head_kind,
                    n_rbf=3, grid_size=3, gat_heads=2, n_tasks=2)
    model = GnnModel(cfg, seed=seed)
    randomize_offsets(model)
    labels = np.array([[1.0, 0.0]])
    mask = np.ones_like(labels)
    rep = ad.grad_check(lambda t: ad.bce_with_logits(model(t, batch), labels, mask),
                        model.parameters(), step=GRAD_STEP, tol=GRAD_TOL)
    return rep.max_rel_error


def check_model_gradients() -> CheckResult:
    errs = {}
    for combo in itertools.product(HOSTS, UPDATE_KINDS, HEAD_KINDS):
        errs[combo] = model_gradient_error(*combo)
    bad = ["/".join(c) for c, e in errs.items() if e > GRAD_TOL]
    detail = f"{len(errs)} combos on {CHECK_MOLECULE}, max rel err {max(errs.values()):.1e}"
    if bad:
        detail += f"; failing: {', '.join(bad)}"
    return CheckResult("model gradients", not bad, detail)


def random_molecules(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [parse_smiles(random_smiles(rng)) for _ in range(n)]


def permutation_gap(host: str, n_molecules: int = 100, seed: int = 0, hidden: int = 16) -> float:
    rng = np.random.default_rng(seed + 1)
    graphs = random_molecules(n_molecules, seed)
    permuted = [permute_graph(g, rng)[0] for g in graphs]
    model = GnnModel(GnnConfig(host=host, hidden=hidden, n_tasks=2), seed=seed)
    randomize_offsets(model)
    a = model(ad.Tape(), batch_graphs([(g, featurize(g)) for g in graphs])).data
    b = model(ad.Tape(), batch_graphs([(g, featurize(g)) for g in permuted])).data
    return float(np.max(np.abs(a - b)))


def check_permutation_invariance() -> CheckResult:
    gaps = {h: permutation_gap(h) for h in HOSTS}
    return CheckResult("permutation invariance", all(v <= 1e-10 for v in gaps.values()),
                       "100 molecules per host, max gap " + ", ".join(f"{h} {v:.1e}" for h, v in gaps.items()))


def check_batching() -> CheckResult:
    graphs = random_molecules(12, seed=3)
    model = GnnModel(GnnConfig(host="gat", hidden=16, n_tasks=3), seed=0)
    randomize_offsets(model)
    together = model(ad.Tape(), batch_graphs([(g, featurize(g)) for g in graphs])).data
    alone = np.concatenate([model(ad.Tape(), batch_graphs([(g, featurize(g))])).data for g in graphs])
    gap = float(np.max(np.abs(together - alone)))
    return CheckResult("batching transparency", gap <= 1e-12, f"max gap {gap:.1e}")


# ---------------------------------------------------------------- metrics and splits


def pairwise_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """O(n^2) reference: fraction of (pos, neg) pairs ranked correctly, ties half."""
    pos, neg = scores[labels == 1], scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size))


def check_roc_auc(instances: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 501))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = np.round(rng.random(n), int(rng.integers(1, 3)))  # coarse rounding forces ties
        _, auc = roc_auc(scores, labels)
        worst = max(worst, abs(auc - pairwise_auc(scores, labels)))
    return CheckResult("roc-auc oracle", worst <= 1e-12, f"{instances} tied instances, max gap {worst:.1e}")


def split_problems(keys, split) -> list[str]:
    problems = []
    parts = [set(split.train), set(split.valid), set(split.test)]
    if sum(len(p) for p in parts) != len(keys) or set().union(*parts) != set(range(len(keys))):
        problems.append("not a partition")
    if split.kind == "scaffold":
        owners = [{keys[i] for i in p} for p in parts]
        if owners[0] & owners[1] or owners[0] & owners[2] or owners[1] & owners[2]:
            problems.append("scaffold shared across splits")
    return problems


def check_split() -> CheckResult:
    graphs = random_molecules(300, seed=5)
    keys = [murcko_scaffold(g) for g in graphs]
    first = scaffold_split(keys)
    again = scaffold_split([murcko_scaffold(g) for g in graphs])
    problems = split_problems(keys, first)
    if (first.train, first.valid, first.test) != (again.train, again.valid, again.test):
        problems.append("not deterministic")
    return CheckResult("scaffold split", not problems,
                       f"sizes {first.sizes()} over {len(set(keys))} scaffolds" +
                       (f"; {problems}" if problems else ""))


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "ops": check_op_gradients,
    "negative-control": check_negative_control,
    "kan": check_kan_gradients,
    "partition-of-unity": check_partition_of_unity,
    "param-counts": check_parameter_counts,
    "models": check_model_gradients,
    "permutation": check_permutation_invariance,
    "batching": check_batching,
    "roc-auc": check_roc_auc,
    "split": check_split,
}


def run_verify(names=None, emit=print) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        res = CHECKS[name]()
        res.seconds = time.perf_counter() - t0
        emit(res.line())
        results.append(res)
    return results


def fit_target(x: np.ndarray) -> np.ndarray:
    return np.exp(np.sin(np.pi * x[:, 0]) + x[:, 1] ** 2)


def function_fit_rmse(n_rbf: int = 8, n_points: int = 1000, steps: int = 2000, lr: float = 1e-2,
                      data_seed: int = 0, seed: int = 0) -> float:
    """Train RMSE of a [2, 5, 1] SKAN network fitted full-batch to ``fit_target`` on [-1, 1]^2."""
    from .estimators import KANRegressor

    x = np.random.default_rng(data_seed).uniform(-1.0, 1.0, size=(n_points, 2))
    y = fit_target(x)
    est = KANRegressor(hidden_layer_sizes=(5,), family="skan", n_rbf=n_rbf, lr=lr, max_iter=steps,
                       random_state=seed).fit(x, y)
    return float(np.sqrt(np.mean((est.predict(x) - y) ** 2)))
