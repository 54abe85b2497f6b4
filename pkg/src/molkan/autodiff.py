"""Dense float64 tensors with a dynamic reverse-mode tape.

A :class:`Tape` is created per forward pass. Parameters enter the tape as
leaves via :meth:`Tape.param`; every op applied to a tensor that lives on a
tape appends one node holding a vector-Jacobian closure. :func:`backward`
walks the nodes in reverse and accumulates into ``Parameter.grad``.

Tensors without a tape are constants and never receive gradients.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

DTYPE = np.float64
_compute = {"dtype": DTYPE}


@contextmanager
def precision(dtype):
    """Evaluate tensors in ``dtype`` inside the block (parameters stay float64).

    Used by :func:`grad_check` to run the finite-difference oracle in extended
    precision so its roundoff sits well below the analytic gradients it checks.
    """
    prev = _compute["dtype"]
    _compute["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _compute["dtype"] = prev


class DimensionError(ValueError):
    """Raised when op inputs do not satisfy the op's shape rule."""


class Parameter:
    """A learnable array with a same-shape gradient accumulator."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name: str = ""):
        self.value = np.array(value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Tensor:
    """Array value plus an optional handle into a tape."""

    __slots__ = ("data", "tape", "node")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, tape: "Tape | None" = None, node: int | None = None):
        self.data = np.asarray(data, dtype=_compute["dtype"])
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = "const" if self.tape is None else f"node={self.node}"
        return f"Tensor(shape={self.data.shape}, {tag})"

    # operator sugar; every method routes through the op functions below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


@dataclass
class _Node:
    inputs: tuple[int | None, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None
    param: Parameter | None = None


@dataclass
class Tape:
    """Append-only record of ops; node ids are list positions."""

    nodes: list[_Node] = field(default_factory=list)
    # op kinds seen on this tape, used by the op-level gradient suite
    kinds: list[str] = field(default_factory=list)
    _leaf_of: dict[int, int] = field(default_factory=dict)

    def param(self, p: Parameter) -> Tensor:
        """Return the leaf tensor for ``p``; one leaf per parameter per tape."""
        key = id(p)
        if key in self._leaf_of:
            nid = self._leaf_of[key]
        else:
            nid = len(self.nodes)
            self.nodes.append(_Node((), None, p))
            self.kinds.append("leaf")
            self._leaf_of[key] = nid
        return Tensor(p.value, self, nid)

    def watch(self, data) -> Tensor:
        """A gradient-tracked leaf not bound to any Parameter."""
        nid = len(self.nodes)
        self.nodes.append(_Node((), None, None))
        self.kinds.append("leaf")
        return Tensor(np.array(data, dtype=_compute["dtype"]), self, nid)

    def __len__(self):
        return len(self.nodes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def _tape_of(inputs: Iterable[Tensor]) -> Tape | None:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("tensors from two different tapes cannot be combined")
            tape = t.tape
    return tape


OP_KINDS = ("add", "sub", "mul", "div", "exp", "square", "silu", "relu", "leaky_relu", "clip",
            "sum", "mean", "matmul", "transpose", "reshape", "broadcast", "concat", "slice",
            "gather_rows", "scatter_add", "bce")

# overridable per kind; the negative-control check swaps one entry out
_VJP_WRAPPERS: dict[str, Callable] = {}


@contextmanager
def override_vjp(kind: str, wrapper: Callable):
    """Wrap the backward rule of op ``kind`` inside the block (fault injection)."""
    if kind not in OP_KINDS:
        raise ValueError(f"unknown op kind {kind!r}")
    prev = _VJP_WRAPPERS.get(kind)
    _VJP_WRAPPERS[kind] = wrapper
    try:
        yield
    finally:
        if prev is None:
            _VJP_WRAPPERS.pop(kind, None)
        else:
            _VJP_WRAPPERS[kind] = prev


def _record(kind: str, out: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    tape = _tape_of(inputs)
    if tape is None:
        return Tensor(out)
    wrapper = _VJP_WRAPPERS.get(kind)
    if wrapper is not None:
        vjp = wrapper(vjp)
    nid = len(tape.nodes)
    tape.nodes.append(_Node(tuple(t.node for t in inputs), vjp))
    tape.kinds.append(kind)
    return Tensor(out, tape, nid)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return _record("mul", ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def vjp(g):
        ga = g / bd
        return _unbroadcast(ga, ad.shape), _unbroadcast(-ga * out, bd.shape)

    return _record("div", out, (a, b), vjp)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _record("exp", out, (x,), lambda g: (g * out,))


def square(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _record("square", xd * xd, (x,), lambda g: (2.0 * g * xd,))


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    return expit(x)


def silu(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    s = sigmoid_np(xd)
    out = xd * s
    return _record("silu", out, (x,), lambda g: (g * (s + out * (1.0 - s)),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    # np.maximum keeps NaN visible instead of mapping it to 0
    return _record("relu", np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    scale = np.where(x.data > 0, 1.0, slope)
    return _record("leaky_relu", x.data * scale, (x,), lambda g: (g * scale,))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient is zero where clamping is active."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _record("clip", np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------- reductions


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", out, (x,), vjp)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size / max(out.size, 1) if x.data.size else 1.0

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _record("mean", out, (x,), vjp)


# ---------------------------------------------------------------- linear algebra / shape


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record("matmul", ad @ bd, (a, b), vjp)


def transpose(x) -> Tensor:
    x = as_tensor(x)
    return _record("transpose", np.swapaxes(x.data, -1, -2), (x,),
                   lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return _record("reshape", out, (x,), lambda g: (g.reshape(old),))


def broadcast(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"broadcast: {old} cannot broadcast to {tuple(shape)}") from None
    return _record("broadcast", out, (x,), lambda g: (_unbroadcast(g, old),))


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[x.shape for x in xs]} along axis {axis}: {exc}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _record("concat", out, xs, lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_(x, key) -> Tensor:
    """Basic (non-fancy) indexing."""
    x = as_tensor(x)
    shape = x.shape
    out = x.data[key]

    def vjp(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[key] = g
        return (full,)

    return _record("slice", np.array(out), (x,), vjp)


def _check_index(kind, index, n):
    index = np.asarray(index)
    if index.ndim != 1 or not np.issubdtype(index.dtype, np.integer):
        raise DimensionError(f"{kind}: index must be a 1-d integer vector, got {index.dtype}{index.shape}")
    if index.size and (index.min() < 0 or index.max() >= n):
        raise IndexError(f"{kind}: index out of range [0, {n})")
    return index


def gather_rows(x, index) -> Tensor:
    x = as_tensor(x)
    index = _check_index("gather_rows", index, x.shape[0])
    n = x.shape[0]
    return _record("gather_rows", x.data[index], (x,),
                   lambda g: (_segment_sum(g, index, n),))


def _segment_matrix(index: np.ndarray, n_slots: int) -> sp.csr_matrix:
    m = index.size
    return sp.csr_matrix((np.ones(m, dtype=_compute["dtype"]), (index, np.arange(m))), shape=(n_slots, m))


def _segment_sum(src: np.ndarray, index: np.ndarray, n_slots: int) -> np.ndarray:
    flat = src.reshape(src.shape[0], int(np.prod(src.shape[1:])))
    out = _segment_matrix(index, n_slots) @ flat
    return np.asarray(out).reshape((n_slots,) + src.shape[1:])


def scatter_add(src, index, n_slots: int) -> Tensor:
    """Row ``i`` of ``src`` is added into output row ``index[i]``."""
    src = as_tensor(src)
    if src.ndim == 0 or len(np.asarray(index)) != src.shape[0]:
        raise DimensionError(
            f"scatter_add: index length {len(np.asarray(index))} != source rows {src.shape[:1]}")
    index = _check_index("scatter_add", index, n_slots)
    return _record("scatter_add", _segment_sum(src.data, index, n_slots), (src,),
                   lambda g: (g[index],))


# ---------------------------------------------------------------- fused loss


def bce_with_logits(z, y, mask) -> Tensor:
    """Masked mean of binary cross-entropy on logits.

    Uses ``max(z, 0) - z*y + log(1 + exp(-|z|))``. Returns 0 with zero
    gradient when every entry is masked out.
    """
    z = as_tensor(z)
    y = np.asarray(y, dtype=_compute["dtype"])
    mask = np.asarray(mask, dtype=_compute["dtype"])
    if y.shape != z.shape or mask.shape != z.shape:
        raise DimensionError(f"bce_with_logits: shapes {z.shape}, {y.shape}, {mask.shape}")
    zd = z.data
    y = np.where(mask > 0, y, 0.0)
    count = mask.sum()
    if count == 0:
        return _record("bce", np.array(0.0), (z,), lambda g: (np.zeros_like(zd),))
    per = np.maximum(zd, 0.0) - zd * y + np.log1p(np.exp(-np.abs(zd)))
    out = np.array((per * mask).sum() / count)
    return _record("bce", out, (z,), lambda g: (g * (sigmoid_np(zd) - y) * mask / count,))


# ---------------------------------------------------------------- backward


class ContractError(ValueError):
    pass


def backward(root: Tensor, seed=None) -> dict[str, np.ndarray]:
    """Accumulate d(root)/d(param) into every parameter leaf on root's tape.

    ``root`` must be a scalar unless ``seed`` supplies the output cotangent,
    in which case the result is the vector-Jacobian product with ``seed``.
    Returns a map from parameter name to the gradient produced by this call.
    Parameters registered on the tape but not reachable from ``root`` get a
    zero entry.
    """
    if seed is None:
        if root.data.size != 1 or root.data.ndim > 1:
            raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
        seed = np.ones_like(root.data)
    else:
        seed = np.asarray(seed, dtype=DTYPE)
        if seed.shape != root.shape:
            raise DimensionError(f"seed shape {seed.shape} != root shape {root.shape}")
    tape = root.tape
    if tape is None:
        return {}
    nodes = tape.nodes
    grads: list[np.ndarray | None] = [None] * (root.node + 1)
    grads[root.node] = seed
    for nid in range(root.node, -1, -1):
        g = grads[nid]
        node = nodes[nid]
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.inputs, node.vjp(g)):
            if parent is None or pg is None:
                continue
            if grads[parent] is None:
                grads[parent] = pg
            else:
                grads[parent] = grads[parent] + pg
    result = {}
    for nid, node in enumerate(nodes):
        p = node.param
        if p is None:
            continue
        g = grads[nid] if nid < len(grads) and grads[nid] is not None else np.zeros_like(p.value)
        g = np.asarray(g, dtype=DTYPE).reshape(p.value.shape)
        p.grad = p.grad + g
        result[p.name] = g
    return result


def grad_of(root: Tensor, leaf: Tensor) -> np.ndarray:
    """Gradient of a scalar root with respect to an arbitrary leaf tensor."""
    if root.data.size != 1:
        raise ContractError(f"grad_of needs a scalar root, got shape {root.shape}")
    nodes = root.tape.nodes
    grads: list = [None] * (root.node + 1)
    grads[root.node] = np.ones_like(root.data)
    for nid in range(root.node, leaf.node - 1, -1):
        g = grads[nid]
        if g is None or nodes[nid].vjp is None:
            continue
        for parent, pg in zip(nodes[nid].inputs, nodes[nid].vjp(g)):
            if parent is not None and pg is not None:
                grads[parent] = pg if grads[parent] is None else grads[parent] + pg
    g = grads[leaf.node]
    return np.zeros_like(leaf.data) if g is None else np.asarray(g).reshape(leaf.shape)


# ---------------------------------------------------------------- finite differences


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    n_checked: int
    worst: tuple[str, tuple] | None = None
    per_parameter: dict[str, float] = field(default_factory=dict)

    def __str__(self):
        where = f" at {self.worst[0]}{list(self.worst[1])}" if self.worst else ""
        status = "ok" if self.passed else "FAIL"
        return f"{status}: max rel err {self.max_rel_error:.3e} over {self.n_checked} entries{where}"


def grad_check(f: Callable[[Tape], Tensor], params: Sequence[Parameter], step: float = 1e-5,
               tol: float = 1e-4, max_entries: int | None = None, seed: int = 0,
               oracle_dtype=np.longdouble, cotangent=None) -> GradCheckReport:
    """Compare tape gradients of ``f`` against central differences.

    ``f`` builds its graph on the tape it is given and returns a scalar.
    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``. With
    ``max_entries`` set, a seeded random subset of each parameter is probed.
    The analytic pass runs in float64; the difference quotients are evaluated
    in ``oracle_dtype`` (extended precision by default, so entries near
    1e-8 are not swamped by float64 roundoff of about 1e-11 at step 1e-5).
    With ``cotangent`` given, ``f`` may return any shape and the checked
    scalar is ``sum(f * cotangent)``, contracted outside the tape.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    for p in params:
        p.zero_grad()
    tape = Tape()
    out = f(tape)
    backward(out, cotangent)
    analytic = {id(p): p.grad.copy() for p in params}
    rng = np.random.default_rng(seed)

    def value():
        with precision(oracle_dtype):
            data = f(Tape()).data
            if cotangent is None:
                return data.reshape(-1)[0]
            return (data * np.asarray(cotangent, dtype=oracle_dtype)).sum()

    worst_err, worst, n = 0.0, None, 0
    per = {}
    for p in params:
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        a_flat = analytic[id(p)].reshape(-1)
        p_worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = value()
            flat[i] = orig - step
            fm = value()
            flat[i] = orig
            num = float((fp - fm) / (2.0 * step))
            a = a_flat[i]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            n += 1
            p_worst = max(p_worst, err)
            if worst is None or err > worst_err:
                worst_err = err
                worst = (p.name, tuple(int(j) for j in np.unravel_index(i, p.value.shape)))
        per[p.name] = p_worst
    for p in params:
        p.zero_grad()
    return GradCheckReport(worst_err, worst_err <= tol, n, worst, per)


# ---------------------------------------------------------------- modules


class Module:
    """Owns Parameters and sub-Modules; names are dotted attribute paths."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            yield from _walk(value, f"{prefix}{attr}")

    def parameters(self) -> list[Parameter]:
        params = []
        for name, p in self.named_parameters():
            p.name = name
            params.append(p)
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise KeyError(f"state mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=DTYPE)
            if value.shape != p.value.shape:
                raise DimensionError(f"{name}: expected {p.value.shape}, got {value.shape}")
            p.value = value.copy()
            p.grad = np.zeros_like(p.value)


def _walk(value, path):
    if isinstance(value, Parameter):
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")
