"""Kolmogorov-Arnold layers: B-spline KAN, fixed-RBF FastKAN and adaptive-RBF SKAN.

Every layer maps a ``batch x n_in`` tensor to ``batch x n_out`` by summing
one learnable univariate function per (output, input) edge::

    out[o] = sum_i  w_b[o, i] * silu(x[i]) + branch_{o,i}(x[i])

The branch is a scaled B-spline expansion for :class:`BSplineKanLayer` and a
Gaussian RBF expansion for the two RBF layers. :class:`SkanLayer` learns
its RBF centers and bandwidths; they are shared by all edges of a layer.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Module, Parameter, Tape, Tensor

GRID_RANGE = 2.0
FAMILIES = ("skan", "fastkan", "bspline_kan")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _glorot(rng, shape, n_in, n_out):
    bound = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=shape)


def _check_dims(n_in, n_out):
    if int(n_in) < 1 or int(n_out) < 1:
        raise ValueError(f"layer dimensions must be positive, got {n_in}->{n_out}")


def rbf_centers(n_rbf: int, grid_range: float = GRID_RANGE) -> np.ndarray:
    if n_rbf < 1:
        raise ValueError("need at least one RBF")
    if n_rbf == 1:
        return np.zeros(1)
    return np.linspace(-grid_range, grid_range, n_rbf)


def rbf_spacing(n_rbf: int, grid_range: float = GRID_RANGE) -> float:
    return 2.0 * grid_range / max(n_rbf - 1, 1)


# ---------------------------------------------------------------- B-splines


def uniform_knots(grid_size: int, spline_order: int, grid_range: float = GRID_RANGE) -> np.ndarray:
    """``grid_size + 2k + 1`` uniform knots; [-grid_range, grid_range] is the valid domain."""
    h = 2.0 * grid_range / grid_size
    return -grid_range + h * np.arange(-spline_order, grid_size + spline_order + 1)


def bspline_basis(x: float, knots: np.ndarray, k: int) -> np.ndarray:
    """All ``len(knots) - k - 1`` B-spline basis values of order ``k`` at scalar ``x``.

    ``x`` is clamped to ``[knots[k], knots[-k-1]]`` first.
    """
    if k < 0:
        raise ValueError("spline order must be >= 0")
    t = np.asarray(knots, dtype=float)
    lo, hi = t[k], t[len(t) - k - 1]
    x = min(max(float(x), lo), hi)
    bases = _indicator(np.array([x]), t, lo, hi)[0]
    for d in range(1, k + 1):
        left = (x - t[: -(d + 1)]) / (t[d:-1] - t[: -(d + 1)])
        right = (t[d + 1:] - x) / (t[d + 1:] - t[1:-d])
        bases = left * bases[:-1] + right * bases[1:]
    return bases


def _indicator(x: np.ndarray, t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Degree-0 bases on half-open intervals; the right domain edge joins the last interval."""
    xe = x[..., None]
    ind = ((xe >= t[:-1]) & (xe < t[1:])).astype(float)
    at_hi = x == hi
    if np.any(at_hi):
        last = int(np.searchsorted(t, hi)) - 1
        ind[at_hi, :] = 0.0
        ind[at_hi, last] = 1.0
    return ind


def bspline_bases(x: Tensor, knots: np.ndarray, k: int) -> Tensor:
    """Differentiable Cox-de Boor evaluation; returns ``x.shape + (len(knots)-k-1,)``."""
    t = np.asarray(knots, dtype=float)
    lo, hi = t[k], t[len(t) - k - 1]
    xc = ad.clip(x, lo, hi)
    xe = xc.reshape(xc.shape + (1,))
    bases = Tensor(_indicator(xc.data, t, lo, hi))
    for d in range(1, k + 1):
        left = (xe - t[: -(d + 1)]) * (1.0 / (t[d:-1] - t[: -(d + 1)]))
        right = (t[d + 1:] - xe) * (1.0 / (t[d + 1:] - t[1:-d]))
        nb = bases.shape[-1]
        bases = left * bases[..., : nb - 1] + right * bases[..., 1:]
    return bases


# ---------------------------------------------------------------- layers


class KanLayer(Module):
    family = ""

    def __init__(self, n_in: int, n_out: int):
        _check_dims(n_in, n_out)
        self.n_in = int(n_in)
        self.n_out = int(n_out)

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        x = ad.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ad.DimensionError(f"{type(self).__name__}: expected (batch, {self.n_in}), got {x.shape}")
        return self.forward(tape, x)

    def forward(self, tape: Tape, x: Tensor) -> Tensor:
        raise NotImplementedError

    def _base(self, tape, x):
        return ad.silu(x) @ tape.param(self.base_weight).T


class BSplineKanLayer(KanLayer):
    family = "bspline_kan"

    def __init__(self, n_in, n_out, grid_size: int = 8, spline_order: int = 3,
                 grid_range: float = GRID_RANGE, seed=0):
        super().__init__(n_in, n_out)
        if grid_size < 1 or spline_order < 1:
            raise ValueError("grid_size and spline_order must be positive")
        rng = _rng(seed)
        self.grid_size = int(grid_size)
        self.spline_order = int(spline_order)
        self.knots = uniform_knots(self.grid_size, self.spline_order, grid_range)
        n_basis = self.grid_size + self.spline_order
        self.base_weight = Parameter(_glorot(rng, (n_out, n_in), n_in, n_out))
        self.spline_coeffs = Parameter(_glorot(rng, (n_out, n_in, n_basis), n_in, n_out))
        self.spline_scale = Parameter(np.ones((n_out, n_in)))

    def forward(self, tape, x):
        n = x.shape[0]
        n_basis = self.grid_size + self.spline_order
        bases = bspline_bases(x, self.knots, self.spline_order).reshape(n, self.n_in * n_basis)
        scale = tape.param(self.spline_scale).reshape(self.n_out, self.n_in, 1)
        coeffs = (tape.param(self.spline_coeffs) * scale).reshape(self.n_out, self.n_in * n_basis)
        return self._base(tape, x) + bases @ coeffs.T


def _rbf_expand(x: Tensor, centers: Tensor, bandwidths: Tensor) -> Tensor:
    """``exp(-0.5 ((x - c_j) / bw_j)^2)`` laid out as ``(batch, n_in * M)``, basis fastest."""
    n, n_in = x.shape
    m = centers.shape[0]
    z = (x.reshape(n, n_in, 1) - centers) / bandwidths
    return ad.exp(ad.square(z) * -0.5).reshape(n, n_in * m)


class FastKanLayer(KanLayer):
    family = "fastkan"

    def __init__(self, n_in, n_out, n_rbf: int = 8, grid_range: float = GRID_RANGE,
                 bandwidth: float | None = None, seed=0):
        super().__init__(n_in, n_out)
        rng = _rng(seed)
        self.n_rbf = int(n_rbf)
        self.centers = rbf_centers(self.n_rbf, grid_range)
        self.bandwidth = float(bandwidth) if bandwidth else rbf_spacing(self.n_rbf, grid_range)
        self.base_weight = Parameter(_glorot(rng, (n_out, n_in), n_in, n_out))
        self.rbf_weight = Parameter(_glorot(rng, (n_out, n_in * self.n_rbf), n_in, n_out))

    def forward(self, tape, x):
        bw = np.full(self.n_rbf, self.bandwidth)
        phi = _rbf_expand(x, Tensor(self.centers), Tensor(bw))
        return self._base(tape, x) + phi @ tape.param(self.rbf_weight).T


class SkanLayer(KanLayer):
    """RBF KAN layer whose M centers and M bandwidths are trained with the weights.

    Bandwidths are stored as logs so they stay positive.
    """

    family = "skan"

    def __init__(self, n_in, n_out, n_rbf: int = 8, grid_range: float = GRID_RANGE,
                 bandwidth: float | None = None, seed=0):
        super().__init__(n_in, n_out)
        rng = _rng(seed)
        self.n_rbf = int(n_rbf)
        width = float(bandwidth) if bandwidth else rbf_spacing(self.n_rbf, grid_range)
        self.base_weight = Parameter(_glorot(rng, (n_out, n_in), n_in, n_out))
        self.rbf_weight = Parameter(_glorot(rng, (n_out, n_in * self.n_rbf), n_in, n_out))
        self.centers = Parameter(rbf_centers(self.n_rbf, grid_range))
        self.log_bandwidths = Parameter(np.full(self.n_rbf, math.log(width)))

    @property
    def bandwidths(self) -> np.ndarray:
        return np.exp(self.log_bandwidths.value)

    def forward(self, tape, x):
        bw = ad.exp(tape.param(self.log_bandwidths))
        phi = _rbf_expand(x, tape.param(self.centers), bw)
        return self._base(tape, x) + phi @ tape.param(self.rbf_weight).T


def make_layer(family: str, n_in: int, n_out: int, *, n_rbf: int = 8, grid_size: int = 8,
               spline_order: int = 3, bandwidth: float | None = None, seed=0) -> KanLayer:
    """Build one KAN layer of ``family``; deterministic given ``seed``."""
    if family == "skan":
        return SkanLayer(n_in, n_out, n_rbf=n_rbf, bandwidth=bandwidth, seed=seed)
    if family == "fastkan":
        return FastKanLayer(n_in, n_out, n_rbf=n_rbf, bandwidth=bandwidth, seed=seed)
    if family == "bspline_kan":
        return BSplineKanLayer(n_in, n_out, grid_size=grid_size, spline_order=spline_order, seed=seed)
    raise ValueError(f"unknown KAN family {family!r}; expected one of {FAMILIES}")


class KanNetwork(Module):
    """A chain of same-family KAN layers with widths ``[n0, n1, ..., nL]``."""

    def __init__(self, widths, family: str = "skan", seed=0, **layer_kwargs):
        widths = [int(w) for w in widths]
        if len(widths) < 2:
            raise ValueError("a KAN network needs at least two widths")
        rng = _rng(seed)
        self.widths = widths
        self.family = family
        self.layers = [make_layer(family, a, b, seed=rng, **layer_kwargs)
                       for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(tape, x)
        return x


def parameter_count(obj: Module) -> int:
    """Number of learnable scalars in a layer, network or model."""
    return obj.parameter_count()
