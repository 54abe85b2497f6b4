"""Message-passing encoders with KAN update functions and MLP/SKAN heads.

One layer computes, for every atom ``v``::

    m_v = AGGREGATE({(h_v, h_u, e_uv) : u in N(v)})      # gcn | gat | gine
    h_v = UPDATE((1 + eps) * h_v + m_v)                  # mlp or a 2-layer KAN

After ``depth`` layers a per-molecule mean readout feeds the head.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Module, Parameter, Tape, Tensor
from .kan import FAMILIES, KanNetwork, SkanLayer, _glorot, _rng
from .molgraph.features import EDGE_DIM, NODE_DIM, BatchedGraph

HOSTS = ("gcn", "gat", "gine")
UPDATE_KINDS = ("mlp",) + FAMILIES
HEAD_KINDS = ("mlp", "skan")


@dataclass
class GnnConfig:
    host: str = "gine"
    depth: int = 2
    hidden: int = 256
    update_kind: str = "skan"
    head_kind: str = "mlp"
    n_rbf: int = 8
    n_tasks: int = 1
    gat_heads: int = 4
    skan_in_aggregation: bool = False
    grid_size: int = 8
    spline_order: int = 3
    bandwidth: float | None = None

    def __post_init__(self):
        if self.host not in HOSTS:
            raise ValueError(f"host must be one of {HOSTS}, got {self.host!r}")
        if self.update_kind not in UPDATE_KINDS:
            raise ValueError(f"update_kind must be one of {UPDATE_KINDS}, got {self.update_kind!r}")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"head_kind must be one of {HEAD_KINDS}, got {self.head_kind!r}")
        for name in ("depth", "hidden", "n_tasks", "gat_heads", "n_rbf"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self):
        return asdict(self)

    def kan_kwargs(self):
        return dict(n_rbf=self.n_rbf, grid_size=self.grid_size, spline_order=self.spline_order,
                    bandwidth=self.bandwidth)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        self.weight = Parameter(_glorot(rng, (n_out, n_in), n_in, n_out))
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        out = ad.as_tensor(x) @ tape.param(self.weight).T
        if self.bias is not None:
            out = out + tape.param(self.bias)
        return out


class Mlp(Module):
    """linear -> relu -> linear"""

    def __init__(self, n_in, n_hidden, n_out, rng):
        self.fc1 = Linear(n_in, n_hidden, rng)
        self.fc2 = Linear(n_hidden, n_out, rng)

    def __call__(self, tape, x):
        return self.fc2(tape, ad.relu(self.fc1(tape, x)))


def _update_block(kind: str, hidden: int, cfg: GnnConfig, rng) -> Module:
    if kind == "mlp":
        return Mlp(hidden, hidden, hidden, rng)
    return KanNetwork([hidden, hidden, hidden], family=kind, seed=rng, **cfg.kan_kwargs())


def _segment_softmax(logits: Tensor, dst: np.ndarray, n: int) -> Tensor:
    # the per-segment max is a constant shift; softmax is invariant to it
    shift = np.full(n, -np.inf)
    np.maximum.at(shift, dst, logits.data)
    ex = ad.exp(logits - shift[dst])
    den = ad.scatter_add(ex, dst, n)
    return ex / ad.gather_rows(den, dst)


class MessagePassingLayer(Module):
    def __init__(self, cfg: GnnConfig, rng):
        h = cfg.hidden
        self.host = cfg.host
        self.update_kind = cfg.update_kind
        self.edge_embed = Linear(EDGE_DIM, h, rng)
        if cfg.host == "gcn":
            self.weight = Linear(h, h, rng)
        elif cfg.host == "gat":
            self.heads = [Linear(h, h, rng, bias=False) for _ in range(cfg.gat_heads)]
            bound = math.sqrt(6.0 / (h + 1))
            self.att_src = Parameter(rng.uniform(-bound, bound, (cfg.gat_heads, h)))
            self.att_dst = Parameter(rng.uniform(-bound, bound, (cfg.gat_heads, h)))
            self.att_edge = Parameter(rng.uniform(-bound, bound, (cfg.gat_heads, h)))
        self.message_kan = SkanLayer(h, h, n_rbf=cfg.n_rbf, bandwidth=cfg.bandwidth, seed=rng) \
            if cfg.skan_in_aggregation else None
        # GCN/GAT with a plain MLP update keep their classical residual-free form
        self.uses_eps = cfg.update_kind != "mlp" or cfg.host == "gine"
        self.eps = Parameter(np.zeros(1)) if self.uses_eps else None
        self.update_block = _update_block(cfg.update_kind, h, cfg, rng)

    def _edge_messages(self, tape, x_src: Tensor, e: Tensor) -> Tensor:
        msg = x_src + e
        if self.message_kan is not None:
            return self.message_kan(tape, msg)
        return ad.relu(msg) if self.host == "gine" else msg

    def _heads(self, tape, h: Tensor, e: Tensor, batch: BatchedGraph):
        n = batch.n_nodes
        out = []
        for k, proj in enumerate(self.heads):
            z = proj(tape, h)
            a_src = tape.param(self.att_src)[k:k + 1, :].T
            a_dst = tape.param(self.att_dst)[k:k + 1, :].T
            a_edge = tape.param(self.att_edge)[k:k + 1, :].T
            score = (ad.gather_rows(z @ a_src, batch.src) + ad.gather_rows(z @ a_dst, batch.dst)
                     + e @ a_edge).reshape(-1)
            out.append((z, _segment_softmax(ad.leaky_relu(score, 0.2), batch.dst, n)))
        return out

    def attention(self, tape, h: Tensor, batch: BatchedGraph) -> list[Tensor]:
        """Per-head attention weights over incoming edges (GAT only)."""
        e = self.edge_embed(tape, batch.edge)
        return [alpha for _, alpha in self._heads(tape, h, e, batch)]

    def aggregate(self, tape, h: Tensor, batch: BatchedGraph) -> Tensor:
        n = batch.n_nodes
        e = self.edge_embed(tape, batch.edge)
        if self.host == "gine":
            msg = self._edge_messages(tape, ad.gather_rows(h, batch.src), e)
            return ad.scatter_add(msg, batch.dst, n)
        if self.host == "gcn":
            deg = batch.degree().astype(float) + 1.0
            norm = 1.0 / np.sqrt(deg[batch.src] * deg[batch.dst])
            hw = self.weight(tape, h)
            msg = self._edge_messages(tape, ad.gather_rows(hw, batch.src), e) * norm[:, None]
            return ad.scatter_add(msg, batch.dst, n)
        total = None
        for z, alpha in self._heads(tape, h, e, batch):
            msg = self._edge_messages(tape, ad.gather_rows(z, batch.src), e)
            m_k = ad.scatter_add(msg * alpha.reshape(-1, 1), batch.dst, n)
            total = m_k if total is None else total + m_k
        return total * (1.0 / len(self.heads))

    def update(self, tape, h_prev: Tensor, m: Tensor) -> Tensor:
        if self.uses_eps:
            x = h_prev * (1.0 + tape.param(self.eps)) + m
        else:
            x = h_prev + m
        return self.update_block(tape, x)

    def __call__(self, tape, h, batch):
        return self.update(tape, h, self.aggregate(tape, h, batch))


def readout(h: Tensor, graph_id: np.ndarray, n_graphs: int) -> Tensor:
    """Per-molecule mean of node vectors."""
    sizes = np.bincount(graph_id, minlength=n_graphs).astype(float)
    return ad.scatter_add(h, graph_id, n_graphs) * (1.0 / np.maximum(sizes, 1.0))[:, None]


class GnnModel(Module):
    """Embedding, ``depth`` message-passing layers, mean readout and a prediction head."""

    def __init__(self, config: GnnConfig, seed=0):
        self.config = config
        rng = _rng(seed)
        h = config.hidden
        self.node_embed = Linear(NODE_DIM, h, rng)
        self.layers = [MessagePassingLayer(config, rng) for _ in range(config.depth)]
        if config.head_kind == "skan":
            self.head = KanNetwork([h, h, config.n_tasks], family="skan", seed=rng,
                                   n_rbf=config.n_rbf, bandwidth=config.bandwidth)
        else:
            self.head = Mlp(h, h, config.n_tasks, rng)
        self.parameters()  # assigns dotted names

    def encode(self, tape: Tape, batch: BatchedGraph) -> Tensor:
        h = self.node_embed(tape, batch.node)
        last = len(self.layers) - 1
        for d, layer in enumerate(self.layers):
            h = layer(tape, h, batch)
            if self.config.update_kind == "mlp" and d < last:
                h = ad.relu(h)
        return readout(h, batch.graph_id, batch.n_graphs)

    def predict(self, tape: Tape, g: Tensor) -> Tensor:
        return self.head(tape, g)

    def __call__(self, tape: Tape, batch: BatchedGraph) -> Tensor:
        return self.predict(tape, self.encode(tape, batch))

    def kan_parameter_names(self) -> list[str]:
        names = []
        for name, p in self.named_parameters():
            if any(k in name for k in ("rbf_weight", "centers", "log_bandwidths", "spline_")):
                names.append(name)
        return names


def model_forward(model: GnnModel, batch: BatchedGraph) -> np.ndarray:
    """Inference-only forward returning a plain array."""
    return model(Tape(), batch).data
