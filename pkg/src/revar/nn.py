"""GCN / GAT / GraphSAGE encoders with BatchNorm + PReLU, and the linear head."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .augment import GraphView
from .autodiff import Tensor
from .errors import ConfigError, FormatError, NumericError, ShapeError
from .graph import Graph
from .sparse import SparseMatrix, spmm

ARCHS = ("gcn", "gat", "sage")
GAT_SLOPE = 0.2
BN_EPS = 1e-5


@dataclass(frozen=True)
class EncoderConfig:
    arch: str = "gcn"
    layers: int = 2
    hidden: int = 128
    heads: int = 8
    embed_dim: int | None = None
    batchnorm_momentum: float = 0.99
    batchnorm: bool = True

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.layers not in (1, 2, 3):
            raise ConfigError("layers must be 1, 2 or 3")
        if self.hidden not in (64, 128, 256):
            raise ConfigError("hidden must be 64, 128 or 256")
        if self.arch == "gat" and self.hidden % self.heads:
            raise ConfigError("hidden must be divisible by heads")
        if not 0.0 <= self.batchnorm_momentum <= 1.0:
            raise ConfigError("batchnorm_momentum must be in [0, 1]")

    @property
    def out_dim(self) -> int:
        return self.hidden if self.embed_dim is None else self.embed_dim

    def layer_dims(self, in_features: int) -> list[tuple[int, int]]:
        dims = [in_features] + [self.hidden] * (self.layers - 1) + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class ModelParams:
    """Learnable tensors (in declaration order) plus BatchNorm running statistics."""

    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def state(self) -> dict:
        out = {k: v.data.copy() for k, v in self.params.items()}
        out.update({k: v.copy() for k, v in self.buffers.items()})
        return out

    def load_state(self, state: dict):
        for k, p in self.params.items():
            p.data[...] = state[k]
        for k in self.buffers:
            self.buffers[k][...] = state[k]


def _glorot(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


def init_params(cfg: EncoderConfig, in_features: int, num_classes: int, seed=0) -> ModelParams:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p, b = {}, {}

    def add(name, value):
        p[name] = Tensor(value, requires_grad=True, name=name)

    for i, (fin, fout) in enumerate(cfg.layer_dims(in_features)):
        pre = f"layer{i}"
        last = i == cfg.layers - 1
        if cfg.arch == "gcn":
            add(f"{pre}.weight", _glorot(rng, fin, fout))
            add(f"{pre}.bias", np.zeros(fout))
        elif cfg.arch == "sage":
            add(f"{pre}.weight_self", _glorot(rng, fin, fout))
            add(f"{pre}.weight_nb", _glorot(rng, fin, fout))
            add(f"{pre}.bias", np.zeros(fout))
        else:
            per_head = fout if last else fout // cfg.heads
            add(f"{pre}.weight", _glorot(rng, fin, cfg.heads * per_head))
            add(f"{pre}.att_src", _glorot(rng, per_head, 1, (cfg.heads, per_head)))
            add(f"{pre}.att_dst", _glorot(rng, per_head, 1, (cfg.heads, per_head)))
            add(f"{pre}.bias", np.zeros(fout))
        if cfg.batchnorm:
            add(f"{pre}.bn.weight", np.ones(fout))
            add(f"{pre}.bn.bias", np.zeros(fout))
            b[f"{pre}.bn.running_mean"] = np.zeros(fout)
            b[f"{pre}.bn.running_var"] = np.ones(fout)
        add(f"{pre}.prelu", np.full(1, 0.25))
    add("cls.weight", _glorot(rng, cfg.out_dim, num_classes))
    add("cls.bias", np.zeros(num_classes))
    return ModelParams(p, b)


# layers -----------------------------------------------------------------------


def _project(x, w: Tensor) -> Tensor:
    if isinstance(x, SparseMatrix):
        return spmm(x, w)
    return ad.matmul(x, w)


def gcn_layer(view: GraphView, x, w: Tensor, bias: Tensor) -> Tensor:
    return spmm(view.norm_adj, _project(x, w)) + bias


def sage_layer(view: GraphView, x, w_self: Tensor, w_nb: Tensor, bias: Tensor) -> Tensor:
    """Mean aggregator: x W_self + mean_{u in N(v)} x_u W_nb, i.e. [x || mean(x)] W."""
    return _project(x, w_self) + spmm(view.mean_adj, _project(x, w_nb)) + bias


def gat_layer(view: GraphView, x, w, att_src, att_dst, bias, heads: int, concat: bool) -> Tensor:
    gather_src, gather_dst, scatter_dst, starts, _ = view.attention_edges
    n = view.num_nodes
    per_head = att_src.shape[1]
    z = _project(x, w)
    z3 = ad.reshape(z, (n, heads, per_head))
    a_src = ad.tsum(z3 * att_src, axis=2)
    a_dst = ad.tsum(z3 * att_dst, axis=2)
    logits = ad.leaky_relu(spmm(gather_src, a_src) + spmm(gather_dst, a_dst), GAT_SLOPE)
    # softmax over the incoming edges of each node; the shift is a constant
    shift = np.maximum.reduceat(logits.data, starts, axis=0)
    ex = ad.exp(logits - spmm(gather_dst, Tensor(shift)).data)
    denom = spmm(scatter_dst, ex)
    alpha = ex / spmm(gather_dst, denom)
    e = alpha.shape[0]
    msg = ad.reshape(spmm(gather_src, z), (e, heads, per_head)) * ad.reshape(alpha, (e, heads, 1))
    out = spmm(scatter_dst, ad.reshape(msg, (e, heads * per_head)))
    if concat:
        return out + bias
    return ad.mean(ad.reshape(out, (n, heads, per_head)), axis=1) + bias


def batch_norm(x: Tensor, weight: Tensor, bias: Tensor, running_mean, running_var, momentum, train: bool):
    """Per-feature normalization over the node batch.

    Running statistics follow ``running = (1 - momentum) * running + momentum * batch``
    with the unbiased batch variance; eval mode normalizes with them.
    """
    if train:
        mu = ad.mean(x, axis=0, keepdims=True)
        xc = x - mu
        var = ad.mean(xc * xc, axis=0, keepdims=True)
        xhat = xc / ad.sqrt(var + BN_EPS)
        n = x.shape[0]
        unbiased = var.data.ravel() * (n / (n - 1)) if n > 1 else var.data.ravel()
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data.ravel()
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        xhat = (x - running_mean) / np.sqrt(running_var + BN_EPS)
    return xhat * weight + bias


def as_view(graph_or_view, x=None) -> GraphView:
    if isinstance(graph_or_view, GraphView):
        view = graph_or_view
    elif isinstance(graph_or_view, Graph):
        view = GraphView.from_graph(graph_or_view)
    else:
        # bare adjacency
        view = GraphView(graph_or_view.csr if isinstance(graph_or_view, SparseMatrix) else graph_or_view, None)
    if x is not None:
        view = GraphView(view.adjacency, x)
    return view


def encoder_forward(params: ModelParams, cfg: EncoderConfig, view, x=None, train_mode: bool = True) -> Tensor:
    """Embeddings ``h = f(A, X)``: per layer propagate -> BatchNorm -> PReLU."""
    view = as_view(view, x)
    h = view.x
    if isinstance(h, np.ndarray):
        h = Tensor(h)
    n = view.num_nodes
    if h.shape[0] != n:
        raise ShapeError(f"features have {h.shape[0]} rows for {n} nodes")
    for i in range(cfg.layers):
        pre = f"layer{i}"
        last = i == cfg.layers - 1
        if cfg.arch == "gcn":
            h = gcn_layer(view, h, params[f"{pre}.weight"], params[f"{pre}.bias"])
        elif cfg.arch == "sage":
            h = sage_layer(view, h, params[f"{pre}.weight_self"], params[f"{pre}.weight_nb"], params[f"{pre}.bias"])
        else:
            h = gat_layer(view, h, params[f"{pre}.weight"], params[f"{pre}.att_src"], params[f"{pre}.att_dst"],
                          params[f"{pre}.bias"], cfg.heads, concat=not last)
        if cfg.batchnorm:
            h = batch_norm(h, params[f"{pre}.bn.weight"], params[f"{pre}.bn.bias"],
                           params.buffers[f"{pre}.bn.running_mean"], params.buffers[f"{pre}.bn.running_var"],
                           cfg.batchnorm_momentum, train_mode)
        h = ad.prelu(h, params[f"{pre}.prelu"])
        if not np.all(np.isfinite(h.data)):
            raise NumericError(f"non-finite activation in layer {i}", layer=i)
    return h


def classifier_forward(params: ModelParams, h) -> Tensor:
    """Logits ``h W + b``."""
    w, b = params["cls.weight"], params["cls.bias"]
    h = ad.as_tensor(h)
    if h.ndim != 2 or h.shape[1] != w.shape[0]:
        raise ShapeError(f"embedding shape {h.shape} does not match classifier input {w.shape[0]}")
    return ad.matmul(h, w) + b


# checkpoints ----------------------------------------------------------------------

MAGIC = b"RVAR"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ModelParams, cfg: EncoderConfig, extra: dict | None = None) -> Path:
    """Header (magic, version, JSON with arch and shapes), then little-endian float64 buffers."""
    entries = [(k, "param", v.data) for k, v in params.params.items()]
    entries += [(k, "buffer", v) for k, v in params.buffers.items()]
    header = {
        "arch": cfg.arch,
        "encoder": asdict(cfg),
        "tensors": [{"name": k, "kind": kind, "shape": list(a.shape)} for k, kind, a in entries],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, _, a in entries:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return path


def load_checkpoint(path):
    """Return (ModelParams, EncoderConfig, extra)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError("not a revar checkpoint")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    offset = 12 + hlen
    params, buffers = {}, {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(entry["shape"])
        offset += 8 * count
        if entry["kind"] == "param":
            params[entry["name"]] = Tensor(arr, requires_grad=True, name=entry["name"])
        else:
            buffers[entry["name"]] = arr.copy()
    if offset != len(raw):
        raise FormatError("trailing bytes in checkpoint")
    return ModelParams(params, buffers), EncoderConfig(**header["encoder"]), header.get("extra", {})
