"""Stochastic two-view augmentation: feature-column masking and edge dropping."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor
from .errors import InvalidSpecError
from .graph import Graph
from .sparse import SparseMatrix, mean_adjacency, normalize_adjacency, self_loop_edges

# below this density features are carried as CSR so X @ W stays cheap
SPARSE_FEATURE_DENSITY = 0.25


@dataclass(frozen=True)
class AugmentConfig:
    feature_mask_rate_v1: float = 0.5
    edge_mask_rate_v1: float = 0.5
    feature_mask_rate_v2: float = 0.2
    edge_mask_rate_v2: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("feature_mask_rate_v1", "edge_mask_rate_v1", "feature_mask_rate_v2", "edge_mask_rate_v2"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise InvalidSpecError(f"{name}={rate} outside [0, 1]")

    @classmethod
    def off(cls, seed: int = 0) -> "AugmentConfig":
        return cls(0.0, 0.0, 0.0, 0.0, seed)

    @property
    def is_off(self) -> bool:
        return not any((self.feature_mask_rate_v1, self.edge_mask_rate_v1,
                        self.feature_mask_rate_v2, self.edge_mask_rate_v2))


class GraphView:
    """One (adjacency, features) pair fed to an encoder.

    The propagation operators each architecture needs are derived lazily from
    the raw symmetric adjacency and cached.
    """

    def __init__(self, adjacency, features):
        self.adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
        self.x = features

    @classmethod
    def from_graph(cls, graph: Graph, sparse_features: bool | None = None) -> "GraphView":
        return cls(graph.adjacency(), graph_features(graph, sparse_features))

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @cached_property
    def norm_adj(self) -> SparseMatrix:
        return normalize_adjacency(self.adjacency)

    @cached_property
    def mean_adj(self) -> SparseMatrix:
        return mean_adjacency(self.adjacency)

    @cached_property
    def attention_edges(self):
        """Incidence operators over edges E = A + I, grouped by destination node.

        Returns (gather_src, gather_dst, scatter_dst, group_starts, dst): the
        first two are E x n selectors, the third is the n x E sum over incoming
        edges, ``group_starts[v]`` is the first edge pointing at ``v``.
        """
        src, dst = self_loop_edges(self.adjacency)
        n, e = self.num_nodes, len(src)
        ones = np.ones(e)
        gather_src = SparseMatrix.from_scipy(sp.csr_matrix((ones, (np.arange(e), src)), shape=(e, n)))
        gather_dst = SparseMatrix.from_scipy(sp.csr_matrix((ones, (np.arange(e), dst)), shape=(e, n)))
        scatter_dst = SparseMatrix.from_scipy(sp.csr_matrix((ones, (dst, np.arange(e))), shape=(n, e)))
        starts = np.searchsorted(dst, np.arange(n))
        return gather_src, gather_dst, scatter_dst, starts, dst

    def dense_features(self) -> np.ndarray:
        return self.x.to_dense() if isinstance(self.x, SparseMatrix) else np.asarray(self.x.data)


@dataclass(frozen=True, eq=False)
class ViewPair:
    view1: GraphView
    view2: GraphView


def graph_features(graph: Graph, sparse: bool | None = None):
    """Features as a constant Tensor, or as CSR when they are mostly zero."""
    x = graph.features
    if sparse is None:
        sparse = x.size > 0 and np.count_nonzero(x) / x.size < SPARSE_FEATURE_DENSITY
    if not sparse:
        return Tensor(x)
    return graph.feature_csr


def mask_features(x, rate: float, rng):
    """Zero a Bernoulli(rate) subset of feature columns for every node.

    Accepts a Tensor, ndarray or SparseMatrix and returns the same kind; the
    input is left untouched.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidSpecError("mask rate must be in [0, 1]")
    num_cols = x.cols if isinstance(x, SparseMatrix) else np.shape(x.data if isinstance(x, Tensor) else x)[1]
    keep = rng.random(num_cols) >= rate
    if isinstance(x, SparseMatrix):
        return SparseMatrix(x.rows, x.cols, x.indptr, x.indices, x.values * keep[x.indices])
    if isinstance(x, Tensor):
        return Tensor(x.data * keep)
    return np.asarray(x) * keep


def drop_edge_adjacency(graph, rate: float, rng) -> sp.csr_matrix:
    """Symmetric adjacency with each undirected edge removed independently with probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise InvalidSpecError("edge drop rate must be in [0, 1]")
    if isinstance(graph, Graph):
        edges, n = graph.edge_list, graph.num_nodes
    else:
        a = sp.triu(sp.csr_matrix(graph), k=1).tocoo()
        edges, n = np.stack([a.row, a.col], axis=1), graph.shape[0]
    keep = rng.random(len(edges)) >= rate
    kept = edges[keep]
    both = np.concatenate([kept, kept[:, ::-1]])
    adj = sp.csr_matrix((np.ones(len(both)), (both[:, 0], both[:, 1])), shape=(n, n))
    adj.sort_indices()
    return adj


def drop_edges(graph, rate: float, rng) -> SparseMatrix:
    """Edge-dropped adjacency, renormalized with self loops."""
    return normalize_adjacency(drop_edge_adjacency(graph, rate, rng))


def epoch_rng(cfg: AugmentConfig, epoch: int) -> np.random.Generator:
    return np.random.default_rng([int(cfg.seed), int(epoch), 0x5EED])


def make_view(graph: Graph, feature_rate: float, edge_rate: float, rng, features=None) -> GraphView:
    x = graph_features(graph) if features is None else features
    x = mask_features(x, feature_rate, rng)
    adj = drop_edge_adjacency(graph, edge_rate, rng)
    return GraphView(adj, x)


def make_views(graph: Graph, cfg: AugmentConfig, rng) -> ViewPair:
    """Draw two augmented views; ``rng`` may be a Generator or an epoch index."""
    if not isinstance(rng, np.random.Generator):
        rng = epoch_rng(cfg, int(rng))
    v1 = make_view(graph, cfg.feature_mask_rate_v1, cfg.edge_mask_rate_v1, rng)
    v2 = make_view(graph, cfg.feature_mask_rate_v2, cfg.edge_mask_rate_v2, rng)
    return ViewPair(v1, v2)
