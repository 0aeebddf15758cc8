"""CSR matrices, adjacency normalization and the sparse-dense product."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor, as_tensor, make_op
from .errors import FormatError, ShapeError


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    rows: int
    cols: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if indptr.shape != (self.rows + 1,) or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise FormatError("row offsets must start at 0 and be nondecreasing")
        if indptr[-1] != len(indices) or len(indices) != len(values):
            raise FormatError("last offset must equal nnz")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.cols):
            raise FormatError("column index out of range")
        for name, arr in (("indptr", indptr), ("indices", indices), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = sp.csr_matrix(m, dtype=np.float64)
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.indices, self.indptr), shape=self.shape)

    @cached_property
    def csr_t(self) -> sp.csr_matrix:
        return self.csr.T.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def is_symmetric(self, tol: float = 0.0) -> bool:
        if self.rows != self.cols:
            return False
        diff = abs(self.csr - self.csr_t)
        return diff.nnz == 0 or diff.max() <= tol

    def __matmul__(self, other):
        return spmm(self, other)


def spmm(a: SparseMatrix, x) -> Tensor:
    """Dense product ``a @ x``; the gradient w.r.t. ``x`` is ``a.T @ grad``."""
    x = as_tensor(x)
    if x.ndim != 2 or a.cols != x.shape[0]:
        raise ShapeError(f"cannot multiply sparse {a.shape} by {x.shape}")
    out = np.asarray(a.csr @ x.data)
    return make_op(out, (x,), lambda g: (np.asarray(a.csr_t @ g),))


def _adjacency(graph_or_csr):
    if hasattr(graph_or_csr, "adjacency"):
        return graph_or_csr.adjacency()
    return sp.csr_matrix(graph_or_csr, dtype=np.float64)


def normalize_adjacency(graph) -> SparseMatrix:
    """D^{-1/2}(A + I)D^{-1/2} with D the degree matrix of A + I."""
    a = _adjacency(graph)
    n = a.shape[0]
    a = (a + sp.identity(n, format="csr")).tocsr()
    a.data[:] = 1.0
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    coo = a.tocoo()
    vals = inv_sqrt[coo.row] * inv_sqrt[coo.col]
    return SparseMatrix.from_scipy(sp.csr_matrix((vals, (coo.row, coo.col)), shape=(n, n)))


def mean_adjacency(graph) -> SparseMatrix:
    """Row-normalized adjacency without self loops; isolated nodes get an all-zero row."""
    a = _adjacency(graph)
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return SparseMatrix.from_scipy(sp.diags(inv) @ a)


def self_loop_edges(graph) -> tuple[np.ndarray, np.ndarray]:
    """(src, dst) arrays of all directed edges plus one self loop per node, grouped by dst."""
    a = _adjacency(graph)
    n = a.shape[0]
    a = (a + sp.identity(n, format="csr")).tocsr()
    a.sort_indices()
    dst = np.repeat(np.arange(n), np.diff(a.indptr))
    return a.indices.astype(np.int64), dst
