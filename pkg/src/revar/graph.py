"""Graph data model, dataset ingestion, imbalanced split construction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    EmptySplitError,
    FormatError,
    IngestError,
    InsufficientBudgetError,
    InsufficientNodesError,
    InvalidSpecError,
)

SPLIT_MODES = ("step_imbalance", "natural_stratified", "explicit_counts")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=bool)))
        if not (len(self.train) == len(self.val) == len(self.test)):
            raise FormatError("split masks differ in length")
        if (self.train & self.val).any() or (self.train & self.test).any() or (self.val & self.test).any():
            raise FormatError("split masks overlap")
        if not self.train.any():
            raise EmptySplitError("training mask is empty")

    @property
    def unlabeled(self) -> np.ndarray:
        return ~self.train

    @classmethod
    def from_ids(cls, n, train, val=(), test=()):
        masks = []
        for ids in (train, val, test):
            m = np.zeros(n, dtype=bool)
            ids = np.asarray(ids, dtype=np.int64)
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise FormatError("split node id out of range")
            m[ids] = True
            masks.append(m)
        return cls(*masks)

    def to_json(self) -> dict:
        return {name: np.flatnonzero(getattr(self, name)).tolist() for name in ("train", "val", "test")}

    def __eq__(self, other):
        if not isinstance(other, SplitMasks):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("train", "val", "test"))


@dataclass(frozen=True)
class ClassCounts:
    """Number of training nodes per class (the sizes |C_i|)."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise InvalidSpecError("class counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_mask(cls, labels, mask, num_classes) -> "ClassCounts":
        return cls(tuple(np.bincount(np.asarray(labels)[np.asarray(mask, bool)], minlength=num_classes)))

    @property
    def total(self) -> int:
        return sum(self.counts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def __len__(self):
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "step_imbalance"
    base_per_class: int = 20
    rho: Fraction | float = 10
    total_budget: int | None = None
    val_per_class: int = 30
    seed: int = 0
    # step mode: override which class ids keep the full budget
    majority_classes: tuple | None = None
    # explicit_counts mode
    counts: tuple | None = None

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise InvalidSpecError(f"unknown split mode {self.mode!r}")
        if Fraction(self.rho) < 1:
            raise InvalidSpecError("rho must be >= 1")
        if self.base_per_class < 1:
            raise InvalidSpecError("base_per_class must be >= 1")
        if self.val_per_class < 0:
            raise InvalidSpecError("val_per_class must be >= 0")


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with CSR adjacency and dense float64 features."""

    num_nodes: int
    num_features: int
    num_classes: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    name: str = ""
    public_splits: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.num_nodes
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices) or np.any(np.diff(indptr) < 0):
            raise FormatError("malformed CSR row offsets")
        if features.shape != (n, self.num_features):
            raise FormatError(f"features have shape {features.shape}, expected {(n, self.num_features)}")
        if labels.shape != (n,):
            raise FormatError("label vector length differs from num_nodes")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise FormatError("label outside [0, num_classes)")
        if len(indices):
            if indices.min() < 0 or indices.max() >= n:
                raise FormatError("column index out of range")
            rows = np.repeat(np.arange(n), np.diff(indptr))
            if np.any(rows == indices):
                raise FormatError("self loops are not stored")
            # strictly increasing within a row
            same_row = rows[1:] == rows[:-1]
            if np.any(indices[1:][same_row] <= indices[:-1][same_row]):
                raise FormatError("column indices must be strictly increasing within each row")
            a = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))
            if (a != a.T).nnz:
                raise FormatError("adjacency is not symmetric")
        for name, arr in (("indptr", indptr), ("indices", indices), ("features", features), ("labels", labels)):
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def from_edges(cls, num_nodes, edges, features, labels, num_classes=None, name="", public_splits=None):
        """Build a graph from an undirected edge list, symmetrizing and deduplicating."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= num_nodes:
                raise FormatError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                loop = edges[edges[:, 0] == edges[:, 1]][0]
                raise FormatError(f"self loop {loop[0]}-{loop[1]} not allowed")
        both = np.concatenate([edges, edges[:, ::-1]])
        a = sp.csr_matrix((np.ones(len(both)), (both[:, 0], both[:, 1])), shape=(num_nodes, num_nodes))
        a.sum_duplicates()
        a.sort_indices()
        labels = np.asarray(labels, dtype=np.int64)
        features = np.asarray(features, dtype=np.float64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if len(labels) else 0
        return cls(
            num_nodes=int(num_nodes),
            num_features=features.shape[1] if features.ndim == 2 else 0,
            num_classes=int(num_classes),
            indptr=a.indptr,
            indices=a.indices,
            features=features,
            labels=labels,
            name=name,
            public_splits=dict(public_splits or {}),
        )

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return len(self.indices) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.ones(len(self.indices)), self.indices, self.indptr), shape=(self.num_nodes, self.num_nodes)
        )

    @cached_property
    def edge_list(self) -> np.ndarray:
        """Each undirected edge once, as (u, v) rows with u < v, in CSR order."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = rows < self.indices
        out = np.stack([rows[keep], self.indices[keep]], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def feature_csr(self):
        """Features as a constant :class:`~revar.sparse.SparseMatrix`."""
        from .sparse import SparseMatrix

        return SparseMatrix.from_scipy(sp.csr_matrix(self.features))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# ---------------------------------------------------------------------------
# ingestion


def load_dataset(dir_path) -> Graph:
    """Read a dataset directory (meta.json, edges.tsv, features.tsv, labels.tsv, splits/)."""
    root = Path(dir_path)
    required = ["meta.json", "edges.tsv", "features.tsv", "labels.tsv"]
    for fname in required:
        if not (root / fname).is_file():
            raise IngestError(f"{root / fname} is missing")
    try:
        meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
        n = int(meta["num_nodes"])
        f = int(meta["num_features"])
        k = int(meta["num_classes"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad meta.json: {exc}") from exc

    try:
        edges = np.loadtxt(root / "edges.tsv", dtype=np.int64, delimiter="\t", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"bad edges.tsv: {exc}") from exc
    if edges.size == 0:
        edges = np.zeros((0, 2), dtype=np.int64)
    if edges.shape[1] != 2:
        raise FormatError("edges.tsv must have two columns")
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise FormatError("edge endpoint out of range")

    try:
        features = np.loadtxt(root / "features.tsv", dtype=np.float64, delimiter="\t", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"bad features.tsv: {exc}") from exc
    if features.shape[0] != n:
        raise FormatError(f"features.tsv has {features.shape[0]} rows, expected {n}")
    if features.shape[1] != f:
        raise FormatError(f"features.tsv has {features.shape[1]} columns, expected {f}")

    try:
        labels = np.loadtxt(root / "labels.tsv", dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise FormatError(f"bad labels.tsv: {exc}") from exc
    if labels.shape != (n,):
        raise FormatError(f"labels.tsv has {labels.size} rows, expected {n}")

    splits = {}
    split_dir = root / "splits"
    if split_dir.is_dir():
        for path in sorted(split_dir.glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            splits[path.stem] = SplitMasks.from_ids(n, data.get("train", []), data.get("val", []), data.get("test", []))

    return Graph.from_edges(n, edges, features, labels, num_classes=k, name=meta.get("name", root.name),
                            public_splits=splits)


def save_dataset(graph: Graph, dir_path, float_format="%.17g") -> Path:
    """Write ``graph`` in the directory layout read by :func:`load_dataset`."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"num_nodes": graph.num_nodes, "num_features": graph.num_features,
            "num_classes": graph.num_classes, "name": graph.name}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    with open(root / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in graph.edge_list:
            fh.write(f"{u}\t{v}\n")
    np.savetxt(root / "features.tsv", graph.features, delimiter="\t", fmt=float_format, newline="\n")
    np.savetxt(root / "labels.tsv", graph.labels, fmt="%d", newline="\n")
    for name, masks in graph.public_splits.items():
        save_split(masks, root / "splits" / f"{name}.json")
    return root


def save_split(masks: SplitMasks, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(masks.to_json()) + "\n", encoding="utf-8")
    return path


def load_split(path, num_nodes) -> SplitMasks:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return SplitMasks.from_ids(num_nodes, data["train"], data.get("val", []), data.get("test", []))


# ---------------------------------------------------------------------------
# splits


def imbalance_ratio(counts) -> Fraction:
    """max/min over the classes that have at least one labeled node."""
    arr = np.asarray(list(counts), dtype=np.int64)
    pos = arr[arr > 0]
    if pos.size == 0:
        raise EmptySplitError("no class has a labeled node")
    return Fraction(int(pos.max()), int(pos.min()))


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def step_counts(num_classes: int, base_per_class: int, rho, majority=None) -> list[int]:
    """Per-class training counts for the step-imbalance protocol."""
    if majority is None:
        majority = range(math.ceil(num_classes / 2))
    majority = set(int(c) for c in majority)
    minority_count = max(1, _round_half_up(Fraction(base_per_class) / Fraction(rho)))
    return [base_per_class if c in majority else minority_count for c in range(num_classes)]


def largest_remainder_counts(class_sizes, budget: int) -> list[int]:
    """Proportional allocation of ``budget`` with at least one node per represented class."""
    sizes = np.asarray(class_sizes, dtype=np.int64)
    present = sizes > 0
    if budget < present.sum():
        raise InsufficientBudgetError(f"budget {budget} smaller than {present.sum()} represented classes")
    total = int(sizes.sum())
    quotas = [Fraction(int(s) * budget, total) for s in sizes]
    counts = [max(math.floor(q), 1) if s > 0 else 0 for q, s in zip(quotas, sizes)]
    # the minimum-one floor can overshoot; give back from the largest surpluses
    while sum(counts) > budget:
        surplus = [(Fraction(c) - q, -i) for i, (c, q) in enumerate(zip(counts, quotas)) if c > 1]
        i = -max(surplus)[1]
        counts[i] -= 1
    remainders = [(q - math.floor(q) if s > 0 and c == math.floor(q) else Fraction(-1), -i)
                  for i, (q, c, s) in enumerate(zip(quotas, counts, sizes))]
    order = [-i for _, i in sorted(remainders, reverse=True)]
    for i in order[: budget - sum(counts)]:
        counts[i] += 1
    return counts


def _sample_split(graph: Graph, train_counts, val_per_class, rng, pool=None) -> SplitMasks:
    n = graph.num_nodes
    pool = np.ones(n, dtype=bool) if pool is None else np.asarray(pool, dtype=bool)
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    for c, need in enumerate(train_counts):
        cand = np.flatnonzero((graph.labels == c) & pool)
        if need > len(cand):
            raise InsufficientNodesError(f"class {c} has {len(cand)} candidates, {need} required")
        train[rng.choice(cand, size=need, replace=False)] = True
    if val_per_class:
        for c in range(graph.num_classes):
            if train_counts[c] == 0:
                continue
            cand = np.flatnonzero((graph.labels == c) & ~train)
            if val_per_class > len(cand):
                raise InsufficientNodesError(f"class {c} has {len(cand)} nodes left for validation")
            val[rng.choice(cand, size=val_per_class, replace=False)] = True
    test = ~(train | val)
    return SplitMasks(train, val, test)


def make_step_imbalanced_split(graph: Graph, spec: SplitSpec, public_train=None) -> SplitMasks:
    """Undersample the minority half of the classes to reach ``spec.rho``.

    ``public_train`` may be a :class:`SplitMasks` (its val/test are kept and
    only its train set is undersampled), or a boolean mask / id list that
    restricts the training candidates (val/test then drawn at random).
    """
    if spec.mode != "step_imbalance":
        raise InvalidSpecError("make_step_imbalanced_split needs mode='step_imbalance'")
    counts = step_counts(graph.num_classes, spec.base_per_class, spec.rho, spec.majority_classes)
    rng = np.random.default_rng(spec.seed)
    n = graph.num_nodes

    if isinstance(public_train, SplitMasks):
        train = np.zeros(n, dtype=bool)
        for c, need in enumerate(counts):
            cand = np.flatnonzero(public_train.train & (graph.labels == c))
            if need > len(cand):
                raise InsufficientNodesError(f"class {c} has {len(cand)} public training nodes, {need} required")
            train[rng.choice(cand, size=need, replace=False)] = True
        return SplitMasks(train, public_train.val.copy(), public_train.test.copy())

    pool = None
    if public_train is not None:
        arr = np.asarray(public_train)
        if arr.dtype == bool:
            pool = arr
        else:
            pool = np.zeros(n, dtype=bool)
            pool[arr.astype(np.int64)] = True
    return _sample_split(graph, counts, spec.val_per_class, rng, pool)


def make_natural_split(graph: Graph, spec: SplitSpec) -> SplitMasks:
    """Training counts proportional to the full-graph label distribution."""
    if spec.mode != "natural_stratified":
        raise InvalidSpecError("make_natural_split needs mode='natural_stratified'")
    if spec.total_budget is None:
        raise InvalidSpecError("natural split needs total_budget")
    counts = largest_remainder_counts(graph.label_counts(), int(spec.total_budget))
    return _sample_split(graph, counts, spec.val_per_class, np.random.default_rng(spec.seed))


def make_explicit_split(graph: Graph, spec: SplitSpec) -> SplitMasks:
    if spec.mode != "explicit_counts" or spec.counts is None:
        raise InvalidSpecError("explicit split needs mode='explicit_counts' and counts")
    if len(spec.counts) != graph.num_classes:
        raise InvalidSpecError("one count per class required")
    return _sample_split(graph, list(spec.counts), spec.val_per_class, np.random.default_rng(spec.seed))


def make_split(graph: Graph, spec: SplitSpec, public=None) -> SplitMasks:
    if spec.mode == "step_imbalance":
        return make_step_imbalanced_split(graph, spec, public)
    if spec.mode == "natural_stratified":
        return make_natural_split(graph, spec)
    return make_explicit_split(graph, spec)


# ---------------------------------------------------------------------------
# synthetic fixtures


def synth_graph(
    k: int,
    per_class: Sequence[int],
    f: int,
    homophily: float,
    seed: int,
    *,
    edge_prob: float | None = None,
    class_sep: float = 1.0,
    name: str = "synth",
) -> Graph:
    """Gaussian-feature stochastic block graph.

    Features of class ``c`` are ``mu_c + sqrt(lam_c) * z`` with a diagonal
    ``lam_c``; a node pair is connected with probability
    ``homophily * edge_prob`` inside a class and ``(1 - homophily) * edge_prob``
    across classes.
    """
    per_class = [int(c) for c in per_class]
    if k < 2 or f < 1:
        raise InvalidSpecError("need k >= 2 and f >= 1")
    if len(per_class) != k:
        raise InvalidSpecError("per_class needs one entry per class")
    if any(c <= 0 for c in per_class):
        raise InvalidSpecError("every class needs at least one node")
    if not 0.0 <= homophily <= 1.0:
        raise InvalidSpecError("homophily must be in [0, 1]")
    rng = np.random.default_rng(seed)
    n = sum(per_class)
    if edge_prob is None:
        edge_prob = min(1.0, 10.0 / n)
    labels = np.repeat(np.arange(k), per_class)
    mu = rng.normal(0.0, class_sep, size=(k, f))
    lam = rng.uniform(0.5, 1.5, size=(k, f))
    features = mu[labels] + np.sqrt(lam[labels]) * rng.standard_normal((n, f))

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, homophily * edge_prob, (1.0 - homophily) * edge_prob)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    return Graph.from_edges(n, edges, features, labels, num_classes=k, name=name)
