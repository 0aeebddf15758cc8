"""Class centers, center-similarity label distributions and the training objectives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, EmptyClassError, EmptySplitError, NumericError, ShapeError
from .graph import ClassCounts
from .sparse import SparseMatrix, spmm

LOG_CLAMP = 1e-12
IR_NORMALIZERS = ("distinct_pairs", "pair_count")
BASELINES = ("reweight", "balanced_softmax", "pc_softmax")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau: float = 0.13
    v: float = 0.9

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be nonnegative")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not 0 < self.v <= 1:
            raise ConfigError("confidence threshold must lie in (0, 1]")


@dataclass
class Diagnostics:
    """Counters for the numerical conventions applied silently inside the losses."""

    log_clamped: int = 0
    zero_norm_rows: int = 0

    def as_dict(self) -> dict:
        return {"log_clamped": self.log_clamped, "zero_norm_rows": self.zero_norm_rows}


@dataclass(frozen=True, eq=False)
class ClassCenters:
    centers: Tensor
    counts: ClassCounts


@dataclass(frozen=True, eq=False)
class LabelDistribution:
    probs: Tensor
    zero_norm_rows: int = 0

    def __post_init__(self):
        if not isinstance(self.probs, Tensor):
            object.__setattr__(self, "probs", Tensor(self.probs))

    @property
    def data(self) -> np.ndarray:
        return self.probs.data


@dataclass(frozen=True, eq=False)
class ConfidentSet:
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.ids)

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.ids] = True
        return m


@dataclass(frozen=True, eq=False)
class LossParts:
    vr: Tensor
    ir: Tensor
    sup: Tensor


def _probs(x) -> Tensor:
    return x.probs if isinstance(x, LabelDistribution) else ad.as_tensor(x)


def _mask(mask, n) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype != bool:
        out = np.zeros(n, dtype=bool)
        out[mask.astype(np.int64)] = True
        return out
    return mask


def class_sum_matrix(labels, mask, num_classes, mean=False) -> SparseMatrix:
    """k x n operator summing (or averaging) masked rows per class."""
    labels = np.asarray(labels)
    idx = np.flatnonzero(_mask(mask, len(labels)))
    vals = np.ones(len(idx))
    if mean:
        counts = np.bincount(labels[idx], minlength=num_classes)
        vals = 1.0 / counts[labels[idx]]
    m = sp.csr_matrix((vals, (labels[idx], idx)), shape=(num_classes, len(labels)))
    return SparseMatrix.from_scipy(m)


def class_centers(h, labels, train_mask, num_classes: int | None = None) -> ClassCenters:
    """Mean embedding of the training nodes of each class."""
    h = ad.as_tensor(h)
    labels = np.asarray(labels)
    train_mask = _mask(train_mask, len(labels))
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    counts = ClassCounts.from_mask(labels, train_mask, k)
    empty = [i for i, c in enumerate(counts.counts) if c == 0]
    if empty:
        raise EmptyClassError(f"classes {empty} have no labeled nodes")
    return ClassCenters(spmm(class_sum_matrix(labels, train_mask, k, mean=True), h), counts)


def cosine_similarity(a, b) -> Tensor:
    """Row-by-row cosine matrix; a zero-norm row has similarity 0 to everything."""
    return ad.matmul(ad.normalize_rows(a), ad.transpose(ad.normalize_rows(b)))


def label_distribution(h, centers, tau: float) -> LabelDistribution:
    """Softmax over classes of cos(h_i, C_j) / tau."""
    if not tau > 0:
        raise ConfigError("tau must be positive")
    h = ad.as_tensor(h)
    c = centers.centers if isinstance(centers, ClassCenters) else ad.as_tensor(centers)
    zero = int(np.sum(~np.any(h.data, axis=1)) + np.sum(~np.any(c.data, axis=1)))
    return LabelDistribution(ad.softmax(cosine_similarity(h, c) * (1.0 / tau), axis=1), zero)


def confident_set(pi_target, v: float, unlabeled_mask) -> ConfidentSet:
    """Unlabeled nodes whose largest target probability strictly exceeds ``v``."""
    if not 0 < v <= 1:
        raise ConfigError("confidence threshold must lie in (0, 1]")
    p = _probs(pi_target).data
    unlabeled_mask = _mask(unlabeled_mask, p.shape[0])
    return ConfidentSet(np.flatnonzero(unlabeled_mask & (p.max(axis=1) > v)))


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def replace_labeled(pi_target, labels, train_mask, stop_gradient: bool = True) -> Tensor:
    """Target distribution with labeled rows overwritten by their one-hot labels."""
    p = _probs(pi_target)
    if stop_gradient:
        p = p.detach()
    lab = _mask(train_mask, p.shape[0])[:, None].astype(np.float64)
    return p * (1.0 - lab) + one_hot(labels, p.shape[1]) * lab


def _clamped_log(q: Tensor, diag: Diagnostics | None) -> Tensor:
    if diag is not None:
        diag.log_clamped += int(np.sum(q.data < LOG_CLAMP))
    return ad.log(q, clamp=LOG_CLAMP)


def loss_vr(pi_pred, pi_target, onehot_labels, conf: ConfidentSet, train_mask,
            stop_gradient: bool = True, diag: Diagnostics | None = None) -> Tensor:
    """Confidence-gated cross-entropy from the target view to the predicting view.

    Mean CE(target_i, pred_i) over the confident unlabeled nodes plus mean
    CE(y_i, pred_i) over the labeled nodes.  The target is detached unless
    ``stop_gradient`` is off.
    """
    q = _probs(pi_pred)
    t = _probs(pi_target)
    if stop_gradient:
        t = t.detach()
    n = q.shape[0]
    train_mask = _mask(train_mask, n)
    logq = _clamped_log(q, diag)
    total = Tensor(0.0)
    ids = np.asarray(conf.ids if isinstance(conf, ConfidentSet) else conf, dtype=np.int64)
    if len(ids):
        ce = -ad.tsum(ad.take_rows(t, ids) * ad.take_rows(logq, ids))
        total = total + ce * (1.0 / len(ids))
    lab = np.flatnonzero(train_mask)
    if len(lab):
        y = np.asarray(onehot_labels, dtype=np.float64)
        if y.ndim == 1:
            y = one_hot(y, q.shape[1])
        total = total - ad.tsum(ad.take_rows(logq, lab) * y[lab]) * (1.0 / len(lab))
    return total


def ir_normalizer(class_sizes, mode: str = "distinct_pairs") -> float:
    """Labeled-pair normalizer: sum c(c-1), or the true count of summed pairs."""
    c = np.asarray(class_sizes, dtype=np.float64)
    if mode == "distinct_pairs":
        return float(np.sum(c * (c - 1)))
    if mode == "pair_count":
        return float(np.sum(c * c) + np.sum(c * (c - 1)))
    raise ConfigError(f"ir normalizer must be one of {IR_NORMALIZERS}")


def loss_ir(h, h_prime, labels, train_mask, unlabeled_mask, normalizer: str = "distinct_pairs",
            num_classes: int | None = None) -> Tensor:
    """Positive-only alignment: unlabeled nodes with their other-view copy, labeled nodes with their class.

    The cross-view same-class sum includes i == j; the within-view sum excludes it.
    When every class has a single labeled node the labeled term is 0.
    """
    h, h_prime = ad.as_tensor(h), ad.as_tensor(h_prime)
    if h.shape != h_prime.shape:
        raise ShapeError(f"view embeddings differ in shape: {h.shape} vs {h_prime.shape}")
    labels = np.asarray(labels)
    n = h.shape[0]
    train_mask, unlabeled_mask = _mask(train_mask, n), _mask(unlabeled_mask, n)
    z, zp = ad.normalize_rows(h), ad.normalize_rows(h_prime)
    total = Tensor(0.0)
    unl = np.flatnonzero(unlabeled_mask)
    if len(unl):
        total = total - ad.tsum(ad.take_rows(z, unl) * ad.take_rows(zp, unl)) * (1.0 / len(unl))
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    sizes = np.bincount(labels[train_mask], minlength=k)
    if ir_normalizer(sizes, "distinct_pairs") == 0:
        return total
    norm = ir_normalizer(sizes, normalizer)
    m = class_sum_matrix(labels, train_mask, k)
    s, sp_ = spmm(m, z), spmm(m, zp)
    lab = np.flatnonzero(train_mask)
    zl = ad.take_rows(z, lab)
    cross = ad.tsum(s * sp_)
    within = ad.tsum(s * s) - ad.tsum(zl * zl)
    return total - (cross + within) * (1.0 / norm)


def cross_entropy(logits, labels, rows=None) -> Tensor:
    """Mean softmax cross-entropy of ``logits[rows]`` against integer labels."""
    logits = ad.as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if rows is None:
        rows = np.arange(logits.shape[0])
    rows = np.flatnonzero(rows) if np.asarray(rows).dtype == bool else np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        raise EmptySplitError("cross-entropy over an empty node set")
    logp = ad.log_softmax(ad.take_rows(logits, rows), axis=1)
    picked = logp * one_hot(labels[rows], logits.shape[1])
    return -ad.tsum(picked) * (1.0 / len(rows))


def loss_sup(logits_v1, logits_v2, labels, train_mask) -> Tensor:
    """Average of the labeled-node cross-entropies of the two views."""
    labels = np.asarray(labels)
    train_mask = _mask(train_mask, len(labels))
    if not train_mask.any():
        raise EmptySplitError("train mask is empty")
    return cross_entropy(logits_v1, labels, train_mask) * 0.5 + cross_entropy(logits_v2, labels, train_mask) * 0.5


def composite_loss(parts, weights: LossWeights) -> Tensor:
    """lambda1 * L_VR + lambda2 * L_IR + L_sup."""
    vr, ir, sup = (parts.vr, parts.ir, parts.sup) if isinstance(parts, LossParts) else parts
    vr, ir, sup = ad.as_tensor(vr), ad.as_tensor(ir), ad.as_tensor(sup)
    for name, t in (("L_VR", vr), ("L_IR", ir), ("L_sup", sup)):
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"{name} is not finite")
    return vr * weights.lambda1 + ir * weights.lambda2 + sup


# imbalance baselines ------------------------------------------------------------


def _positive_counts(counts) -> np.ndarray:
    c = counts.as_array() if isinstance(counts, ClassCounts) else np.asarray(counts)
    c = c.astype(np.float64)
    if np.any(c <= 0):
        raise EmptyClassError(f"classes {np.flatnonzero(c <= 0).tolist()} have no labeled nodes")
    return c


def reweight_factors(counts) -> np.ndarray:
    """N / (k n_i) per class."""
    c = _positive_counts(counts)
    return c.sum() / (len(c) * c)


def pc_softmax_logits(logits, counts, prior_test=None) -> Tensor:
    """Post-hoc prior correction: logits - log(train prior) + log(test prior), uniform test prior by default."""
    c = _positive_counts(counts)
    k = len(c)
    prior_test = np.full(k, 1.0 / k) if prior_test is None else np.asarray(prior_test, dtype=np.float64)
    return ad.as_tensor(logits) + (np.log(prior_test) - np.log(c / c.sum()))


def baseline_loss(kind: str, logits, labels, counts, prior_test=None, rows=None) -> Tensor:
    """Imbalance-aware losses.

    ``reweight`` and ``balanced_softmax`` return a scalar loss over ``rows``
    (all rows by default); ``pc_softmax`` returns the adjusted logits, the
    correction being an inference-time operation.
    """
    logits = ad.as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if kind == "pc_softmax":
        return pc_softmax_logits(logits, counts, prior_test)
    if rows is None:
        rows = np.arange(logits.shape[0])
    rows = np.flatnonzero(rows) if np.asarray(rows).dtype == bool else np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        raise EmptySplitError("baseline loss over an empty node set")
    if kind == "reweight":
        w = reweight_factors(counts)[labels[rows]]
        logp = ad.log_softmax(ad.take_rows(logits, rows), axis=1)
        picked = logp * (one_hot(labels[rows], logits.shape[1]) * w[:, None])
        return -ad.tsum(picked) * (1.0 / len(rows))
    if kind == "balanced_softmax":
        shifted = ad.take_rows(logits, rows) + np.log(_positive_counts(counts))
        return cross_entropy(shifted, labels[rows])
    raise ConfigError(f"baseline must be one of {BASELINES}")
