"""Classification metrics, prediction variance across training sets, and the variance-vs-imbalance study."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ConfigError, ContractError, DegenerateInput, InsufficientNodesError


@dataclass(frozen=True)
class MetricsReport:
    balanced_accuracy: float
    macro_f1: float
    accuracy: float
    per_class_recall: tuple
    per_class_precision: tuple
    per_class_f1: tuple
    confusion: tuple
    present: tuple

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("per_class_recall", "per_class_precision", "per_class_f1", "present"):
            d[key] = list(d[key])
        d["confusion"] = [list(r) for r in self.confusion]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            float(d["balanced_accuracy"]), float(d["macro_f1"]), float(d["accuracy"]),
            tuple(d["per_class_recall"]), tuple(d["per_class_precision"]), tuple(d["per_class_f1"]),
            tuple(tuple(r) for r in d["confusion"]), tuple(d["present"]),
        )


def confusion_matrix(pred, true, k: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def metrics(pred_labels, true_labels, mask, k: int) -> MetricsReport:
    """Balanced accuracy and macro-F1, both averaged over classes present among the masked nodes."""
    pred_labels, true_labels = np.asarray(pred_labels), np.asarray(true_labels)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if len(idx) == 0:
        raise ContractError("metrics over an empty mask")
    cm = confusion_matrix(pred_labels[idx], true_labels[idx], k)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    recall = np.divide(tp, support, out=np.zeros(k), where=support > 0)
    precision = np.divide(tp, predicted, out=np.zeros(k), where=predicted > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(k), where=denom > 0)
    present = support > 0
    return MetricsReport(
        balanced_accuracy=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
        accuracy=float(tp.sum() / len(idx)),
        per_class_recall=tuple(recall.tolist()),
        per_class_precision=tuple(precision.tolist()),
        per_class_f1=tuple(f1.tolist()),
        confusion=tuple(tuple(int(x) for x in row) for row in cm),
        present=tuple(np.flatnonzero(present).tolist()),
    )


def prediction_variance(score_sets, eval_mask=None) -> float:
    """Mean over evaluated nodes of the per-class unbiased variance across repeats, summed over classes."""
    scores = np.asarray([np.asarray(s, dtype=np.float64) for s in score_sets])
    if scores.ndim != 3:
        raise ContractError("score sets must be a list of n x k matrices of equal shape")
    if scores.shape[0] < 2:
        raise ContractError("prediction variance needs at least 2 repeats")
    if eval_mask is not None:
        eval_mask = np.asarray(eval_mask)
        idx = np.flatnonzero(eval_mask) if eval_mask.dtype == bool else eval_mask.astype(np.int64)
        scores = scores[:, idx]
    return float(scores.var(axis=0, ddof=1).sum(axis=1).mean())


def variance_contributions(score_sets, eval_mask=None) -> np.ndarray:
    """Per-repeat share of :func:`prediction_variance`; the shares sum to the total."""
    scores = np.asarray(score_sets, dtype=np.float64)
    if eval_mask is not None:
        eval_mask = np.asarray(eval_mask)
        idx = np.flatnonzero(eval_mask) if eval_mask.dtype == bool else eval_mask.astype(np.int64)
        scores = scores[:, idx]
    dev = scores - scores.mean(axis=0)
    r = scores.shape[0]
    return (dev**2).sum(axis=2).mean(axis=1) / (r - 1)


def pearson_test(x, y) -> tuple[float, float]:
    """Sample Pearson r and the two-sided p-value of H0: r = 0 via the t statistic with n - 2 dof."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("x and y must be vectors of equal length")
    n = len(x)
    if n < 3:
        raise ContractError("pearson test needs at least 3 points")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(xc @ xc)), math.sqrt(float(yc @ yc))
    if sx <= 1e-300 or sy <= 1e-300 or sx <= 1e-14 * np.abs(x).max() or sy <= 1e-14 * np.abs(y).max():
        raise DegenerateInput("zero variance input")
    r = float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))
    return r, pearson_p_value(r, n)


def pearson_p_value(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), df=n - 2))


# variance-vs-imbalance study --------------------------------------------------------


@dataclass(frozen=True)
class VarianceStudyConfig:
    dataset: str = ""
    arch: str = "gcn"
    start_per_class: int = 200
    shift_step: int = 1
    num_ratios: int = 42
    repeats_per_ratio: int = 20
    epochs: int = 2000
    seed: int = 0
    lr: float = 0.01
    weight_decay: float = 5e-4
    hidden: int = 128
    layers: int = 2
    tau: float = 1.0
    eval_fraction: float = 0.3
    var_on: str = "scores"

    def __post_init__(self):
        if self.start_per_class <= (self.num_ratios - 1) * self.shift_step:
            raise ConfigError("start_per_class must exceed (num_ratios - 1) * shift_step")
        if self.num_ratios < 1 or self.repeats_per_ratio < 1 or self.shift_step < 1:
            raise ConfigError("num_ratios, repeats_per_ratio and shift_step must be >= 1")
        if self.var_on not in ("scores", "probs"):
            raise ConfigError("var_on must be 'scores' or 'probs'")
        if not 0 < self.eval_fraction < 1:
            raise ConfigError("eval_fraction must lie in (0, 1)")

    @classmethod
    def reduced(cls, **kw) -> "VarianceStudyConfig":
        """Desk-scale profile: 10 repeats, 8 ratios, 300 epochs."""
        base = dict(repeats_per_ratio=10, num_ratios=8, epochs=300, shift_step=20)
        base.update(kw)
        return cls(**base)


@dataclass
class RegressionResult:
    points: list
    slope: float
    intercept: float
    pearson_r: float
    p_value: float
    rows: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"r": self.pearson_r, "p": self.p_value, "slope": self.slope, "intercept": self.intercept,
                "points": [list(p) for p in self.points]}

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho", "log_rho", "repeat", "variance_contribution", "variance"])
            for row in self.rows:
                w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def write_svg(self, path) -> Path:
        from .plots import scatter_with_line

        xs, ys = zip(*self.points) if self.points else ((), ())
        return scatter_with_line(path, xs, ys, self.slope, self.intercept,
                                 xlabel="log imbalance ratio", ylabel="prediction variance",
                                 title=f"r = {self.pearson_r:.3f}, p = {self.p_value:.2e}")


def shifted_counts(class_sizes, start: int, shift: int, step: int) -> list[int]:
    """Move ``step * shift`` labels from each of the k//2 smallest classes to each of the k//2 largest.

    With an odd class count the median class keeps ``start``; the total is constant.
    """
    sizes = np.asarray(class_sizes)
    k = len(sizes)
    order = np.argsort(-sizes, kind="stable")
    counts = np.full(k, start, dtype=np.int64)
    counts[order[: k // 2]] += step * shift
    counts[order[k - k // 2 :]] -= step * shift
    return counts.tolist()


def regress(points) -> tuple[float, float, float, float]:
    """Least-squares slope/intercept and Pearson test of variance on log ratio."""
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    r, p = pearson_test(xs, ys)
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept), r, p


def variance_study(cfg: VarianceStudyConfig, graph=None, score_fn=None, jobs: int = 1) -> RegressionResult:
    """Prediction variance across re-sampled training sets as labels shift from minority to majority classes.

    ``score_fn(train_counts, repeat_seed) -> n x k`` supplies the score matrix of
    one repeat; by default an encoder is trained with the center-similarity
    classifier on ``graph`` and its scores ``h(x)^T C^i`` are returned.  With a
    custom ``score_fn`` the graph is optional and all nodes are evaluated.
    """
    if score_fn is None:
        if graph is None:
            raise ContractError("variance_study needs a graph or a score function")
        sizes = graph.label_counts()
        eval_mask, pool = _holdout(graph, cfg)
        score_fn = _TrainedScores(graph, cfg, pool)
    else:
        sizes = graph.label_counts() if graph is not None else None
        eval_mask = None

    points, rows = [], []
    for step in range(cfg.num_ratios):
        if sizes is not None:
            counts = shifted_counts(sizes, cfg.start_per_class, cfg.shift_step, step)
        else:
            counts = [cfg.start_per_class + step * cfg.shift_step, cfg.start_per_class - step * cfg.shift_step]
        rho = max(counts) / min(counts)
        seeds = [_repeat_seed(cfg.seed, step, r) for r in range(cfg.repeats_per_ratio)]
        score_sets = _map(lambda s: score_fn(counts, s), seeds, jobs)
        var = prediction_variance(score_sets, eval_mask)
        contrib = variance_contributions(score_sets, eval_mask)
        for r, c in enumerate(contrib):
            rows.append([rho, math.log(rho), r, float(c), var])
        points.append((math.log(rho), var))
    if len(points) < 3:
        raise DegenerateInput("regression needs at least 3 imbalance ratios")
    slope, intercept, r, p = regress(points)
    return RegressionResult(points, slope, intercept, r, p, rows)


def _repeat_seed(seed: int, step: int, repeat: int) -> int:
    # training sets depend on the repeat only, so every ratio re-uses the same draws of randomness
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1)[0])


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _holdout(graph, cfg: VarianceStudyConfig):
    """Stratified held-out evaluation nodes, never used for training; the rest is the training pool."""
    rng = np.random.default_rng([cfg.seed, 0xE7A1])
    eval_mask = np.zeros(graph.num_nodes, dtype=bool)
    for c in range(graph.num_classes):
        ids = np.flatnonzero(graph.labels == c)
        take = int(round(cfg.eval_fraction * len(ids)))
        eval_mask[rng.choice(ids, size=take, replace=False)] = True
    return eval_mask, ~eval_mask


class _TrainedScores:
    def __init__(self, graph, cfg: VarianceStudyConfig, pool):
        self.graph, self.cfg, self.pool = graph, cfg, pool

    def __call__(self, counts, seed):
        from .trainer import train_center_classifier

        rng = np.random.default_rng(seed)
        train = np.zeros(self.graph.num_nodes, dtype=bool)
        for c, need in enumerate(counts):
            ids = np.flatnonzero(self.pool & (self.graph.labels == c))
            if len(ids) < need:
                raise InsufficientNodesError(f"class {c} has {len(ids)} candidates, needs {need}")
            train[rng.choice(ids, size=need, replace=False)] = True
        scores, probs = train_center_classifier(self.graph, train, self.cfg)
        return scores if self.cfg.var_on == "scores" else probs


def gaussian_score_fn(num_nodes: int, num_classes: int, dim: int, seed: int = 0, scale: float = 1.0):
    """Scores h(x)^T C^i with C^i ~ N(mu^i, Lambda^i / n_i): variance grows with sum 1/n_i by construction."""
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(num_nodes, dim))
    mu = rng.normal(size=(num_classes, dim))
    lam = rng.uniform(0.5, 1.5, size=(num_classes, dim)) * scale

    def score(counts, repeat_seed):
        counts = np.asarray(counts, dtype=np.float64)
        r = np.random.default_rng(repeat_seed)
        centers = mu + r.normal(size=mu.shape) * np.sqrt(lam / counts[:, None])
        return h @ centers.T

    return score


def exact_variance_score_fn(num_nodes: int, num_classes: int, repeats: int, seed: int = 0):
    """Scores whose across-repeat unbiased variance is exactly ``1 / n_i`` per (node, class).

    Every repeat index maps to a fixed row of a standardized design, so the
    statistic is a deterministic function of the counts.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(repeats, num_nodes, num_classes))
    z -= z.mean(axis=0)
    z /= np.sqrt((z**2).sum(axis=0) / (repeats - 1))
    base = rng.normal(size=(num_nodes, num_classes))
    index = {}

    def score(counts, repeat_seed):
        r = index.setdefault(repeat_seed, len(index) % repeats)
        return base + z[r] / np.sqrt(np.asarray(counts, dtype=np.float64))

    return score
