"""Training loop: Adam with coupled weight decay, plateau LR halving, early stopping, model selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import GraphView, ViewPair, make_views
from .config import SEARCH_GRID, RunConfig, TrainConfig
from .errors import ContractError, NumericError, ShapeError
from .evalstats import MetricsReport, metrics
from .graph import ClassCounts, Graph, SplitMasks
from .losses import (
    Diagnostics,
    LossParts,
    LossWeights,
    baseline_loss,
    class_centers,
    composite_loss,
    confident_set,
    label_distribution,
    loss_ir,
    loss_sup,
    loss_vr,
    pc_softmax_logits,
    replace_labeled,
)
from .nn import EncoderConfig, ModelParams, classifier_forward, encoder_forward, init_params


# optimizer -------------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state: OptimizerState, lr: float, weight_decay: float = 0.0):
    """One in-place Adam update with bias correction; weight decay is added to the gradient.

    ``params`` maps names to arrays (or Tensors / ModelParams); ``grads`` maps the
    same names to gradient arrays, a missing or ``None`` entry counting as zero.
    """
    if isinstance(params, ModelParams):
        params = params.params
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2_sqrt = np.sqrt(1.0 - b2**t)
    for name, p in params.items():
        data = p.data if isinstance(p, ad.Tensor) else p
        g = grads.get(name)
        g = np.zeros_like(data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != data.shape:
            raise ShapeError(f"gradient of {name} has shape {g.shape}, parameter {data.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}", parameter=name)
        if weight_decay:
            g = g + weight_decay * data
        m = state.m.setdefault(name, np.zeros_like(data))
        v = state.v.setdefault(name, np.zeros_like(data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        denom = np.sqrt(v) / bc2_sqrt + state.eps
        data -= (lr / bc1) * (m / denom)
    return params, state


@dataclass
class SchedulerState:
    lr: float
    patience: int = 100
    factor: float = 0.5
    best: float = float("inf")
    num_bad: int = 0


def lr_plateau_update(state: SchedulerState, val_loss_history) -> float:
    """Feed the newest validation loss; halve the LR after ``patience`` epochs without a strict new minimum.

    The first recorded loss only sets the reference, so a run that is flat from
    the start halves at epochs patience, 2 * patience, ...
    """
    if len(val_loss_history) == 0:
        raise ContractError("validation loss history is empty")
    current = float(val_loss_history[-1])
    if current < state.best and len(val_loss_history) > 1:
        state.best = current
        state.num_bad = 0
    else:
        state.best = min(state.best, current)
        state.num_bad += 1
    if state.num_bad >= state.patience:
        state.lr *= state.factor
        state.num_bad = 0
    return state.lr


def early_stop_check(val_acc_history, patience: int = 300) -> bool:
    """True once ``patience`` epochs have passed since the first epoch reaching the best accuracy."""
    if len(val_acc_history) == 0:
        return False
    best_epoch = int(np.argmax(np.asarray(val_acc_history))) + 1
    return len(val_acc_history) - best_epoch >= patience


# run records ---------------------------------------------------------------------------

EPOCH_FIELDS = ("epoch", "loss", "vr", "ir", "sup", "val_loss", "val_acc", "val_f1", "lr", "num_confident")


@dataclass
class RunResult:
    epochs: list
    best_epoch: int
    best_val_acc: float
    test_metrics: MetricsReport
    val_metrics: MetricsReport
    lr_trace: list
    seeds: dict
    config: dict
    stopped_epoch: int
    diagnostics: dict = field(default_factory=dict)
    params: ModelParams | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "epochs": [dict(zip(EPOCH_FIELDS, r)) for r in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val_acc": self.best_val_acc,
            "test_metrics": self.test_metrics.to_dict(),
            "val_metrics": self.val_metrics.to_dict(),
            "lr_trace": list(self.lr_trace),
            "seeds": dict(self.seeds),
            "config": dict(self.config),
            "stopped_epoch": self.stopped_epoch,
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            epochs=[tuple(r[f] for f in EPOCH_FIELDS) for r in d["epochs"]],
            best_epoch=d["best_epoch"],
            best_val_acc=d["best_val_acc"],
            test_metrics=MetricsReport.from_dict(d["test_metrics"]),
            val_metrics=MetricsReport.from_dict(d["val_metrics"]),
            lr_trace=list(d["lr_trace"]),
            seeds=dict(d["seeds"]),
            config=dict(d["config"]),
            stopped_epoch=d["stopped_epoch"],
            diagnostics=dict(d.get("diagnostics", {})),
        )


# one epoch ---------------------------------------------------------------------------------


@dataclass
class _Context:
    graph: Graph
    masks: SplitMasks
    enc: EncoderConfig
    weights: LossWeights
    train: TrainConfig
    counts: ClassCounts
    diag: Diagnostics


def _supervised(ctx: _Context, logits1, logits2, rows) -> ad.Tensor:
    labels = ctx.graph.labels
    kind = ctx.train.baseline
    if kind in ("reweight", "balanced_softmax"):
        return (baseline_loss(kind, logits1, labels, ctx.counts, rows=rows) * 0.5
                + baseline_loss(kind, logits2, labels, ctx.counts, rows=rows) * 0.5)
    return loss_sup(logits1, logits2, labels, rows)


def loss_terms(params: ModelParams, ctx: _Context, views: ViewPair, train_mode: bool, sup_rows=None):
    """Forward both views and return (LossParts, number of confident nodes)."""
    g, m, w = ctx.graph, ctx.masks, ctx.weights
    h1 = encoder_forward(params, ctx.enc, views.view1, train_mode=train_mode)
    h2 = h1 if views.view2 is views.view1 and not train_mode else encoder_forward(
        params, ctx.enc, views.view2, train_mode=train_mode)
    logits1, logits2 = classifier_forward(params, h1), classifier_forward(params, h2)
    sup = _supervised(ctx, logits1, logits2, m.train if sup_rows is None else sup_rows)

    def vr_term():
        c1 = class_centers(h1, g.labels, m.train, g.num_classes)
        c2 = class_centers(h2, g.labels, m.train, g.num_classes)
        pi_pred = label_distribution(h1, c1, w.tau)
        pi_tgt = label_distribution(h2, c2, w.tau)
        conf = confident_set(pi_tgt, w.v, m.unlabeled)
        target = replace_labeled(pi_tgt, g.labels, m.train, ctx.train.vr_stop_gradient)
        return loss_vr(pi_pred, target, g.labels, conf, m.train, ctx.train.vr_stop_gradient, ctx.diag), len(conf)

    def ir_term():
        return loss_ir(h1, h2, g.labels, m.train, m.unlabeled, ctx.train.ir_normalizer, g.num_classes)

    # a zero-weighted term is still reported but kept off the tape
    if w.lambda1 > 0:
        vr, nconf = vr_term()
    else:
        with ad.no_grad():
            vr, nconf = vr_term()
    if w.lambda2 > 0:
        ir = ir_term()
    else:
        with ad.no_grad():
            ir = ir_term()
    return LossParts(vr, ir, sup), nconf


def _eval_view(ctx: _Context, original: GraphView, views: ViewPair | None) -> GraphView:
    return original if ctx.train.eval_graph == "original" or views is None else views.view2


def predict(params: ModelParams, enc: EncoderConfig, view: GraphView, counts=None, baseline=None) -> np.ndarray:
    """Eval-mode class predictions from the classifier head."""
    with ad.no_grad():
        logits = classifier_forward(params, encoder_forward(params, enc, view, train_mode=False))
        if baseline == "pc_softmax":
            logits = pc_softmax_logits(logits, counts)
    return logits.data.argmax(axis=1)


def _accuracy(pred, labels, mask) -> float:
    return float(np.mean(pred[mask] == labels[mask]))


def train_run(graph: Graph, masks: SplitMasks, encoder_cfg: EncoderConfig, augment_cfg,
              weights: LossWeights, train_cfg: TrainConfig, callback=None) -> RunResult:
    """Train from scratch and return the run record with the best-validation parameters restored.

    ``callback(epoch, record)`` is invoked after every epoch when given.
    """
    counts = ClassCounts.from_mask(graph.labels, masks.train, graph.num_classes)
    ctx = _Context(graph, masks, encoder_cfg, weights, train_cfg, counts, Diagnostics())
    params = init_params(encoder_cfg, graph.num_features, graph.num_classes, seed=train_cfg.seed)
    original = GraphView.from_graph(graph)
    opt = OptimizerState()
    sched = SchedulerState(lr=train_cfg.lr, patience=train_cfg.scheduler_patience)
    has_val = bool(masks.val.any())
    acc_mask = masks.val if has_val else masks.train

    records, lr_trace, val_losses, val_accs = [], [], [], []
    best_acc, best_epoch, best_state = -1.0, 0, params.state()
    epoch = 0
    for epoch in range(1, train_cfg.epochs + 1):
        views = ViewPair(original, original) if augment_cfg.is_off else make_views(graph, augment_cfg, epoch)
        lr = sched.lr
        try:
            parts, nconf = loss_terms(params, ctx, views, train_mode=True)
            loss = composite_loss(parts, weights)
            params.zero_grad()
            ad.backward(loss)
            adam_step(params, {k: p.grad for k, p in params.params.items()}, opt, lr, train_cfg.weight_decay)
            with ad.no_grad():
                val_rows = masks.val if has_val else masks.train
                vparts, _ = loss_terms(params, ctx, views, train_mode=False, sup_rows=val_rows)
                val_loss = (composite_loss(vparts, weights) if train_cfg.val_loss == "composite" else vparts.sup).item()
            pred = predict(params, encoder_cfg, _eval_view(ctx, original, views), counts, train_cfg.baseline)
        except NumericError as err:
            err.last_good_epoch = best_epoch
            err.last_good_state = best_state
            raise
        val_acc = _accuracy(pred, graph.labels, acc_mask)
        val_f1 = metrics(pred, graph.labels, acc_mask, graph.num_classes).macro_f1
        record = (epoch, loss.item(), parts.vr.item(), parts.ir.item(), parts.sup.item(), val_loss, val_acc, val_f1,
                  lr, nconf)
        records.append(record)
        lr_trace.append(lr)
        if callback is not None:
            callback(epoch, record)
        if val_acc > best_acc:
            best_acc, best_epoch, best_state = val_acc, epoch, params.state()
        val_losses.append(val_loss)
        val_accs.append(val_acc)
        lr_plateau_update(sched, val_losses)
        if early_stop_check(val_accs, train_cfg.early_stop_patience):
            break

    params.load_state(best_state)
    eval_views = None if augment_cfg.is_off else make_views(graph, augment_cfg, best_epoch)
    pred = predict(params, encoder_cfg, _eval_view(ctx, original, eval_views), counts, train_cfg.baseline)
    test_mask = masks.test if masks.test.any() else ~masks.train
    cfg = RunConfig(encoder_cfg, augment_cfg, weights, train_cfg)
    return RunResult(
        epochs=records,
        best_epoch=best_epoch,
        best_val_acc=best_acc,
        test_metrics=metrics(pred, graph.labels, test_mask, graph.num_classes),
        val_metrics=metrics(pred, graph.labels, acc_mask, graph.num_classes),
        lr_trace=lr_trace,
        seeds={"init": train_cfg.seed, "augment": augment_cfg.seed},
        config=cfg.to_flat(),
        stopped_epoch=epoch,
        diagnostics=ctx.diag.as_dict(),
        params=params,
    )


def run_config(graph: Graph, masks: SplitMasks, cfg: RunConfig, callback=None) -> RunResult:
    return train_run(graph, masks, cfg.encoder, cfg.augment, cfg.weights, cfg.train, callback)


def validation_accuracy(result: RunResult, graph: Graph, masks: SplitMasks) -> float:
    """Recompute the selected checkpoint's validation accuracy from scratch."""
    cfg = RunConfig.from_flat(result.config)
    counts = ClassCounts.from_mask(graph.labels, masks.train, graph.num_classes)
    if cfg.train.eval_graph == "original" or cfg.augment.is_off:
        view = GraphView.from_graph(graph)
    else:
        view = make_views(graph, cfg.augment, result.best_epoch).view2
    pred = predict(result.params, cfg.encoder, view, counts, cfg.train.baseline)
    return _accuracy(pred, graph.labels, masks.val if masks.val.any() else masks.train)


# grid search -----------------------------------------------------------------------------------


@dataclass
class GridResult:
    best: dict
    leaderboard: list

    def to_json(self) -> str:
        return json.dumps({"best": self.best, "leaderboard": self.leaderboard}, indent=2, sort_keys=True) + "\n"


def grid_points(space: dict, budget: int, seed: int) -> list[dict]:
    """``budget`` distinct points of the Cartesian grid drawn without replacement (all of them if fewer)."""
    if budget < 1:
        raise ContractError("budget must be >= 1")
    keys = sorted(space)
    sizes = [len(space[k]) for k in keys]
    total = int(np.prod(sizes, dtype=object))
    rng = np.random.default_rng(seed)
    if budget >= total:
        flat = list(range(total))
    else:
        chosen, flat = set(), []
        while len(flat) < budget:
            i = int(rng.integers(total)) if total < 2**63 else int(rng.random() * total)
            if i not in chosen:
                chosen.add(i)
                flat.append(i)
    points = []
    for i in flat:
        point = {}
        for k, s in zip(reversed(keys), reversed(sizes)):
            i, r = divmod(i, s)
            point[k] = space[k][r]
        points.append(dict(sorted(point.items())))
    return points


def _trial(args):
    graph, masks, cfg = args
    res = run_config(graph, masks, cfg)
    return {"config": cfg.to_flat(), "hash": cfg.config_hash(), "val_acc": res.best_val_acc,
            "best_epoch": res.best_epoch, "test_bacc": res.test_metrics.balanced_accuracy,
            "test_f1": res.test_metrics.macro_f1}


def grid_search(graph: Graph, masks: SplitMasks, base: RunConfig, space: dict | None = None,
                budget: int = 1, seed: int = 0, jobs: int = 1) -> GridResult:
    """Random search over the grid; the leaderboard is sorted by (-val_acc, config hash)."""
    space = SEARCH_GRID if space is None else space
    configs = [base.override(p) for p in grid_points(space, budget, seed)]
    tasks = [(graph, masks, c) for c in configs]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_trial, tasks))
    else:
        rows = [_trial(t) for t in tasks]
    rows.sort(key=lambda r: (-r["val_acc"], r["hash"]))
    return GridResult(best=rows[0]["config"], leaderboard=rows)


# center-similarity classifier for the variance study ---------------------------------------------


def train_center_classifier(graph: Graph, train_mask, cfg):
    """Train an encoder whose predictor is the center-similarity distribution; return eval scores.

    Returns (scores, probs): ``scores[v, i] = h(v)^T C^i`` and the matching
    temperature softmax of cosine similarities, both computed in eval mode.
    """
    enc = EncoderConfig(arch=cfg.arch, layers=cfg.layers, hidden=cfg.hidden)
    params = init_params(enc, graph.num_features, graph.num_classes, seed=cfg.seed)
    del params.params["cls.weight"], params.params["cls.bias"]
    view = GraphView.from_graph(graph)
    labels = graph.labels
    opt = OptimizerState()
    rows = np.flatnonzero(train_mask)
    for _ in range(cfg.epochs):
        h = encoder_forward(params, enc, view, train_mode=True)
        centers = class_centers(h, labels, train_mask, graph.num_classes)
        pi = label_distribution(h, centers, cfg.tau)
        loss = -ad.tsum(ad.log(ad.take_rows(pi.probs, rows), clamp=1e-12)
                        * np.eye(graph.num_classes)[labels[rows]]) * (1.0 / len(rows))
        params.zero_grad()
        ad.backward(loss)
        adam_step(params, {k: p.grad for k, p in params.params.items()}, opt, cfg.lr, cfg.weight_decay)
    with ad.no_grad():
        h = encoder_forward(params, enc, view, train_mode=False)
        centers = class_centers(h, labels, train_mask, graph.num_classes)
        scores = h.data @ centers.centers.data.T
        probs = label_distribution(h, centers, cfg.tau).data
    return scores, probs


__all__ = [
    "OptimizerState", "SchedulerState", "RunResult", "GridResult", "adam_step", "lr_plateau_update",
    "early_stop_check", "train_run", "run_config", "grid_search", "grid_points", "predict",
    "validation_accuracy", "train_center_classifier",
]
