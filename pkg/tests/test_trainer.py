import math

import numpy as np
import pytest

from revar.augment import AugmentConfig
from revar.config import RunConfig, TrainConfig
from revar.errors import NumericError
from revar.graph import Graph, SplitSpec, make_split, synth_graph
from revar.losses import LossWeights
from revar.nn import EncoderConfig
from revar.trainer import (
    OptimizerState,
    RunResult,
    SchedulerState,
    adam_step,
    early_stop_check,
    grid_points,
    grid_search,
    lr_plateau_update,
    run_config,
    train_run,
    validation_accuracy,
)
from torch_reference import plain_ce_losses


@pytest.fixture(scope="module")
def separable():
    g = synth_graph(3, [40, 40, 40], 8, 0.9, seed=5, class_sep=3.0)
    return g, make_split(g, SplitSpec(base_per_class=10, rho=1, val_per_class=10, seed=0))


def _fast(**kw):
    base = {"encoder.hidden": 64, "train.epochs": 60}
    base.update(kw)
    return RunConfig().override(base)


# optimizer


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, OptimizerState(), 0.1)
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_first_step():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, OptimizerState(), 0.01)
    assert p["w"][0] == pytest.approx(-0.01 / (1 + 1e-8), rel=1e-14)


def _adam_oracle(x0, grad_fn, steps, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = x0.copy(), np.zeros_like(x0), np.zeros_like(x0)
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(x) + wd * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        mhat, vhat = m / (1 - b1**t), v / (1 - b2**t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
        out.append(x.copy())
    return out


def test_adam_matches_oracle_on_quadratic():
    q = np.diag([1.0, 3.0, 0.5])
    x0 = np.array([1.0, -2.0, 0.7])
    want = _adam_oracle(x0, lambda x: q @ x, 10, 0.05, 5e-4)
    p, state = {"x": x0.copy()}, OptimizerState()
    for t in range(10):
        adam_step(p, {"x": q @ p["x"]}, state, 0.05, 5e-4)
        assert np.allclose(p["x"], want[t], rtol=0, atol=1e-12)


def test_adam_nan_names_parameter():
    with pytest.raises(NumericError) as info:
        adam_step({"w": np.zeros(2)}, {"w": np.array([np.nan, 0.0])}, OptimizerState(), 0.1)
    assert info.value.parameter == "w"


# scheduler and early stopping


def _simulate(losses, patience=100):
    s, hist, trace = SchedulerState(lr=1.0, patience=patience), [], []
    for x in losses:
        hist.append(x)
        trace.append(lr_plateau_update(s, hist))
    return trace


def test_plateau_examples():
    assert set(_simulate([1.0 / (i + 1) for i in range(300)])) == {1.0}
    flat = _simulate([1.0] * 250)
    drops = [i + 1 for i in range(1, 250) if flat[i] < flat[i - 1]] + ([1] if flat[0] < 1 else [])
    assert drops == [100, 200]
    assert flat[-1] == 0.25
    assert _simulate([1.0] * 100)[98:] == [1.0, 0.5]


def test_early_stop_examples():
    assert not any(early_stop_check(list(range(k)), 300) for k in range(1, 500))
    hist = [0.1] * 9 + [0.9] + [0.5] * 400
    stops = [k for k in range(1, len(hist) + 1) if early_stop_check(hist[:k], 300)]
    assert stops[0] == 310
    assert not any(early_stop_check([0.3] * k, 300) for k in range(1, 301))


# training runs


def test_supervised_only_separable_accuracy(separable):
    g, masks = separable
    res = run_config(g, masks, _fast(**{"loss.lambda1": 0.0, "loss.lambda2": 0.0, "train.epochs": 100}).augmentation_off())
    assert res.test_metrics.accuracy > 0.9


def test_reduction_matches_torch_reference(separable):
    g, masks = separable
    cfg = _fast(**{"loss.lambda1": 0.0, "loss.lambda2": 0.0, "train.epochs": 50, "train.seed": 4}).augmentation_off()
    ours = [r[1] for r in run_config(g, masks, cfg).epochs]
    ref = plain_ce_losses(g, masks.train, cfg.encoder, seed=4, epochs=50)
    assert len(ours) == 50
    assert max(abs(a - b) for a, b in zip(ours, ref)) <= 1e-10


def test_run_deterministic(separable):
    g, masks = separable
    cfg = _fast(**{"train.epochs": 25, "aug.seed": 3, "train.seed": 3})
    a, b = run_config(g, masks, cfg), run_config(g, masks, cfg)
    assert a.to_json() == b.to_json()
    for k in a.params.params:
        assert a.params[k].data.tobytes() == b.params[k].data.tobytes()


@pytest.mark.parametrize("arch", ["gcn", "sage", "gat"])
def test_best_epoch_and_recomputed_val_acc(separable, arch):
    g, masks = separable
    res = run_config(g, masks, _fast(**{"encoder.arch": arch, "train.epochs": 20}))
    accs = [r[6] for r in res.epochs]
    assert res.best_val_acc == max(accs) and res.best_epoch == accs.index(max(accs)) + 1
    assert abs(validation_accuracy(res, g, masks) - res.best_val_acc) <= 1e-12
    assert RunResult.from_dict(res.to_dict()).to_json() == res.to_json()


def test_lr_trace_halves(separable):
    g, masks = separable
    res = run_config(g, masks, _fast(**{"train.scheduler_patience": 3, "train.epochs": 40}))
    trace = res.lr_trace
    assert trace[0] == 0.01
    for a, b in zip(trace, trace[1:]):
        assert b == a or b == a * 0.5
    assert trace[-1] < trace[0]


def test_composite_loss_moving_average_decreases(separable):
    # fixed views: the 10-epoch moving average of the full objective falls strictly
    g, masks = separable
    res = run_config(g, masks, _fast(**{"train.epochs": 50}).augmentation_off())
    loss = np.array([r[1] for r in res.epochs])
    ma = np.convolve(loss, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(ma) < 0)


def test_composite_loss_falls_with_fresh_views(separable):
    # per-epoch random views make single epochs noisy; compare the first and last windows
    g, masks = separable
    loss = np.array([r[1] for r in run_config(g, masks, _fast(**{"train.epochs": 50})).epochs])
    assert loss[-10:].mean() < loss[:10].mean()


def test_baselines_train(separable):
    g, masks = separable
    for kind in ("reweight", "balanced_softmax", "pc_softmax"):
        res = run_config(g, masks, _fast(**{"loss.baseline": kind, "train.epochs": 10}))
        assert np.isfinite([r[1] for r in res.epochs]).all()


def test_numeric_error_keeps_last_good_state(separable):
    g, masks = separable
    feats = g.features.copy()
    feats[0, 0] = np.nan
    bad = Graph(g.num_nodes, g.num_features, g.num_classes, g.indptr, g.indices, feats, g.labels)
    with pytest.raises(NumericError) as info:
        run_config(bad, masks, _fast())
    assert info.value.last_good_epoch == 0 and info.value.layer == 0
    assert "cls.weight" in info.value.last_good_state


# grid search


def test_grid_points():
    space = {"a": [1, 2, 3], "b": [0.1, 0.2]}
    assert len(grid_points(space, 1, 0)) == 1
    full = grid_points(space, 50, 0)
    assert len(full) == 6 and len({tuple(sorted(p.items())) for p in full}) == 6
    part = grid_points(space, 4, 1)
    assert len({tuple(sorted(p.items())) for p in part}) == 4
    assert grid_points(space, 4, 1) == part


def test_grid_search_leaderboard(separable):
    g, masks = separable
    space = {"loss.lambda1": [0.0, 1.0], "encoder.layers": [1, 2]}
    res = grid_search(g, masks, _fast(**{"train.epochs": 8}), space, budget=10, seed=0)
    assert len(res.leaderboard) == 4
    keys = [(-r["val_acc"], r["hash"]) for r in res.leaderboard]
    assert keys == sorted(keys)
    for row in res.leaderboard:
        again = run_config(g, masks, RunConfig.from_flat(row["config"]))
        assert again.best_val_acc == row["val_acc"]
    assert res.best == res.leaderboard[0]["config"]
    one = grid_search(g, masks, _fast(**{"train.epochs": 4}), space, budget=1, seed=0)
    assert len(one.leaderboard) == 1


def test_grid_search_parallel_matches_serial(separable):
    g, masks = separable
    space = {"loss.tau": [0.1, 0.5], "encoder.layers": [1, 2]}
    base = _fast(**{"train.epochs": 5})
    assert grid_search(g, masks, base, space, 4, 0, jobs=2).to_json() == grid_search(g, masks, base, space, 4, 0).to_json()
