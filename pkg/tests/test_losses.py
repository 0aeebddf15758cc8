import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import revar.autodiff as ad
from revar.errors import EmptyClassError, EmptySplitError, NumericError
from revar.graph import ClassCounts
from revar.losses import (
    ConfidentSet,
    Diagnostics,
    LossParts,
    LossWeights,
    baseline_loss,
    class_centers,
    composite_loss,
    confident_set,
    cross_entropy,
    label_distribution,
    loss_ir,
    loss_sup,
    loss_vr,
    replace_labeled,
)

GRAD_TOL = 1e-4


def _cos(a, b):
    na, nb = math.sqrt(sum(x * x for x in a)), math.sqrt(sum(x * x for x in b))
    if na == 0 or nb == 0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def _instance(seed, n=14, d=4, k=3):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k
    train = np.zeros(n, dtype=bool)
    train[: 2 * k + 1] = True
    return rng, labels, train, rng.normal(size=(n, d)), rng.normal(size=(n, d))


# centers and distributions


def test_center_examples():
    h = np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 1.0]])
    c = class_centers(h, [0, 0, 1], [True, True, True])
    assert c.centers.data.tolist() == [[1.0, 1.0], [5.0, 1.0]]
    assert c.counts.counts == (2, 1)
    one = class_centers(h[1:], [1, 0], [True, True])
    assert np.array_equal(one.centers.data, h[1:][::-1])
    with pytest.raises(EmptyClassError):
        class_centers(h, [0, 0, 2], [True, True, True], num_classes=3)


@given(st.integers(0, 10_000))
def test_centers_match_mean_oracle(seed):
    rng, labels, train, h, _ = _instance(seed)
    got = class_centers(h, labels, train, 3).centers.data
    for c in range(3):
        rows = [h[i] for i in range(len(h)) if train[i] and labels[i] == c]
        oracle = [sum(r[j] for r in rows) / len(rows) for j in range(h.shape[1])]
        assert np.allclose(got[c], oracle, rtol=0, atol=1e-12)


def test_label_distribution_examples():
    c = np.array([[1.0, 0.0], [0.0, 1.0]])
    p = label_distribution(np.array([[1.0, 0.0]]), c, 1.0).data[0]
    assert np.allclose(p, [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-15)
    assert round(p[0], 4) == 0.7311
    assert label_distribution(np.array([[1.0, 0.0]]), c, 0.05).data[0, 0] > 0.999999
    eq = label_distribution(np.array([[1.0, 1.0]]), c, 0.3).data
    assert np.allclose(eq, 0.5)
    zero = label_distribution(np.array([[0.0, 0.0]]), c, 1.0)
    assert np.allclose(zero.data, 0.5) and zero.zero_norm_rows == 1


@given(st.integers(0, 10_000), st.floats(0.05, 5.0), st.floats(0.01, 100.0))
def test_label_distribution_rows_and_scale_invariance(seed, tau, scale):
    rng, labels, train, h, _ = _instance(seed)
    centers = class_centers(h, labels, train, 3).centers.data
    p = label_distribution(h, centers, tau).data
    assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    h2, c2 = h.copy(), centers.copy()
    i, j = rng.integers(len(h)), rng.integers(3)
    h2[i] *= scale
    c2[j] *= scale
    assert np.allclose(label_distribution(h2, c2, tau).data, p, rtol=0, atol=1e-9)


# confident set


def test_confident_set_examples():
    p = np.array([[0.95, 0.05], [0.5, 0.5], [0.7, 0.3]])
    unl = np.ones(3, dtype=bool)
    assert confident_set(p, 0.6, unl).ids.tolist() == [0, 2]
    assert len(confident_set(p, 1.0, unl)) == 0
    assert len(confident_set(np.full((4, 6), 1 / 6), 0.6, np.ones(4, dtype=bool))) == 0
    assert confident_set(p, 0.6, [False, True, True]).ids.tolist() == [2]


@given(st.floats(0.05, 0.95), st.floats(-1e-6, 1e-6))
def test_confident_set_strict_threshold(v, delta):
    top = v + delta
    p = np.array([[top, 1 - top]]) if top >= 0.5 else np.array([[top, top, 1 - 2 * top]])
    if p.shape[1] == 3 and 1 - 2 * top > top:
        return
    member = len(confident_set(p, v, [True])) == 1
    assert member == (p[0].max() > v)


# variance regularization


def test_loss_vr_examples():
    pred = np.array([[0.5, 0.5]])
    assert math.isclose(loss_vr(pred, np.array([[1.0, 0.0]]), [0], ConfidentSet(np.array([0])), [False]).item(),
                        math.log(2), rel_tol=1e-15)
    diag = Diagnostics()
    onehot = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = loss_vr(onehot, onehot, [0, 1], ConfidentSet(), [True, True], diag=diag).item()
    assert out == pytest.approx(0.0, abs=1e-30)
    assert diag.log_clamped == 2


def _vr_oracle(q, t, y, conf, train):
    total = 0.0
    if len(conf):
        total += sum(-sum(t[i][j] * math.log(max(q[i][j], 1e-12)) for j in range(len(q[i]))) for i in conf) / len(conf)
    lab = [i for i in range(len(q)) if train[i]]
    total += sum(-math.log(max(q[i][y[i]], 1e-12)) for i in lab) / len(lab)
    return total


@given(st.integers(0, 10_000), st.floats(0.3, 0.9))
def test_loss_vr_matches_summation_oracle(seed, v):
    rng, labels, train, h, hp = _instance(seed)
    c1 = class_centers(h, labels, train, 3)
    c2 = class_centers(hp, labels, train, 3)
    q = label_distribution(h, c1, 0.2)
    t = label_distribution(hp, c2, 0.2)
    conf = confident_set(t, v, ~train)
    target = replace_labeled(t, labels, train)
    got = loss_vr(q, target, labels, conf, train).item()
    want = _vr_oracle(q.data.tolist(), target.data.tolist(), labels.tolist(), conf.ids.tolist(), train.tolist())
    assert abs(got - want) <= 1e-10
    assert got >= 0
    assert all(not train[i] and t.data[i].max() > v for i in conf.ids)


def test_replace_labeled_after_confidence():
    t = np.array([[0.99, 0.01], [0.2, 0.8], [0.6, 0.4]])
    train = np.array([True, False, False])
    conf = confident_set(t, 0.7, ~train)
    assert conf.ids.tolist() == [1]
    r = replace_labeled(t, [1, 0, 0], train).data
    assert r.tolist() == [[0.0, 1.0], [0.2, 0.8], [0.6, 0.4]]


def test_vr_stop_gradient_contract():
    rng, labels, train, h, hp = _instance(3)
    h1 = ad.Tensor(h, requires_grad=True)
    h2 = ad.Tensor(hp, requires_grad=True)

    def vr(stop):
        q = label_distribution(h1, class_centers(h1, labels, train, 3), 0.3)
        t = label_distribution(h2, class_centers(h2, labels, train, 3), 0.3)
        conf = confident_set(t, 0.4, ~train)
        return loss_vr(q, replace_labeled(t, labels, train, stop), labels, conf, train, stop)

    ad.backward(vr(True))
    assert h2.grad is None or not np.any(h2.grad)
    g_detached = h1.grad.copy()
    # the same loss with the target handed in as plain numbers
    h1.grad = None
    t_const = replace_labeled(label_distribution(hp, class_centers(hp, labels, train, 3), 0.3), labels, train).data
    conf = confident_set(label_distribution(hp, class_centers(hp, labels, train, 3), 0.3), 0.4, ~train)
    q = label_distribution(h1, class_centers(h1, labels, train, 3), 0.3)
    ad.backward(loss_vr(q, t_const, labels, conf, train))
    assert np.array_equal(h1.grad, g_detached)
    h1.grad = h2.grad = None
    ad.backward(vr(False))
    assert np.any(h2.grad)


# intra-class aggregation


def _ir_oracle(h, hp, labels, train, unl, mode="distinct_pairs"):
    n = len(h)
    u = [i for i in range(n) if unl[i]]
    total = -sum(_cos(h[i], hp[i]) for i in u) / len(u) if u else 0.0
    sizes = {}
    for i in range(n):
        if train[i]:
            sizes[labels[i]] = sizes.get(labels[i], 0) + 1
    distinct = sum(c * (c - 1) for c in sizes.values())
    if distinct == 0:
        return total
    norm = distinct if mode == "distinct_pairs" else distinct + sum(c * c for c in sizes.values())
    bracket = 0.0
    for i in range(n):
        for j in range(n):
            if train[i] and train[j] and labels[i] == labels[j]:
                bracket += _cos(h[i], hp[j])
                if i != j:
                    bracket += _cos(h[i], h[j])
    return total - bracket / norm


@given(st.integers(0, 10_000), st.sampled_from(["distinct_pairs", "pair_count"]))
def test_loss_ir_matches_double_loop(seed, mode):
    rng, labels, train, h, hp = _instance(seed)
    got = loss_ir(h, hp, labels, train, ~train, mode, 3).item()
    want = _ir_oracle(h.tolist(), hp.tolist(), labels.tolist(), train.tolist(), (~train).tolist(), mode)
    assert abs(got - want) <= 1e-10


def test_loss_ir_examples():
    h = np.random.default_rng(0).normal(size=(5, 3))
    labels = np.arange(5)
    train = np.array([True, True, True, False, False])
    assert loss_ir(h, h, labels, train, ~train, num_classes=5).item() == pytest.approx(-1.0, abs=1e-15)
    e = np.eye(4)
    lab = np.array([0, 0, 1, 1])
    tr = np.array([True, True, False, False])
    # every embedding (both views) orthogonal to every other
    h1, h2 = np.zeros((4, 8)), np.zeros((4, 8))
    h1[:, :4], h2[:, 4:] = e, e
    assert loss_ir(h1, h2, lab, tr, ~tr, num_classes=2).item() == 0.0


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_loss_ir_bounds(seed, per_class):
    rng = np.random.default_rng(seed)
    n = 3 * per_class + 5
    labels = np.arange(n) % 3
    train = np.zeros(n, dtype=bool)
    train[: 3 * per_class] = True
    h, hp = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    sizes = np.bincount(labels[train], minlength=3)
    distinct = float(np.sum(sizes * (sizes - 1)))
    pairs = float(np.sum(sizes**2) + distinct)
    bound = 1 + (pairs / distinct if distinct else 0.0)
    assert abs(loss_ir(h, hp, labels, train, ~train, "distinct_pairs", 3).item()) <= bound + 1e-12
    assert -2 - 1e-12 <= loss_ir(h, hp, labels, train, ~train, "pair_count", 3).item() <= 2 + 1e-12


# supervised and composite


def test_loss_sup_examples():
    labels = np.array([0, 1, 2, 3, 4, 5])
    train = np.ones(6, dtype=bool)
    assert loss_sup(np.zeros((6, 6)), np.zeros((6, 6)), labels, train).item() == pytest.approx(math.log(6), abs=1e-15)
    big = np.eye(6) * 60
    assert loss_sup(big, big, labels, train).item() < 1e-20
    with pytest.raises(EmptySplitError):
        loss_sup(big, big, labels, np.zeros(6, dtype=bool))


@given(st.integers(0, 10_000))
def test_loss_sup_matches_ce_oracle(seed):
    rng, labels, train, _, _ = _instance(seed)
    a, b = rng.normal(size=(len(labels), 3)), rng.normal(size=(len(labels), 3))

    def ce(z):
        rows = [i for i in range(len(z)) if train[i]]
        return sum(math.log(sum(math.exp(x) for x in z[i])) - z[i][labels[i]] for i in rows) / len(rows)

    got = loss_sup(a, b, labels, train).item()
    assert abs(got - (0.5 * ce(a.tolist()) + 0.5 * ce(b.tolist()))) <= 1e-10


def test_composite_examples():
    parts = LossParts(ad.Tensor(1.0), ad.Tensor(1.0), ad.Tensor(1.0))
    assert composite_loss(parts, LossWeights(2.0, 3.0)).item() == 6.0
    assert composite_loss(LossParts(ad.Tensor(5.0), ad.Tensor(-7.0), ad.Tensor(0.25)),
                          LossWeights(0.0, 0.0)).item() == 0.25
    with pytest.raises(NumericError):
        composite_loss((ad.Tensor(np.nan), ad.Tensor(0.0), ad.Tensor(0.0)), LossWeights())


# baselines


def test_baseline_examples():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(8, 2))
    labels = np.array([0, 1] * 4)
    plain = cross_entropy(logits, labels).item()
    balanced = ClassCounts((4, 4))
    assert baseline_loss("reweight", logits, labels, balanced).item() == pytest.approx(plain, abs=1e-14)
    assert baseline_loss("balanced_softmax", logits, labels, balanced).item() == pytest.approx(plain, abs=1e-14)
    shift = baseline_loss("pc_softmax", np.zeros((1, 2)), [0], ClassCounts((20, 2))).data[0]
    assert shift[1] - shift[0] == pytest.approx(math.log(10), abs=1e-14)
    with pytest.raises(EmptyClassError):
        baseline_loss("reweight", logits, labels, ClassCounts((4, 0)))


def test_baseline_formulas():
    logits = np.array([[1.0, -0.5], [0.3, 0.2], [-1.0, 2.0]])
    labels = np.array([0, 1, 1])
    counts = ClassCounts((20, 2))

    def ce_row(z, y):
        return math.log(sum(math.exp(v) for v in z)) - z[y]

    w = [22 / (2 * 20), 22 / (2 * 2)]
    want = sum(w[y] * ce_row(z, y) for z, y in zip(logits.tolist(), labels)) / 3
    assert baseline_loss("reweight", logits, labels, counts).item() == pytest.approx(want, abs=1e-14)
    shifted = [[z[0] + math.log(20), z[1] + math.log(2)] for z in logits.tolist()]
    want = sum(ce_row(z, y) for z, y in zip(shifted, labels)) / 3
    assert baseline_loss("balanced_softmax", logits, labels, counts).item() == pytest.approx(want, abs=1e-14)


# gradients of every loss


def _check(f, tensors):
    rep = ad.grad_check(f, tensors)
    assert max(rep.values()) < GRAD_TOL, rep


def test_gradients_of_every_loss():
    rng, labels, train, h, hp = _instance(7, n=12)
    H, HP = ad.Tensor(h, requires_grad=True), ad.Tensor(hp, requires_grad=True)
    L1, L2 = ad.Tensor(rng.normal(size=(12, 3)), requires_grad=True), ad.Tensor(rng.normal(size=(12, 3)),
                                                                             requires_grad=True)
    counts = ClassCounts.from_mask(labels, train, 3)

    def vr(stop=True):
        q = label_distribution(H, class_centers(H, labels, train, 3), 0.5)
        t = label_distribution(HP, class_centers(HP, labels, train, 3), 0.5)
        conf = confident_set(t, 0.34, ~train)
        return loss_vr(q, replace_labeled(t, labels, train, stop), labels, conf, train, stop)

    _check(lambda: vr(True), {"H": H})
    _check(lambda: vr(False), {"H": H, "HP": HP})
    _check(lambda: loss_ir(H, HP, labels, train, ~train, "distinct_pairs", 3), {"H": H, "HP": HP})
    _check(lambda: loss_ir(H, HP, labels, train, ~train, "pair_count", 3), {"H": H, "HP": HP})
    _check(lambda: loss_sup(L1, L2, labels, train), {"L1": L1, "L2": L2})
    _check(lambda: composite_loss((vr(False), loss_ir(H, HP, labels, train, ~train, "distinct_pairs", 3),
                                   loss_sup(L1, L2, labels, train)), LossWeights(0.7, 1.3)),
           {"H": H, "HP": HP, "L1": L1, "L2": L2})
    _check(lambda: baseline_loss("reweight", L1, labels, counts, rows=train), {"L1": L1})
    _check(lambda: baseline_loss("balanced_softmax", L1, labels, counts, rows=train), {"L1": L1})
    _check(lambda: cross_entropy(baseline_loss("pc_softmax", L1, labels, counts), labels, train), {"L1": L1})
