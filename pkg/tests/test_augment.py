import numpy as np
import pytest
from hypothesis import given, strategies as st

from revar.augment import AugmentConfig, GraphView, drop_edge_adjacency, drop_edges, make_views, mask_features
from revar.errors import InvalidSpecError
from revar.graph import Graph, synth_graph
from revar.sparse import normalize_adjacency


@pytest.fixture(scope="module")
def thousand_edges():
    rng = np.random.default_rng(0)
    iu, ju = np.triu_indices(300, k=1)
    pick = rng.choice(len(iu), size=1000, replace=False)
    g = Graph.from_edges(300, np.stack([iu[pick], ju[pick]], 1), np.ones((300, 2)), np.arange(300) % 2)
    assert g.num_edges == 1000
    return g


def test_mask_feature_extremes():
    x = np.random.default_rng(0).normal(size=(6, 9))
    rng = np.random.default_rng(1)
    assert np.array_equal(mask_features(x, 0.0, rng), x)
    assert not mask_features(x, 1.0, rng).any()


def test_mask_feature_count_in_band():
    # P(|Binom(1000, .5) - 500| > 60) < 2e-4
    x = np.ones((3, 1000))
    for seed in range(20):
        zeroed = np.sum(~mask_features(x, 0.5, np.random.default_rng(seed)).any(axis=0))
        assert 440 <= zeroed <= 560


def test_mask_leaves_input_untouched():
    x = np.ones((4, 5))
    mask_features(x, 0.9, np.random.default_rng(0))
    assert np.all(x == 1)


def test_drop_edge_extremes(small_graph):
    rng = np.random.default_rng(0)
    assert np.array_equal(drop_edges(small_graph, 0.0, rng).to_dense(), normalize_adjacency(small_graph).to_dense())
    assert np.array_equal(drop_edges(small_graph, 1.0, rng).to_dense(), np.eye(small_graph.num_nodes))


def test_drop_edge_count_in_band(thousand_edges):
    g = thousand_edges
    for seed in range(20):
        kept = drop_edge_adjacency(g, 0.5, np.random.default_rng(seed)).nnz // 2
        assert 440 <= kept <= 560


def test_views_off_equal_original(small_graph):
    pair = make_views(small_graph, AugmentConfig.off(), 3)
    orig = GraphView.from_graph(small_graph)
    for v in (pair.view1, pair.view2):
        assert (v.adjacency != orig.adjacency).nnz == 0
        assert np.array_equal(v.dense_features(), orig.dense_features())


def test_views_deterministic_per_epoch(small_graph):
    cfg = AugmentConfig(seed=11)
    a, b, c = make_views(small_graph, cfg, 4), make_views(small_graph, cfg, 4), make_views(small_graph, cfg, 5)
    assert (a.view1.adjacency != b.view1.adjacency).nnz == 0
    assert np.array_equal(a.view2.dense_features(), b.view2.dense_features())
    differs = (a.view1.adjacency != c.view1.adjacency).nnz or not np.array_equal(
        a.view1.dense_features(), c.view1.dense_features())
    assert differs


def test_stronger_view_keeps_fewer_edges(thousand_edges):
    cfg = AugmentConfig(0.5, 0.5, 0.2, 0.2, seed=0)
    e1 = e2 = 0
    for epoch in range(100):
        pair = make_views(thousand_edges, cfg, epoch)
        e1 += pair.view1.adjacency.nnz
        e2 += pair.view2.adjacency.nnz
    assert e1 < e2


def test_rates_validated():
    with pytest.raises(InvalidSpecError):
        AugmentConfig(feature_mask_rate_v1=1.5)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 10_000))
def test_view_invariants(fr, er, seed):
    g = synth_graph(3, [10, 10, 10], 7, 0.6, seed=seed % 50, edge_prob=0.3)
    rng = np.random.default_rng(seed)
    adj = drop_edge_adjacency(g, er, rng)
    assert adj.shape == (g.num_nodes, g.num_nodes)
    assert (adj != adj.T).nnz == 0
    # every survivor is an original edge
    assert (adj - adj.multiply(g.adjacency())).nnz == 0
    x = mask_features(g.features, fr, rng)
    masked = ~np.all(x == g.features, axis=0)
    assert np.all(x[:, masked] == 0)
    assert np.array_equal(x[:, ~masked], g.features[:, ~masked])
