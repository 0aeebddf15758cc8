import numpy as np
import pytest
from hypothesis import settings

from revar.graph import SplitSpec, make_split, synth_graph

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def small_graph():
    # 4 classes x 12 nodes, small enough for finite differences
    return synth_graph(4, [12, 12, 12, 12], 6, 0.8, seed=3, edge_prob=0.25)


@pytest.fixture(scope="session")
def small_split(small_graph):
    spec = SplitSpec(mode="explicit_counts", counts=(5, 5, 2, 2), val_per_class=3, seed=0)
    return make_split(small_graph, spec)


@pytest.fixture(scope="session")
def medium_graph():
    return synth_graph(4, [60, 60, 60, 60], 16, 0.8, seed=1)


@pytest.fixture(scope="session")
def medium_split(medium_graph):
    return make_split(medium_graph, SplitSpec(base_per_class=10, rho=10, val_per_class=10, seed=0))


def write_dir(root, meta, edges, features, labels):
    import json

    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(json.dumps(meta))
    (root / "edges.tsv").write_text("".join(f"{u}\t{v}\n" for u, v in edges))
    (root / "features.tsv").write_text("".join("\t".join(map(str, r)) + "\n" for r in features))
    (root / "labels.tsv").write_text("".join(f"{y}\n" for y in labels))
    return root


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
