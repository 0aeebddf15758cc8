"""Convert raw Planetoid files (ind.<name>.x, allx, tx, y, ally, ty, graph, test.index) into a dataset directory.

usage: python3 scripts/convert_planetoid.py RAW_DIR NAME OUT_DIR

The public split is stored as splits/public.json: the first 20 labeled nodes
per class for training, the next 500 nodes for validation and the listed
test indices for testing.  Test indices missing from the raw graph (isolated
nodes in CiteSeer) get zero features and no label, and are kept out of every
split.
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from revar.graph import Graph, SplitMasks, save_dataset


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(raw: Path, name: str, out: Path) -> Path:
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_idx = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64)
    lo, hi = int(test_idx.min()), int(test_idx.max())
    if name == "citeseer":
        # pad the test block so every index in [lo, hi] has a row
        full = hi - lo + 1
        tx_ext = sp.lil_matrix((full, tx.shape[1]))
        tx_ext[np.sort(test_idx) - lo, :] = tx
        ty_ext = np.zeros((full, ty.shape[1]))
        ty_ext[np.sort(test_idx) - lo, :] = ty
        tx, ty = tx_ext, ty_ext
    features = sp.vstack((allx, tx)).tolil()
    onehot = np.vstack((ally, ty))
    order = np.sort(test_idx)
    features[test_idx, :] = features[order, :]
    onehot[test_idx, :] = onehot[order, :]

    n = features.shape[0]
    labeled = onehot.sum(axis=1) > 0
    labels = onehot.argmax(axis=1)
    edges = [(u, v) for u, nbrs in graph.items() for v in nbrs if u != v and u < n and v < n]

    counts = np.zeros(onehot.shape[1], dtype=np.int64)
    train = []
    for i in range(len(y)):
        c = labels[i]
        if labeled[i] and counts[c] < 20:
            train.append(i)
            counts[c] += 1
    val = [i for i in range(len(y), min(len(y) + 500, len(ally))) if labeled[i]]
    test = [int(i) for i in test_idx if labeled[i]]
    public = SplitMasks.from_ids(n, train, val, test)

    g = Graph.from_edges(n, np.asarray(edges, dtype=np.int64), features.toarray(), labels,
                         num_classes=onehot.shape[1], name=name, public_splits={"public": public})
    return save_dataset(g, out, float_format="%.8g")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("raw_dir")
    p.add_argument("name", help="planetoid file stem, e.g. citeseer")
    p.add_argument("out_dir")
    args = p.parse_args(argv)
    out = convert(Path(args.raw_dir), args.name, Path(args.out_dir))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
