#!/usr/bin/env python3
"""Convert the public Planetoid citation splits (ind.<name>.* files) into the
plain-text dataset layout read by `ggp`: graph.edges, features.sparse,
labels.tsv and split.json.

Usage: planetoid_to_tsv.py <planetoid_dir> <name> <out_dir>

The split is the standard one: train = the labelled x rows, val = the next
500 nodes, test = the indices in ind.<name>.test.index. Needs numpy and scipy.
"""
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def main(src, name, out):
    src, out = Path(src), Path(out)
    parts = {k: load(src / f"ind.{name}.{k}") for k in ("x", "y", "tx", "ty", "allx", "ally", "graph")}
    test_idx = [int(line) for line in open(src / f"ind.{name}.test.index")]
    test_sorted = np.sort(test_idx)

    tx, ty = parts["tx"], parts["ty"]
    if name == "citeseer":
        # Some test indices point at isolated nodes missing from tx/ty.
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        tx, ty = tx_ext, ty_ext

    features = sp.vstack((parts["allx"], tx)).tolil()
    labels = np.vstack((parts["ally"], ty))
    features[test_idx, :] = features[test_sorted, :]
    labels[test_idx, :] = labels[test_sorted, :]
    features = features.tocoo()
    n = max(features.shape[0], max(parts["graph"]) + 1)

    n_train = parts["y"].shape[0]
    split = {
        "train": list(range(n_train)),
        "val": list(range(n_train, n_train + 500)),
        "test": sorted(int(i) for i in test_idx),
    }

    out.mkdir(parents=True, exist_ok=True)
    edges = set()
    for u, nbrs in parts["graph"].items():
        for v in nbrs:
            if u != v:
                edges.add((min(u, v), max(u, v)))
    with open(out / "graph.edges", "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    with open(out / "features.sparse", "w") as f:
        f.write(f"# shape {n} {features.shape[1]}\n")
        for r, c, val in sorted(zip(features.row, features.col, features.data)):
            if val != 0:
                f.write(f"{r}\t{c}\t{float(val)!r}\n")
    with open(out / "labels.tsv", "w") as f:
        for i in range(labels.shape[0]):
            if labels[i].sum() > 0:
                f.write(f"{i}\t{int(labels[i].argmax())}\n")
    with open(out / "split.json", "w") as f:
        json.dump(split, f)
    print(f"{name}: {n} nodes, {len(edges)} undirected edges, {features.shape[1]} features")


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    main(*sys.argv[1:])
