#!/usr/bin/env python3
"""Generate binary test fixtures for the converter.

Writes protocol-2 pickles shaped exactly like the upstream citation-network
archives (sparse feature blocks, one-hot label blocks, adjacency dict,
test-index file) plus micro pickles for the unpickler unit tests and a tiny
graph-kernel-format dataset. Deterministic; rerunning overwrites in place.
"""

import pickle
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def write_pickle(path, obj):
    with open(path, "wb") as fh:
        pickle.dump(obj, fh, protocol=2)


def make_planetoid(out_dir, name, n_nodes, n_features, n_classes, n_train, n_test, avg_degree, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    out_dir.mkdir(parents=True, exist_ok=True)
    n_allx = n_nodes - n_test

    labels = np.zeros(n_nodes, dtype=np.int64)
    per_class = n_train // n_classes
    labels[:n_train] = np.repeat(np.arange(n_classes), per_class)
    labels[n_train:] = rng.integers(0, n_classes, size=n_nodes - n_train)

    density = min(0.02, 20.0 / n_features)
    features = (rng.random((n_nodes, n_features)) < density).astype(np.float64)
    onehot = np.eye(n_classes)[labels]

    m = int(n_nodes * avg_degree / 2)
    src = rng.integers(0, n_nodes, size=m)
    dst = rng.integers(0, n_nodes, size=m)
    graph = defaultdict(list)
    for node in range(n_nodes):
        graph[node] = []
    seen = set()
    for u, v in zip(src, dst):
        u, v = int(u), int(v)
        if u == v or (min(u, v), max(u, v)) in seen:
            continue
        seen.add((min(u, v), max(u, v)))
        graph[u].append(v)
        graph[v].append(u)

    test_idx = np.arange(n_allx, n_nodes)
    rng.shuffle(test_idx)

    write_pickle(out_dir / f"ind.{name}.x", sp.csr_matrix(features[:n_train]))
    write_pickle(out_dir / f"ind.{name}.y", onehot[:n_train])
    write_pickle(out_dir / f"ind.{name}.allx", sp.csr_matrix(features[:n_allx]))
    write_pickle(out_dir / f"ind.{name}.ally", onehot[:n_allx])
    # tx row k corresponds to test_idx[k] after the loader's reorder step
    tx_rows = features[test_idx]
    ty_rows = onehot[test_idx]
    write_pickle(out_dir / f"ind.{name}.tx", sp.csr_matrix(tx_rows))
    write_pickle(out_dir / f"ind.{name}.ty", ty_rows)
    write_pickle(out_dir / f"ind.{name}.graph", graph)
    with open(out_dir / f"ind.{name}.test.index", "w") as fh:
        for idx in test_idx:
            fh.write(f"{idx}\n")
    return {
        "nodes": n_nodes,
        "undirected_edges": len(seen),
        "train": n_train,
        "labels": labels,
    }


def make_micro_pickles(out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    write_pickle(out_dir / "arr_f8.pkl", np.array([[1.5, -2.0], [0.0, 3.25]]))
    write_pickle(out_dir / "arr_i4.pkl", np.array([7, -3, 11], dtype=np.int32))
    write_pickle(out_dir / "csr.pkl", sp.csr_matrix(np.array([[0.0, 1.0, 0.0], [2.5, 0.0, 0.0]])))
    d = defaultdict(list)
    d[0] = [1, 2]
    d[1] = [0]
    d[2] = [0]
    write_pickle(out_dir / "graph.pkl", d)
    write_pickle(
        out_dir / "misc.pkl",
        {"name": "xyz", "count": 12, "big": 2**40, "pi": 3.14159, "flag": True, "none": None,
         "list": [1, 2.5, "s"], "tuple": (1, 2)},
    )


def make_tu(out_dir, name):
    out_dir.mkdir(parents=True, exist_ok=True)
    # 5 tiny graphs: triangle, path3, square, star4, single edge
    graphs = [
        [(1, 2), (2, 3), (1, 3)],
        [(1, 2), (2, 3)],
        [(1, 2), (2, 3), (3, 4), (1, 4)],
        [(1, 2), (1, 3), (1, 4), (1, 5)],
        [(1, 2)],
    ]
    labels = [1, 2, 1, 2, 1]
    node_labels, indicator, edges = [], [], []
    offset = 0
    for gid, g in enumerate(graphs, start=1):
        n = max(max(u, v) for u, v in g)
        for local in range(1, n + 1):
            indicator.append(gid)
            node_labels.append((local + gid) % 3)
        for u, v in g:
            edges.append((u + offset, v + offset))
            edges.append((v + offset, u + offset))
        offset += n
    with open(out_dir / f"{name}_A.txt", "w") as fh:
        for u, v in edges:
            fh.write(f"{u}, {v}\n")
    with open(out_dir / f"{name}_graph_indicator.txt", "w") as fh:
        fh.write("".join(f"{g}\n" for g in indicator))
    with open(out_dir / f"{name}_graph_labels.txt", "w") as fh:
        fh.write("".join(f"{l}\n" for l in labels))
    with open(out_dir / f"{name}_node_labels.txt", "w") as fh:
        fh.write("".join(f"{l}\n" for l in node_labels))


def main():
    make_micro_pickles(ROOT / "pickle")
    stats = make_planetoid(
        ROOT / "planetoid_mini", "minicora",
        n_nodes=20, n_features=8, n_classes=3, n_train=6, n_test=6, avg_degree=3, seed=5,
    )
    print("minicora:", stats["nodes"], "nodes,", stats["undirected_edges"], "edges")
    stats = make_planetoid(
        ROOT / "planetoid_cora_synth", "cora",
        n_nodes=2708, n_features=1433, n_classes=7, n_train=140, n_test=1000,
        avg_degree=4, seed=7,
    )
    print("cora_synth:", stats["nodes"], "nodes,", stats["undirected_edges"], "edges")
    make_tu(ROOT / "tu_mini", "MINI")
    print("tu_mini written")


if __name__ == "__main__":
    sys.exit(main())
