"""Canonical on-disk datasets, synthetic generators, and checkpoint files.

A canonical dataset directory holds ``meta.json`` plus CSV files for
edges, features, targets, and split masks, with SHA-256 checksums of every
data file recorded in the metadata. Undirected edges are stored once with
src < dst and symmetrized on load. Reals are written as shortest
round-trip decimals so that save -> load is the identity.

Node-level tasks use a single graph and boolean masks; graph-level tasks
(including signal classification, where every entry shares one topology)
use per-graph rows keyed by ``graph_id`` and index masks.
"""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from armagraph.errors import ChecksumError, DanglingNodeError, SchemaError
from armagraph.rng import make_rng
from armagraph.sparse import CsrMatrix, as_dense, build_csr, normalized_laplacian, symmetric_eig

FORMAT_VERSION = 1
NODE_TASKS = ("node_classification",)
GRAPH_TASKS = ("signal_classification", "graph_classification", "graph_regression")
CLASSIFICATION_TASKS = ("node_classification", "signal_classification", "graph_classification")
SPLITS = ("train", "val", "test")

CHECKPOINT_MAGIC = b"AGCKPT1\n"


@dataclass
class GraphDataset:
    """Graphs with features, targets, split masks, and metadata.

    ``masks`` maps split name to a boolean per-node array (node tasks) or
    an index array over graphs (graph-level tasks).
    """

    graphs: list
    targets: np.ndarray
    masks: dict
    meta: dict = field(default_factory=dict)

    @property
    def task(self) -> str:
        return self.meta["task"]

    @property
    def is_node_task(self) -> bool:
        return self.task in NODE_TASKS

    @property
    def n_features(self) -> int:
        return self.graphs[0][1].shape[1]

    @property
    def n_classes(self):
        return self.meta.get("n_classes")

    def validate(self):
        if not self.graphs:
            raise SchemaError("dataset has no graphs")
        task = self.meta.get("task")
        if task not in NODE_TASKS + GRAPH_TASKS:
            raise SchemaError(f"unknown task {task!r}")
        for adj, feats in self.graphs:
            adj.validate()
            if not adj.is_symmetric(tol=1e-12):
                raise SchemaError("adjacency must be symmetric")
            if feats.shape[0] != adj.n_rows:
                raise SchemaError("feature rows must match node count")
            if not np.all(np.isfinite(feats)):
                raise SchemaError("non-finite feature value")
        if self.is_node_task:
            if len(self.graphs) != 1:
                raise SchemaError("node-level tasks use exactly one graph")
            n = self.graphs[0][0].n_rows
            if len(self.targets) != n:
                raise SchemaError("one target per node required")
            seen = np.zeros(n, dtype=bool)
            for name, mask in self.masks.items():
                if mask.shape != (n,) or mask.dtype != np.bool_:
                    raise SchemaError(f"mask {name!r} must be a boolean per-node array")
                if np.any(seen & mask):
                    raise SchemaError("masks overlap")
                seen |= mask
        else:
            if len(self.targets) != len(self.graphs):
                raise SchemaError("one target per graph required")
            seen = set()
            for name, idx in self.masks.items():
                idx = np.asarray(idx)
                if idx.size and (idx.min() < 0 or idx.max() >= len(self.graphs)):
                    raise DanglingNodeError(f"mask {name!r} references a missing graph")
                overlap = seen.intersection(idx.tolist())
                if overlap:
                    raise SchemaError(f"masks overlap on graphs {sorted(overlap)[:5]}")
                seen.update(idx.tolist())
        if self.task in CLASSIFICATION_TASKS:
            n_classes = self.meta.get("n_classes")
            if not n_classes:
                raise SchemaError("classification tasks need n_classes")
            labels = self.targets.astype(np.int64)
            if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
                raise SchemaError("label outside 0..n_classes-1")
        return self


# ---------------------------------------------------------------------------
# canonical format


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(x: float) -> str:
    return repr(float(x))


def _upper_edges(adj: CsrMatrix):
    rows = np.repeat(np.arange(adj.n_rows), np.diff(adj.indptr))
    for r, c, v in zip(rows, adj.indices, adj.data):
        if r == c:
            raise SchemaError("canonical format does not store self-loops")
        if r < c:
            yield int(r), int(c), float(v)


def save_canonical(dataset: GraphDataset, path) -> None:
    """Write a validated dataset to ``path`` in the canonical layout."""
    dataset.validate()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    node_task = dataset.is_node_task
    shared_graph = (
        not node_task
        and len(dataset.graphs) > 1
        and len({adj.content_hash() for adj, _ in dataset.graphs}) == 1
    )

    files = {name: f"{name}.csv" for name in ("edges", "features", "targets", "masks")}
    with open(path / files["edges"], "w", newline="") as fh:
        writer = csv.writer(fh)
        if node_task:
            writer.writerow(["src", "dst", "weight"])
            for r, c, v in _upper_edges(dataset.graphs[0][0]):
                writer.writerow([r, c, _fmt(v)])
        else:
            writer.writerow(["graph_id", "src", "dst", "weight"])
            stored = dataset.graphs[:1] if shared_graph else dataset.graphs
            for gid, (adj, _) in enumerate(stored):
                for r, c, v in _upper_edges(adj):
                    writer.writerow([gid, r, c, _fmt(v)])

    with open(path / files["features"], "w", newline="") as fh:
        writer = csv.writer(fh)
        width = dataset.n_features
        cols = [f"f{j}" for j in range(width)]
        writer.writerow(cols if node_task else ["graph_id"] + cols)
        for gid, (_, feats) in enumerate(dataset.graphs):
            for row in feats:
                text = [_fmt(v) for v in row]
                writer.writerow(text if node_task else [gid] + text)

    regression = dataset.task == "graph_regression"
    with open(path / files["targets"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target"] if node_task else ["graph_id", "target"])
        for i, t in enumerate(dataset.targets):
            value = _fmt(t) if regression else int(t)
            writer.writerow([value] if node_task else [i, value])

    with open(path / files["masks"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "split"] if node_task else ["graph_id", "split"])
        for split in SPLITS:
            if split not in dataset.masks:
                continue
            ids = np.flatnonzero(dataset.masks[split]) if node_task else dataset.masks[split]
            for i in ids:
                writer.writerow([int(i), split])

    meta = dict(dataset.meta)
    meta["format_version"] = FORMAT_VERSION
    meta.setdefault("name", "unnamed")
    meta["directed"] = False
    if node_task:
        meta["n_nodes"] = dataset.graphs[0][0].n_rows
    else:
        meta["n_graphs"] = len(dataset.graphs)
        if shared_graph:
            meta["shared_graph"] = True
        else:
            meta.pop("shared_graph", None)
    meta["n_features"] = dataset.n_features
    meta["features_format"] = "dense"
    meta["files"] = files
    meta["sha256"] = {fname: _sha256(path / fname) for fname in files.values()}
    with open(path / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_rows(path: Path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name}: empty file") from None
        if header != expected_header:
            raise SchemaError(f"{path.name}: header {header} != {expected_header}")
        return list(reader)


def load_canonical(path) -> GraphDataset:
    """Load and fully validate a canonical dataset directory.

    Raises SchemaError / ChecksumError / DanglingNodeError for the three
    distinct corruption kinds.
    """
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise SchemaError(f"missing meta.json under {path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"meta.json is not valid JSON: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {meta.get('format_version')!r}")
    task = meta.get("task")
    if task not in NODE_TASKS + GRAPH_TASKS:
        raise SchemaError(f"unknown task {task!r}")
    files = meta.get("files", {})
    for key in ("edges", "features", "targets", "masks"):
        if key not in files:
            raise SchemaError(f"meta.json files entry missing {key!r}")
        fpath = path / files[key]
        if not fpath.exists():
            raise SchemaError(f"missing dataset file {files[key]}")
        recorded = meta.get("sha256", {}).get(files[key])
        if recorded is None:
            raise SchemaError(f"meta.json has no checksum for {files[key]}")
        actual = _sha256(fpath)
        if actual != recorded:
            raise ChecksumError(f"{files[key]}: sha256 {actual} != recorded {recorded}")

    node_task = task in NODE_TASKS
    features_format = meta.get("features_format", "dense")
    n_features = int(meta["n_features"])

    if node_task:
        n_nodes = int(meta["n_nodes"])
        edges = []
        for row in _read_rows(path / files["edges"], ["src", "dst", "weight"]):
            s, d, w = int(row[0]), int(row[1]), float(row[2])
            if s >= d:
                raise SchemaError(f"edges must satisfy src < dst, got ({s}, {d})")
            if d >= n_nodes or s < 0:
                raise DanglingNodeError(f"edge ({s}, {d}) outside 0..{n_nodes - 1}")
            edges.append((s, d, w))
        adj = build_csr(n_nodes, edges)
        feats = _load_features_node(path / files["features"], features_format, n_nodes, n_features)
        target_rows = _read_rows(path / files["targets"], ["target"])
        if len(target_rows) != n_nodes:
            raise SchemaError(f"targets.csv has {len(target_rows)} rows, expected {n_nodes}")
        targets = np.array([int(r[0]) for r in target_rows], dtype=np.int64)
        masks = {split: np.zeros(n_nodes, dtype=bool) for split in SPLITS}
        seen = set()
        for row in _read_rows(path / files["masks"], ["node_id", "split"]):
            i, split = int(row[0]), row[1]
            if split not in SPLITS:
                raise SchemaError(f"unknown split {split!r}")
            if i < 0 or i >= n_nodes:
                raise DanglingNodeError(f"mask row references node {i}")
            if i in seen:
                raise SchemaError(f"node {i} appears in more than one mask row")
            seen.add(i)
            masks[split][i] = True
        dataset = GraphDataset([(adj, feats)], targets, masks, meta)
        return dataset.validate()

    n_graphs = int(meta["n_graphs"])
    shared = bool(meta.get("shared_graph", False))
    edge_rows = _read_rows(path / files["edges"], ["graph_id", "src", "dst", "weight"])
    feats_per_graph = _load_features_graph(
        path / files["features"], features_format, n_graphs, n_features
    )
    sizes = [f.shape[0] for f in feats_per_graph]
    per_graph_edges = [[] for _ in range(1 if shared else n_graphs)]
    for row in edge_rows:
        gid, s, d, w = int(row[0]), int(row[1]), int(row[2]), float(row[3])
        if gid < 0 or gid >= len(per_graph_edges):
            raise SchemaError(f"edge row references graph {gid}")
        if s >= d:
            raise SchemaError(f"edges must satisfy src < dst, got ({s}, {d})")
        if d >= sizes[gid] or s < 0:
            raise DanglingNodeError(f"edge ({s}, {d}) outside graph {gid}")
        per_graph_edges[gid].append((s, d, w))
    if shared:
        if len(set(sizes)) != 1:
            raise SchemaError("shared_graph requires equal node counts")
        adj = build_csr(sizes[0], per_graph_edges[0])
        graphs = [(adj, feats) for feats in feats_per_graph]
    else:
        graphs = [
            (build_csr(sizes[g], per_graph_edges[g]), feats_per_graph[g])
            for g in range(n_graphs)
        ]
    target_rows = _read_rows(path / files["targets"], ["graph_id", "target"])
    if len(target_rows) != n_graphs:
        raise SchemaError(f"targets.csv has {len(target_rows)} rows, expected {n_graphs}")
    regression = task == "graph_regression"
    targets = np.empty(n_graphs, dtype=np.float64 if regression else np.int64)
    for row in target_rows:
        gid = int(row[0])
        if gid < 0 or gid >= n_graphs:
            raise SchemaError(f"target row references graph {gid}")
        targets[gid] = float(row[1]) if regression else int(row[1])
    masks = {split: [] for split in SPLITS}
    seen = set()
    for row in _read_rows(path / files["masks"], ["graph_id", "split"]):
        gid, split = int(row[0]), row[1]
        if split not in SPLITS:
            raise SchemaError(f"unknown split {split!r}")
        if gid < 0 or gid >= n_graphs:
            raise DanglingNodeError(f"mask row references graph {gid}")
        if gid in seen:
            raise SchemaError(f"graph {gid} appears in more than one mask row")
        seen.add(gid)
        masks[split].append(gid)
    masks = {k: np.array(v, dtype=np.int64) for k, v in masks.items()}
    dataset = GraphDataset(graphs, targets, masks, meta)
    return dataset.validate()


def _load_features_node(path, fmt, n_nodes, n_features):
    if fmt == "dense":
        rows = _read_rows(path, [f"f{j}" for j in range(n_features)])
        if len(rows) != n_nodes:
            raise SchemaError(f"features.csv has {len(rows)} rows, expected {n_nodes}")
        return np.array([[float(v) for v in row] for row in rows])
    if fmt == "triplet":
        out = np.zeros((n_nodes, n_features))
        for row in _read_rows(path, ["node", "feature", "value"]):
            i, j = int(row[0]), int(row[1])
            if not (0 <= i < n_nodes and 0 <= j < n_features):
                raise DanglingNodeError(f"feature triplet ({i}, {j}) out of range")
            out[i, j] = float(row[2])
        return out
    raise SchemaError(f"unknown features_format {fmt!r}")


def _load_features_graph(path, fmt, n_graphs, n_features):
    if fmt == "dense":
        rows = _read_rows(path, ["graph_id"] + [f"f{j}" for j in range(n_features)])
        per_graph = [[] for _ in range(n_graphs)]
        for row in rows:
            gid = int(row[0])
            if gid < 0 or gid >= n_graphs:
                raise SchemaError(f"feature row references graph {gid}")
            per_graph[gid].append([float(v) for v in row[1:]])
        if any(not rows for rows in per_graph):
            raise SchemaError("every graph needs at least one feature row")
        return [np.array(rows) for rows in per_graph]
    raise SchemaError(f"unknown features_format {fmt!r} for graph-level data")


# ---------------------------------------------------------------------------
# generators


def knn_graph(points, k: int, sigma: float) -> CsrMatrix:
    """Gaussian-weighted k-nearest-neighbour graph.

    Parameters
    ----------
    points : array (n, d)
        Point coordinates.
    k : int
        Neighbours per point, k < n. Distance ties break toward the lower
        index; the edge set is the union over directions.
    sigma : float
        Kernel width; weight = exp(-||p_i - p_j||^2 / sigma^2).
    """
    points = as_dense(points)
    n = points.shape[0]
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n_points, got k={k}, n={n}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sq = np.sum(points**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * points @ points.T, 0.0)
    pairs = set()
    idx = np.arange(n)
    for i in range(n):
        order = np.lexsort((idx, d2[i]))
        chosen = [j for j in order if j != i][:k]
        for j in chosen:
            pairs.add((min(i, j), max(i, j)))
    edges = [(i, j, float(np.exp(-d2[i, j] / sigma**2))) for i, j in sorted(pairs)]
    return build_csr(n, edges)


def synth_sbm(
    n_per_class: int = 100,
    classes: int = 3,
    p_in: float = 0.1,
    p_out: float = 0.01,
    feature_noise: float = 1.0,
    seed: int = 0,
) -> GraphDataset:
    """Stochastic block model node-classification dataset.

    Features are the one-hot class centroid plus Gaussian noise; the train
    mask holds 20 random nodes per class and the rest splits evenly into
    validation and test.
    """
    if p_in <= p_out:
        raise ValueError("community structure requires p_in > p_out")
    rng = make_rng(seed)
    n = n_per_class * classes
    labels = np.repeat(np.arange(classes), n_per_class)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    adj = build_csr(n, [(int(i), int(j), 1.0) for i, j in zip(iu[keep], ju[keep])])
    feats = np.eye(classes)[labels] + feature_noise * rng.standard_normal((n, classes))
    masks = {s: np.zeros(n, dtype=bool) for s in SPLITS}
    leftover = []
    for c in range(classes):
        members = rng.permutation(np.flatnonzero(labels == c))
        take = min(20, len(members))
        masks["train"][members[:take]] = True
        leftover.extend(members[take:].tolist())
    leftover = rng.permutation(np.array(leftover, dtype=np.int64))
    half = len(leftover) // 2
    masks["val"][leftover[:half]] = True
    masks["test"][leftover[half:]] = True
    meta = {
        "name": f"sbm-{classes}x{n_per_class}",
        "task": "node_classification",
        "n_classes": classes,
        "seed": seed,
    }
    return GraphDataset([(adj, feats)], labels, masks, meta).validate()


def synth_band_signals(
    graph: CsrMatrix,
    band=("low", "high"),
    count: int = 200,
    seed: int = 0,
    noise: float = 0.1,
) -> GraphDataset:
    """Balanced two-class signal-classification dataset on one graph.

    Class c signals live on the band named by ``band[c]``: random unit-norm
    combinations of the lowest (or highest) quarter of the Laplacian
    eigenvectors, plus isotropic noise. Split 60/20/20 over signals.
    """
    decomp = symmetric_eig(normalized_laplacian(graph).to_dense())
    n = graph.n_rows
    width = max(1, n // 4)
    bands = {"low": np.arange(width), "high": np.arange(n - width, n)}
    for name in band:
        if name not in bands:
            raise ValueError(f"unknown band {name!r}")
    rng = make_rng(seed)
    graphs, labels = [], []
    for s in range(count):
        cls = s % 2
        cols = bands[band[cls]]
        coeffs = rng.standard_normal(len(cols))
        x = decomp.eigenvectors[:, cols] @ coeffs
        x /= np.linalg.norm(x)
        x = x + noise * rng.standard_normal(n) / np.sqrt(n)
        graphs.append((graph, x.reshape(-1, 1)))
        labels.append(cls)
    order = rng.permutation(count)
    n_train = int(0.6 * count)
    n_val = int(0.2 * count)
    masks = {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train : n_train + n_val]),
        "test": np.sort(order[n_train + n_val :]),
    }
    meta = {
        "name": f"band-{band[0]}-vs-{band[1]}",
        "task": "signal_classification",
        "n_classes": 2,
        "seed": seed,
    }
    return GraphDataset(graphs, np.array(labels, dtype=np.int64), masks, meta).validate()


# ---------------------------------------------------------------------------
# parameter checkpoints


def save_checkpoint(params, path, seed: int) -> None:
    """Flat parameter container: version header, seed, then little-endian f8 blobs."""
    header = {
        "version": 1,
        "seed": int(seed),
        "params": [{"name": p.name, "shape": list(p.value.shape)} for p in params],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (name -> array mapping, seed)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise SchemaError("not a checkpoint file (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + hlen].decode())
    if header.get("version") != 1:
        raise SchemaError(f"unsupported checkpoint version {header.get('version')!r}")
    off += hlen
    values = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(raw[off : off + size], dtype="<f8").reshape(shape)
        values[entry["name"]] = arr.astype(np.float64)
        off += size
    if off != len(raw):
        raise SchemaError("checkpoint payload length mismatch")
    return values, header["seed"]
