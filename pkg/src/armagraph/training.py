"""Model assembly, Adam optimization, early stopping, and benchmarks.

A model is a chain of graph blocks (arma / gcn / cheb) with an optional
global-average readout for graph-level tasks. Node tasks train full-batch
with one update per epoch; graph-level tasks (including signal
classification) run seeded mini-batches assembled as block-diagonal
operators so the sparse path is identical everywhere. Training is
bit-reproducible for a fixed seed.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from armagraph.autodiff import Parameter, Tape
from armagraph.data import GraphDataset
from armagraph.errors import ConfigError, DivergenceError
from armagraph.layers import (
    ArmaConfig,
    arma_layer_forward,
    arma_stack_outputs,
    cheb_layer_forward,
    gcn_layer_forward,
    glorot,
    init_conv_skip_params,
)
from armagraph.rng import make_rng, split_rng
from armagraph.sparse import (
    CsrMatrix,
    estimate_lambda_max,
    gcn_adjacency,
    normalized_laplacian,
    propagation_matrix,
    scaled_laplacian,
)

TASKS = ("node_classification", "signal_classification", "graph_classification", "graph_regression")
BLOCK_KINDS = ("arma", "gcn", "cheb")
READOUTS = ("none", "global_average_then_dense")


@dataclass(frozen=True)
class BlockConfig:
    kind: str
    width: int
    activation: str | None = None
    stacks: int = 1
    depth: int = 1
    skip_dropout: float = 0.0
    gamma: float = 1.0
    order: int = 2

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ConfigError(f"unknown block kind {self.kind!r}")
        if self.width < 1:
            raise ConfigError("block width must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    task: str
    blocks: tuple
    readout: str = "none"
    l2_weight: float = 0.0
    learning_rate: float = 1e-2
    max_epochs: int = 2000
    patience: int = 50
    feature_dropout: float = 0.0
    batch_size: int = 32
    lambda_max: float | str = 2.0
    bias: bool = False
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.readout not in READOUTS:
            raise ConfigError(f"unknown readout {self.readout!r}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        needs_readout = self.task != "node_classification"
        if needs_readout != (self.readout == "global_average_then_dense"):
            raise ConfigError("graph-level tasks need the global-average readout, node tasks none")
        if self.task == "node_classification" and not self.blocks:
            raise ConfigError("node classification needs at least one block")

    @staticmethod
    def from_dict(raw: dict) -> "ModelConfig":
        known = {
            "task", "blocks", "readout", "l2_weight", "learning_rate", "max_epochs",
            "patience", "feature_dropout", "batch_size", "lambda_max", "bias",
            "adam_betas", "adam_eps",
        }
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "task" not in raw:
            raise ConfigError("config needs a task")
        blocks = []
        for i, b in enumerate(raw.get("blocks", [])):
            bad = set(b) - {"kind", "width", "activation", "stacks", "depth",
                            "skip_dropout", "gamma", "order"}
            if bad:
                raise ConfigError(f"block {i}: unknown keys {sorted(bad)}")
            try:
                blocks.append(BlockConfig(**b))
            except TypeError as exc:
                raise ConfigError(f"block {i}: {exc}") from exc
        kwargs = {k: v for k, v in raw.items() if k != "blocks"}
        if "adam_betas" in kwargs:
            kwargs["adam_betas"] = tuple(kwargs["adam_betas"])
        try:
            return ModelConfig(blocks=tuple(blocks), **kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "blocks": [
                {
                    "kind": b.kind, "width": b.width, "activation": b.activation,
                    "stacks": b.stacks, "depth": b.depth, "skip_dropout": b.skip_dropout,
                    "gamma": b.gamma, "order": b.order,
                }
                for b in self.blocks
            ],
            "readout": self.readout,
            "l2_weight": self.l2_weight,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "feature_dropout": self.feature_dropout,
            "batch_size": self.batch_size,
            "lambda_max": self.lambda_max,
            "bias": self.bias,
            "adam_betas": list(self.adam_betas),
            "adam_eps": self.adam_eps,
        }


class GraphOperators:
    """Per-graph operator cache: each variant is built once per graph."""

    def __init__(self, adj: CsrMatrix):
        self.adj = adj
        self._cache = {}

    def get(self, kind: str, block: BlockConfig, lambda_max) -> CsrMatrix:
        if kind == "gcn":
            key = ("gcn", block.gamma)
        elif kind == "cheb":
            key = ("cheb", lambda_max)
        else:
            key = ("arma",)
        if key not in self._cache:
            if kind == "gcn":
                self._cache[key] = gcn_adjacency(self.adj, block.gamma)
            else:
                lap = self._laplacian()
                if kind == "arma":
                    self._cache[key] = propagation_matrix(lap)
                else:
                    lmax = estimate_lambda_max(lap) if lambda_max == "estimate" else lambda_max
                    self._cache[key] = scaled_laplacian(lap, lmax)
        return self._cache[key]

    def _laplacian(self) -> CsrMatrix:
        if "laplacian" not in self._cache:
            self._cache["laplacian"] = normalized_laplacian(self.adj)
        return self._cache["laplacian"]


def block_diagonal(mats) -> CsrMatrix:
    """Stack square CSR matrices along the diagonal."""
    n = sum(m.n_rows for m in mats)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = np.concatenate([m.indices for m in mats]) if mats else np.zeros(0, np.int64)
    data = np.concatenate([m.data for m in mats]) if mats else np.zeros(0)
    row_off, col_off, nnz_off = 0, 0, 0
    for m in mats:
        indptr[row_off : row_off + m.n_rows + 1] = m.indptr + nnz_off
        indices[nnz_off : nnz_off + m.nnz] += col_off
        row_off += m.n_rows
        col_off += m.n_cols
        nnz_off += m.nnz
    return CsrMatrix(n, n, indptr, indices, data)


class Model:
    """Parameter container plus the tape-forward for one architecture."""

    def __init__(self, config: ModelConfig, meta: dict, seed: int = 0):
        self.config = config
        self.task = config.task
        self.seed = seed
        n_features = int(meta["n_features"])
        self.n_classes = meta.get("n_classes")
        rng = make_rng(np.random.SeedSequence(seed).spawn(1)[0])

        self.block_params = []
        width = n_features
        for i, block in enumerate(config.blocks):
            activation = block.activation
            if activation is None:
                last = i == len(config.blocks) - 1 and config.readout == "none"
                activation = "identity" if last else "relu"
            if block.kind == "arma":
                arma = ArmaConfig(
                    stacks=block.stacks, depth=block.depth, f_in=width, f_out=block.width,
                    activation=activation, skip_dropout=block.skip_dropout, bias=config.bias,
                )
                stacks = [
                    init_conv_skip_params(rng, arma, f"block{i}.stack{k}")
                    for k in range(block.stacks)
                ]
                self.block_params.append(("arma", block, arma, stacks))
            elif block.kind == "gcn":
                w = Parameter(f"block{i}.w", glorot(rng, (width, block.width)))
                self.block_params.append(("gcn", block, activation, w))
            else:
                ws = [
                    Parameter(f"block{i}.w{k}", glorot(rng, (width, block.width)))
                    for k in range(block.order)
                ]
                self.block_params.append(("cheb", block, activation, ws))
            width = block.width

        self.readout_param = None
        if config.readout == "global_average_then_dense":
            out_width = 1 if self.task == "graph_regression" else int(self.n_classes)
            self.readout_param = Parameter("readout.w", glorot(rng, (width, out_width)))
            width = out_width
        self.out_width = width

        if self.task in ("node_classification", "signal_classification", "graph_classification"):
            if self.n_classes is None:
                raise ConfigError("classification tasks need n_classes in the dataset meta")
            if width != self.n_classes:
                raise ConfigError(
                    f"output width {width} does not match n_classes {self.n_classes}"
                )
        elif width != 1:
            raise ConfigError("regression output width must be 1")
        self._operator_cache = {}

    def parameters(self):
        out = []
        for entry in self.block_params:
            if entry[0] == "arma":
                for stack in entry[3]:
                    out.extend(stack.parameters())
            elif entry[0] == "gcn":
                out.append(entry[3])
            else:
                out.extend(entry[3])
        if self.readout_param is not None:
            out.append(self.readout_param)
        return out

    def weight_parameters(self):
        """Weight matrices only: the L2 penalty skips biases."""
        return [p for p in self.parameters() if not p.name.endswith(".bias")]

    def operators_for(self, adj: CsrMatrix) -> GraphOperators:
        key = adj.content_hash()
        if key not in self._operator_cache:
            self._operator_cache[key] = GraphOperators(adj)
        return self._operator_cache[key]

    def forward(self, tape: Tape, adjacencies, features, training=False, rng=None):
        """Logits (or regression output) for one graph or a batch of graphs.

        ``adjacencies`` is a list of CsrMatrix (length 1 for node tasks);
        the batch operator is their block-diagonal.
        """
        x = tape.leaf(features)
        x = tape.dropout(x, self.config.feature_dropout, training=training, rng=rng)
        for entry in self.block_params:
            kind = entry[0]
            ops = [
                self.operators_for(a).get(kind, entry[1], self.config.lambda_max)
                for a in adjacencies
            ]
            op = ops[0] if len(ops) == 1 else block_diagonal(ops)
            if kind == "arma":
                x = arma_layer_forward(tape, op, x, entry[2], entry[3], training=training, rng=rng)
            elif kind == "gcn":
                x = gcn_layer_forward(tape, op, x, entry[3], entry[2])
            else:
                x = cheb_layer_forward(tape, op, x, entry[3], entry[2])
        if self.readout_param is not None:
            sizes = np.array([a.n_rows for a in adjacencies], dtype=np.int64)
            bounds = np.concatenate([[0], np.cumsum(sizes)])
            x = tape.segment_mean(x, bounds)
            x = tape.matmul(x, tape.param(self.readout_param))
        return x

    def probe_depth_outputs(self, adj: CsrMatrix, signal):
        """Per-depth eval-mode outputs for response probing.

        For a leading arma block this is its first stack step by step; for
        a gcn/cheb model it is the output after each successive block.
        """
        ops = self.operators_for(adj)
        tape = Tape()
        x = tape.leaf(signal)
        first = self.block_params[0]
        if first[0] == "arma":
            nodes = arma_stack_outputs(tape, ops.get("arma", first[1], None), x, first[2], first[3][0])
            return [n.value for n in nodes]
        outs = []
        for entry in self.block_params:
            op = ops.get(entry[0], entry[1], self.config.lambda_max)
            if entry[0] == "gcn":
                x = gcn_layer_forward(tape, op, x, entry[3], entry[2])
            else:
                x = cheb_layer_forward(tape, op, x, entry[3], entry[2])
            outs.append(x.value)
        return outs

    def state_dict(self):
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state(self, state):
        for p in self.parameters():
            p.value[:] = state[p.name]


def build_model(config: ModelConfig, dataset_meta: dict, seed: int = 0) -> Model:
    """Model with freshly initialized parameters for a dataset's shape."""
    return Model(config, dataset_meta, seed)


def dataset_meta(dataset: GraphDataset) -> dict:
    return {
        "task": dataset.task,
        "n_features": dataset.n_features,
        "n_classes": dataset.n_classes,
    }


# ---------------------------------------------------------------------------
# optimizer


class AdamState:
    def __init__(self, params):
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}
        self.t = 0


def adam_step(params, state: AdamState, lr, betas=(0.9, 0.999), eps=1e-8) -> AdamState:
    """Standard bias-corrected Adam update from the accumulated gradients."""
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p in params:
        g = p.grad
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainReport:
    seed: int
    config: dict
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_metric: float = np.nan
    test_metric: float = np.nan
    wall_seconds: float = 0.0
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "seed": self.seed,
            "config": self.config,
            "best_epoch": self.best_epoch,
            "best_val_metric": self.best_val_metric,
            "test_metric": self.test_metric,
            "wall_seconds": self.wall_seconds,
            "diverged": self.diverged,
            "epochs": self.epochs,
        }

    def write_curves_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "train_loss", "val_loss", "train_metric", "val_metric", "seconds"]
            )
            for e in self.epochs:
                writer.writerow(
                    [
                        e["epoch"],
                        repr(e["train_loss"]),
                        repr(e["val_loss"]),
                        repr(e["train_metric"]),
                        repr(e["val_metric"]),
                        repr(e["seconds"]),
                    ]
                )


def _node_batch(dataset):
    adj, feats = dataset.graphs[0]
    return [adj], feats


def _graph_batch(dataset, idx):
    graphs = [dataset.graphs[i] for i in idx]
    adjacencies = [g[0] for g in graphs]
    feats = np.concatenate([g[1] for g in graphs], axis=0)
    return adjacencies, feats


def _loss_and_metric(model, logits_value, targets, regression):
    if regression:
        diff = logits_value[:, 0] - targets
        return float(np.mean(diff**2))
    pred = np.argmax(logits_value, axis=1)
    return float(np.mean(pred == targets))


def evaluate(model: Model, dataset: GraphDataset, mask) -> float:
    """Eval-mode metric: accuracy (ties break to the lowest class) or MSE."""
    regression = model.task == "graph_regression"
    if dataset.is_node_task:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("empty evaluation mask")
        adjacencies, feats = _node_batch(dataset)
        tape = Tape()
        logits = model.forward(tape, adjacencies, feats, training=False)
        return _loss_and_metric(model, logits.value[mask], dataset.targets[mask], regression)
    idx = np.asarray(mask, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("empty evaluation mask")
    outputs = []
    for lo in range(0, len(idx), model.config.batch_size):
        batch = idx[lo : lo + model.config.batch_size]
        adjacencies, feats = _graph_batch(dataset, batch)
        tape = Tape()
        logits = model.forward(tape, adjacencies, feats, training=False)
        outputs.append(logits.value)
    stacked = np.concatenate(outputs, axis=0)
    return _loss_and_metric(model, stacked, dataset.targets[idx], regression)


def _eval_loss(model, dataset, mask):
    regression = model.task == "graph_regression"
    if dataset.is_node_task:
        adjacencies, feats = _node_batch(dataset)
        tape = Tape()
        logits = model.forward(tape, adjacencies, feats, training=False)
        if regression:
            return float(np.mean((logits.value[mask, 0] - dataset.targets[mask]) ** 2))
        loss = tape.masked_softmax_xent(logits, dataset.targets, mask)
        return float(loss.value[0, 0])
    idx = np.asarray(mask, dtype=np.int64)
    total, count = 0.0, 0
    for lo in range(0, len(idx), model.config.batch_size):
        batch = idx[lo : lo + model.config.batch_size]
        adjacencies, feats = _graph_batch(dataset, batch)
        tape = Tape()
        logits = model.forward(tape, adjacencies, feats, training=False)
        if regression:
            total += float(np.sum((logits.value[:, 0] - dataset.targets[batch]) ** 2))
        else:
            loss = tape.masked_softmax_xent(logits, dataset.targets[batch])
            total += float(loss.value[0, 0]) * len(batch)
        count += len(batch)
    return total / count


def _train_epoch(model, dataset, optimizer, dropout_rng, shuffle_rng):
    """One pass over all training entities; returns the training loss."""
    config = model.config
    params = model.parameters()
    regression = model.task == "graph_regression"
    if dataset.is_node_task:
        adjacencies, feats = _node_batch(dataset)
        tape = Tape()
        logits = model.forward(tape, adjacencies, feats, training=True, rng=dropout_rng)
        loss = tape.masked_softmax_xent(logits, dataset.targets, dataset.masks["train"])
        if config.l2_weight > 0.0:
            penalty = tape.l2_penalty(
                [tape.param(p) for p in model.weight_parameters()], config.l2_weight
            )
            loss = tape.add(loss, penalty)
        value = float(loss.value[0, 0])
        if not np.isfinite(value):
            return value
        for p in params:
            p.zero_grad()
        tape.backward(loss)
        adam_step(params, optimizer, config.learning_rate, config.adam_betas, config.adam_eps)
        return value

    order = shuffle_rng.permutation(np.asarray(dataset.masks["train"], dtype=np.int64))
    total, count = 0.0, 0
    for lo in range(0, len(order), config.batch_size):
        batch = order[lo : lo + config.batch_size]
        adjacencies, feats = _graph_batch(dataset, batch)
        tape = Tape()
        out = model.forward(tape, adjacencies, feats, training=True, rng=dropout_rng)
        if regression:
            loss = tape.mse(out, dataset.targets[batch].reshape(-1, 1))
        else:
            loss = tape.masked_softmax_xent(out, dataset.targets[batch])
        if config.l2_weight > 0.0:
            penalty = tape.l2_penalty(
                [tape.param(p) for p in model.weight_parameters()], config.l2_weight
            )
            loss = tape.add(loss, penalty)
        value = float(loss.value[0, 0])
        if not np.isfinite(value):
            return value
        for p in params:
            p.zero_grad()
        tape.backward(loss)
        adam_step(params, optimizer, config.learning_rate, config.adam_betas, config.adam_eps)
        total += value * len(batch)
        count += len(batch)
    return total / count


def train(model: Model, dataset: GraphDataset, seed: int = 0) -> TrainReport:
    """Full training run with early stopping and best-epoch restore.

    The validation metric drives early stopping (max accuracy for
    classification, min MSE for regression); the best epoch's parameters
    are restored before the test evaluation. Non-finite losses abort with
    a DivergenceError carrying the partial report.
    """
    config = model.config
    regression = model.task == "graph_regression"
    dropout_rng, shuffle_rng = split_rng(seed, 2)
    optimizer = AdamState(model.parameters())
    report = TrainReport(seed=seed, config=config.to_dict())
    better = (lambda a, b: a < b) if regression else (lambda a, b: a > b)
    best_state = model.state_dict()
    start = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        train_loss = _train_epoch(model, dataset, optimizer, dropout_rng, shuffle_rng)
        if not np.isfinite(train_loss):
            report.diverged = True
            report.wall_seconds = time.perf_counter() - start
            raise DivergenceError(f"non-finite loss at epoch {epoch}", report=report)
        train_metric = evaluate(model, dataset, dataset.masks["train"])
        val_metric = evaluate(model, dataset, dataset.masks["val"])
        val_loss = _eval_loss(model, dataset, dataset.masks["val"])
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "train_metric": train_metric,
                "val_metric": val_metric,
                "seconds": time.perf_counter() - t0,
            }
        )
        if report.best_epoch < 0 or better(val_metric, report.best_val_metric):
            report.best_epoch = epoch
            report.best_val_metric = val_metric
            best_state = model.state_dict()
        if epoch - report.best_epoch >= config.patience:
            break

    model.load_state(best_state)
    report.test_metric = evaluate(model, dataset, dataset.masks["test"])
    report.wall_seconds = time.perf_counter() - start
    return report


def benchmark_epoch(model: Model, dataset: GraphDataset, repeats: int = 10, warmup: int = 3):
    """Median/IQR wall-clock of a full training epoch, nnz of the operators used."""
    optimizer = AdamState(model.parameters())
    dropout_rng, shuffle_rng = split_rng(0, 2)
    times = []
    for i in range(warmup + repeats):
        t0 = time.perf_counter()
        _train_epoch(model, dataset, optimizer, dropout_rng, shuffle_rng)
        if i >= warmup:
            times.append(time.perf_counter() - t0)
    times = np.array(times)
    q25, q50, q75 = np.percentile(times, [25, 50, 75])
    nnz = [
        ops._cache[key].nnz
        for ops in model._operator_cache.values()
        for key in ops._cache
        if key != "laplacian"
    ]
    return {
        "median_s": float(q50),
        "iqr_s": float(q75 - q25),
        "times_s": times.tolist(),
        "operator_nnz": nnz,
    }
