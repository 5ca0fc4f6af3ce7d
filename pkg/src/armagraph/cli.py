"""Command-line surface: train, filter, probe, gradcheck, bench, validate.

Every artifact-producing run writes exactly one manifest.json into its
output directory and nothing outside it. Exit codes: 0 ok, 2 config,
3 data, 4 divergence, 5 numeric precondition, 6 resource cap. Failures
also emit machine-readable error JSON.
"""

import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from armagraph import __version__
from armagraph._backend import backend_name
from armagraph.autodiff import Tape, grad_check
from armagraph.data import (
    GraphDataset,
    load_canonical,
    load_checkpoint,
    save_checkpoint,
    synth_sbm,
)
from armagraph.errors import (
    ArmagraphError,
    ConfigError,
    DataError,
    DivergenceError,
    NumericError,
    ResourceCapError,
)
from armagraph.filters import (
    Arma1Params,
    PolyFilterSpec,
    RationalFilterSpec,
    arma1_recursion,
    arma1_response,
    cheb_filter_apply,
    poly_filter_apply,
    rational_filter_exact,
)
from armagraph.probe import empirical_response, write_report_csv
from armagraph.sparse import (
    SpectralDecomposition,
    normalized_laplacian,
    propagation_matrix,
    scaled_laplacian,
    symmetric_eig,
)
from armagraph.training import (
    ModelConfig,
    benchmark_epoch,
    build_model,
    dataset_meta,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_NUMERIC = 5
EXIT_CAP = 6

_ERROR_KINDS = {
    EXIT_CONFIG: "config",
    EXIT_DATA: "data",
    EXIT_DIVERGENCE: "divergence",
    EXIT_NUMERIC: "numeric_precondition",
    EXIT_CAP: "resource_cap",
}


def _read_json(path, kind="config"):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        if kind == "data":
            raise DataError(f"missing file: {path}") from None
        raise ConfigError(f"missing file: {path}") from None
    except json.JSONDecodeError as exc:
        if kind == "data":
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _load_dataset(path) -> GraphDataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset path does not exist: {path}")
    return load_canonical(path)


def _manifest(args, command, resolved_config, started, extra=None):
    manifest = {
        "command": command,
        "config_path": str(getattr(args, "config", None)),
        "resolved_config": resolved_config,
        "seed": getattr(args, "seed", None),
        "out_dir": str(getattr(args, "out", None)),
        "tool_version": __version__,
        "backend": backend_name(),
        "threads": getattr(args, "threads", None),
        "started_at": started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        manifest.update(extra)
    return manifest


def _write_manifest(out_dir, manifest):
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_threads(args):
    threads = getattr(args, "threads", None)
    if threads:
        try:
            import threadpoolctl

            threadpoolctl.threadpool_limits(threads)
        except ImportError:
            pass


# ---------------------------------------------------------------------------
# train


def cmd_train(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _apply_threads(args)
    config = ModelConfig.from_dict(_read_json(args.config))
    dataset = _load_dataset(args.data)
    if dataset.task != config.task:
        raise ConfigError(f"config task {config.task!r} != dataset task {dataset.task!r}")
    out = _prepare_out(args)
    model = build_model(config, dataset_meta(dataset), seed=args.seed)
    try:
        report = train(model, dataset, seed=args.seed)
    except DivergenceError as exc:
        if exc.report is not None:
            with open(out / "report.json", "w") as fh:
                json.dump(exc.report.to_dict(), fh, indent=2)
        raise
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    report.write_curves_csv(out / "curves.csv")
    save_checkpoint(model.parameters(), out / "model.ckpt", seed=args.seed)
    _write_manifest(out, _manifest(args, "train", config.to_dict(), started))
    print(f"test_metric={report.test_metric:.4f} best_epoch={report.best_epoch}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# filter


def _filter_signal(kind, spec, dataset, column):
    adj, feats = dataset.graphs[0]
    if not 0 <= column < feats.shape[1]:
        raise ConfigError(f"signal column {column} outside 0..{feats.shape[1] - 1}")
    x = feats[:, [column]]
    lap = normalized_laplacian(adj)
    iterations = None
    if kind == "poly":
        out = poly_filter_apply(lap, PolyFilterSpec(spec["weights"]), x)
    elif kind == "cheb":
        ls = scaled_laplacian(lap, float(spec.get("lambda_max", 2.0)))
        out = cheb_filter_apply(ls, PolyFilterSpec(spec["weights"]), x)
    elif kind == "arma1":
        params = Arma1Params(float(spec["a"]), float(spec["b"]))
        out, iterations = arma1_recursion(
            propagation_matrix(lap), params, x,
            tol=float(spec.get("tol", 1e-8)), max_iter=int(spec.get("max_iter", 10_000)),
        )
    elif kind == "armaK":
        prop = propagation_matrix(lap)
        out = np.zeros_like(x)
        iterations = []
        for branch in spec["branches"]:
            params = Arma1Params(float(branch["a"]), float(branch["b"]))
            part, iters = arma1_recursion(
                prop, params, x,
                tol=float(spec.get("tol", 1e-8)), max_iter=int(spec.get("max_iter", 10_000)),
            )
            out += part
            iterations.append(iters)
    elif kind == "rational_exact":
        rspec = RationalFilterSpec(
            tuple(spec["numerator"]), tuple(spec.get("denominator", ()))
        )
        out = rational_filter_exact(lap, rspec, x)
    else:
        raise ConfigError(f"unknown filter kind {kind!r}")
    return x, out, iterations


def cmd_filter(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    spec = _read_json(args.config)
    if "kind" not in spec:
        raise ConfigError("filter spec needs a 'kind'")
    dataset = _load_dataset(args.data)
    x, out_signal, iterations = _filter_signal(spec["kind"], spec, dataset, args.signal_column)
    out = _prepare_out(args)
    rows = [
        {"node": i, "input": float(x[i, 0]), "output": float(out_signal[i, 0])}
        for i in range(len(x))
    ]
    if args.format == "json":
        with open(out / "filtered.json", "w") as fh:
            json.dump({"iterations": iterations, "rows": rows}, fh, indent=2)
    else:
        with open(out / "filtered.csv", "w") as fh:
            fh.write("node,input,output\n")
            for r in rows:
                fh.write(f"{r['node']},{r['input']!r},{r['output']!r}\n")
    _write_manifest(
        out, _manifest(args, "filter", spec, started, extra={"iterations": iterations})
    )
    if iterations is not None:
        print(f"iterations={iterations}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# probe


def _cached_eig(operator) -> SpectralDecomposition:
    from armagraph.sparse import EIG_SIZE_CAP

    if operator.n_rows > EIG_SIZE_CAP:
        # refuse before materializing the dense copy
        raise ResourceCapError(
            f"probe needs a full eigendecomposition; n={operator.n_rows} exceeds {EIG_SIZE_CAP}"
        )
    cache_dir = os.environ.get("ARMA_CACHE_DIR", "")
    if not cache_dir:
        return symmetric_eig(operator.to_dense())
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    key = cache / f"{operator.content_hash()}.npz"
    if key.exists():
        data = np.load(key)
        return SpectralDecomposition(data["eigenvalues"], data["eigenvectors"])
    decomp = symmetric_eig(operator.to_dense())
    np.savez(key, eigenvalues=decomp.eigenvalues, eigenvectors=decomp.eigenvectors)
    return decomp


def cmd_probe(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _apply_threads(args)
    config = ModelConfig.from_dict(_read_json(args.config))
    if not config.blocks:
        raise ConfigError("probe needs at least one block")
    probed = config.blocks[:1] if config.blocks[0].kind == "arma" else config.blocks
    if any(b.width != 1 for b in probed):
        raise ConfigError("responses are single-channel: probed blocks must have width 1")
    dataset = _load_dataset(args.data)
    adj, feats = dataset.graphs[0]
    if not 0 <= args.feature_index < feats.shape[1]:
        raise ConfigError(f"feature index {args.feature_index} outside feature range")
    x = feats[:, [args.feature_index]]
    # probe models are not classifiers: the output width is whatever the
    # config's last block produces
    meta = {"task": config.task, "n_features": 1, "n_classes": config.blocks[-1].width}
    model = build_model(config, meta, seed=args.seed)
    if args.checkpoint:
        values, _ = load_checkpoint(args.checkpoint)
        for p in model.parameters():
            if p.name not in values:
                raise ConfigError(f"checkpoint is missing parameter {p.name!r}")
            if values[p.name].shape != p.value.shape:
                raise ConfigError(
                    f"checkpoint parameter {p.name!r} has shape "
                    f"{values[p.name].shape}, expected {p.value.shape}"
                )
            p.value[:] = values[p.name]
    first = model.block_params[0]
    ops = model.operators_for(adj)
    if first[0] == "gcn":
        operator = ops.get("gcn", first[1], config.lambda_max)
    else:
        operator = normalized_laplacian(adj)
    decomp = _cached_eig(operator)

    depth_outputs = model.probe_depth_outputs(adj, x)
    out = _prepare_out(args)
    analytic_kind = None
    written = []
    for depth, x_bar in enumerate(depth_outputs, start=1):
        report = empirical_response(decomp, x, x_bar)
        analytic = None
        if first[0] == "arma" and first[2].f_in == 1 and first[2].f_out == 1:
            stack = first[3][0]
            # the steady state is governed by the recurrent (shared) scalar;
            # the first-step map only shapes the transient
            recurrent = stack.w_shared if stack.w_shared is not None else stack.w_in
            w = float(recurrent.value[0, 0])
            v = float(stack.v.value[0, 0])
            if abs(w) < 1.0:
                analytic = arma1_response(Arma1Params(w, v), 1.0 - report.eigenvalues)
                analytic_kind = "first_order_rational_limit"
        elif first[0] == "gcn":
            analytic = report.eigenvalues**depth
            analytic_kind = "operator_eigenvalue_power"
        path = out / f"depth_{depth:02d}.csv"
        write_report_csv(report, path, analytic=analytic)
        written.append(path.name)
    _write_manifest(
        out,
        _manifest(
            args, "probe", config.to_dict(), started,
            extra={"reports": written, "analytic": analytic_kind,
                   "feature_index": args.feature_index},
        ),
    )
    print(f"wrote {len(written)} depth reports to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


_BUNDLED = {"gcn": "gradcheck_gcn.json", "cheb": "gradcheck_cheb.json", "arma": "gradcheck_arma.json"}


def _resolve_config_path(name):
    if name in _BUNDLED:
        return resources.files("armagraph").joinpath("configs", _BUNDLED[name])
    return Path(name)


def cmd_gradcheck(args):
    config = ModelConfig.from_dict(_read_json(_resolve_config_path(args.config)))
    dataset = synth_sbm(n_per_class=5, classes=2, p_in=0.5, p_out=0.1, seed=args.seed)
    model = build_model(config, dataset_meta(dataset), seed=args.seed)
    adj, feats = dataset.graphs[0]

    def build():
        tape = Tape()
        logits = model.forward(tape, [adj], feats, training=False)
        return tape.masked_softmax_xent(logits, dataset.targets, dataset.masks["train"])

    worst = grad_check(build, model.parameters(), epsilon=1e-5, seed=args.seed)
    kinds = ",".join(sorted({b.kind for b in config.blocks}))
    print(f"{kinds}: max relative gradient error {worst:.3e}")
    return EXIT_OK if worst <= 1e-4 else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# bench


def _suite_graph(n_nodes, target_edges, seed):
    # SBM with two communities sized to hit the requested edge count in expectation
    within = 2 * (n_nodes // 2) * (n_nodes // 2 - 1) // 2
    across = (n_nodes // 2) ** 2
    p_in = target_edges / (within + across / 4.0)
    p_in = min(p_in, 0.9)
    return synth_sbm(
        n_per_class=n_nodes // 2, classes=2, p_in=p_in, p_out=p_in / 4.0,
        feature_noise=1.0, seed=seed,
    )


def _bench_model_config(kind, suite, task="node_classification"):
    hidden = int(suite.get("hidden", 32))
    classes = int(suite.get("classes", 2))
    if kind == "arma":
        arma = suite.get("arma", {})
        blocks = [
            {"kind": "arma", "width": hidden, "stacks": int(arma.get("stacks", 2)),
             "depth": int(arma.get("depth", 1))},
            {"kind": "arma", "width": classes, "stacks": int(arma.get("stacks", 2)),
             "depth": int(arma.get("depth", 1))},
        ]
    else:
        blocks = [{"kind": kind, "width": hidden}, {"kind": kind, "width": classes}]
    return ModelConfig.from_dict({"task": task, "blocks": blocks, "max_epochs": 1, "patience": 1})


def cmd_bench(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _apply_threads(args)
    suite = _read_json(args.suite)
    n_nodes = int(suite.get("nodes", 1000))
    edge_targets = suite.get("edge_targets", [1000, 2000, 4000])
    repeats = int(suite.get("repeats", 10))
    kinds = suite.get("layer_kinds", ["gcn", "arma"])
    seed = int(suite.get("seed", 0))
    out = _prepare_out(args)
    rows = []
    for target in edge_targets:
        dataset = _suite_graph(n_nodes, int(target), seed)
        adj = dataset.graphs[0][0]
        n_edges = adj.nnz // 2
        stats_by_kind = {}
        for kind in kinds:
            config = _bench_model_config(kind, suite)
            model = build_model(config, dataset_meta(dataset), seed=seed)
            stats = benchmark_epoch(model, dataset, repeats=repeats)
            stats_by_kind[kind] = stats
        ratio = None
        if "arma" in stats_by_kind and "gcn" in stats_by_kind:
            ratio = stats_by_kind["arma"]["median_s"] / stats_by_kind["gcn"]["median_s"]
        for kind, stats in stats_by_kind.items():
            rows.append(
                {
                    "layer": kind,
                    "n_nodes": n_nodes,
                    "n_edges": n_edges,
                    "nnz": int(adj.nnz),
                    "epoch_ms_median": stats["median_s"] * 1e3,
                    "epoch_ms_iqr": stats["iqr_s"] * 1e3,
                    "arma_gcn_ratio": ratio if kind == "arma" else "",
                }
            )
    header = ["layer", "n_nodes", "n_edges", "nnz", "epoch_ms_median", "epoch_ms_iqr", "arma_gcn_ratio"]
    if args.format == "json":
        with open(out / "bench.json", "w") as fh:
            json.dump(rows, fh, indent=2)
    else:
        with open(out / "bench.csv", "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(str(row[k]) for k in header) + "\n")
    _write_manifest(out, _manifest(args, "bench", suite, started, extra={"rows": len(rows)}))
    print(f"benchmarked {len(rows)} rows into {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args):
    dataset = _load_dataset(args.data)
    n = dataset.graphs[0][0].n_rows if dataset.is_node_task else len(dataset.graphs)
    unit = "nodes" if dataset.is_node_task else "graphs"
    print(
        f"ok: task={dataset.task} {unit}={n} features={dataset.n_features} "
        f"classes={dataset.n_classes}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring


def build_parser():
    parser = argparse.ArgumentParser(prog="armagraph", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a model on a canonical dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("filter", help="apply a classic filter to one signal column")
    p.add_argument("--config", required=True, help="filter spec JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--signal-column", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("probe", help="per-depth empirical frequency responses")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--feature-index", type=int, default=0)
    p.add_argument("--checkpoint", default=None, help="load parameters instead of seeding them")
    common(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("gradcheck", help="finite-difference check of a model config")
    p.add_argument("--config", required=True, help="path or bundled name: gcn|cheb|arma")
    common(p, out_required=False)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="epoch-time scaling suite")
    p.add_argument("--suite", required=True, help="suite JSON")
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="load and validate a canonical dataset")
    p.add_argument("--data", required=True)
    common(p, out_required=False)
    p.set_defaults(func=cmd_validate)

    return parser


def _emit_error(args, code, exc):
    payload = {
        "error_kind": _ERROR_KINDS.get(code, "internal"),
        "message": str(exc),
        "exit_code": code,
    }
    print(json.dumps(payload), file=sys.stderr)
    out = getattr(args, "out", None)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            with open(Path(out) / "error.json", "w") as fh:
                json.dump(payload, fh, indent=2)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _emit_error(args, EXIT_CONFIG, exc)
    except DataError as exc:
        return _emit_error(args, EXIT_DATA, exc)
    except DivergenceError as exc:
        return _emit_error(args, EXIT_DIVERGENCE, exc)
    except ResourceCapError as exc:
        return _emit_error(args, EXIT_CAP, exc)
    except (NumericError, ArmagraphError) as exc:
        return _emit_error(args, EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
