"""Command-line interface.

Every flag can also be supplied through an environment variable named
GRAPHHMM_<FLAG> (dashes become underscores), e.g. GRAPHHMM_OUTER_ITERS=50.
Exit codes: 0 on success, 1 on runtime or file-validation errors, 2 on
usage errors.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import io
from .evaluation import cluster_assignments, relative_sparsity, roc_auc, score_dataset
from .forecast import forecast_mean
from .mixture import SequenceDataset, sample_from_node
from .training import InitSpec, TrainConfig, fit


def _env_name(flag: str) -> str:
    return "GRAPHHMM_" + flag.lstrip("-").upper().replace("-", "_")


def _add(parser, flag, *, required=False, type=str, default=None, help="",
         choices=None, flag_only=False, dest=None):
    """add_argument with an environment-variable fallback for the default."""
    env_key = _env_name(flag)
    raw = os.environ.get(env_key)
    extra = {} if dest is None else {"dest": dest}
    if flag_only:
        if raw is not None:
            default = raw.strip().lower() in {"1", "true", "yes"}
        parser.add_argument(flag, action="store_true", default=bool(default),
                            help=f"{help} [env: {env_key}]", **extra)
        return
    if raw is not None:
        try:
            default = type(raw)
        except (TypeError, ValueError):
            print(f"error: environment variable {env_key}={raw!r} is not a valid "
                  f"value for {flag}", file=sys.stderr)
            raise SystemExit(2)
        required = False
    shown = "" if default is None else f" (default: {default})"
    parser.add_argument(flag, required=required, type=type, default=default,
                        choices=choices, help=f"{help}{shown} [env: {env_key}]", **extra)


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cmd_train(args) -> int:
    dataset = io.load_dataset(args.data)
    graph = None
    if args.graph is not None:
        graph = io.load_graph(args.graph, normalize=args.normalize_graph)
    stats = None
    if args.standardize:
        stats = io.standardization_stats(dataset)
        dataset = io.apply_standardization(dataset, stats)
    config = TrainConfig(lam=args.lam, outer_iters=args.outer_iters,
                         inner_iters=args.inner_iters, learning_rate=args.lr,
                         rng_seed=args.seed)
    init = InitSpec(num_components=args.components, num_states=args.states)
    result = fit(dataset, graph, config, init)
    metadata = {
        "mode": result.mode,
        "lambda": float(args.lam),
        "seed": int(args.seed),
        "outer_iters": int(args.outer_iters),
        "inner_iters": int(args.inner_iters),
        "learning_rate": float(args.lr),
        "objective_trace": [float(v) for v in result.objectives],
        "standardization": stats,
    }
    io.save_model(result.model, args.out, metadata)
    log_path = args.log_out if args.log_out else args.out + ".train.csv"
    _write_csv(log_path, ["iteration", "objective"],
               [(i, io.format_float(v)) for i, v in enumerate(result.objectives)])
    for msg in result.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"wrote {args.out} ({result.mode}, {len(result.objectives) - 1} iterations, "
          f"final objective {result.objectives[-1]:.6f}); log: {log_path}")
    return 0


def _cmd_score(args) -> int:
    model, metadata = io.load_model(args.model)
    dataset = io.load_dataset(args.data)
    if metadata.get("standardization"):
        dataset = io.apply_standardization(dataset, metadata["standardization"])
    scored = score_dataset(model, dataset)
    if args.scores_out:
        _write_csv(args.scores_out, ["node", "length", "avg_log_likelihood", "label"],
                   [(s.node, s.length, io.format_float(s.avg_log_likelihood),
                     s.label if s.label is not None else "") for s in scored])
    labeled = [(s.avg_log_likelihood, s.label) for s in scored if s.label is not None]
    summary = {
        "num_sequences": len(scored),
        "mean_avg_log_likelihood": float(np.mean([s.avg_log_likelihood for s in scored])),
    }
    for label in ("normal", "anomalous"):
        values = [v for v, lab in labeled if lab == label]
        if values:
            summary[f"num_{label}"] = len(values)
            summary[f"mean_avg_log_likelihood_{label}"] = float(np.mean(values))
    have_both = (0 < sum(1 for _, lab in labeled if lab == "anomalous") < len(labeled))
    if labeled and not have_both:
        print("warning: labels present but only one class; skipping ROC/AUC",
              file=sys.stderr)
    if have_both:
        curve, auc = roc_auc(labeled)
        summary["auc"] = auc
        if args.roc_out:
            _write_csv(args.roc_out, ["fpr", "tpr"],
                       [(io.format_float(f), io.format_float(t)) for f, t in curve])
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(io.canonical_dumps(summary))
            fh.write("\n")
    line = f"scored {summary['num_sequences']} sequences, mean avg ll " \
           f"{summary['mean_avg_log_likelihood']:.6f}"
    if "auc" in summary:
        line += f", auc {summary['auc']:.6f}"
    print(line)
    return 0


def _cmd_forecast(args) -> int:
    model, metadata = io.load_model(args.model)
    prefix_ds = io.load_dataset(args.prefix_file)
    if metadata.get("standardization"):
        prefix_ds = io.apply_standardization(prefix_ds, metadata["standardization"])
    item = prefix_ds.items[0]
    node = args.node if args.node is not None else item.node
    mean = forecast_mean(model, item.seq, node, args.horizon, args.samples, args.seed)
    header = ["step"] + [f"x{d + 1}" for d in range(mean.shape[1])]
    _write_csv(args.out, header,
               [[t + 1] + [io.format_float(v) for v in mean[t]] for t in range(mean.shape[0])])
    print(f"wrote {args.out} ({mean.shape[0]} steps x {mean.shape[1]} features, "
          f"node {node}, {args.samples} samples)")
    return 0


def _cmd_cluster(args) -> int:
    model, _ = io.load_model(args.model)
    doc = {
        "assignments": [int(c) for c in cluster_assignments(model)],
        "relative_sparsity": relative_sparsity(model),
        "thresholded_sparsity": {
            "threshold": 1e-6,
            "value": relative_sparsity(model, threshold=1e-6),
        },
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(io.canonical_dumps(doc))
        fh.write("\n")
    print(f"wrote {args.out} (sparsity {doc['relative_sparsity']:.4f})")
    return 0


def _cmd_generate(args) -> int:
    model, _ = io.load_model(args.spec)
    if args.num_seqs < 1 or args.length < 1:
        raise ValueError("--num-seqs and --length must be >= 1")
    rng = np.random.default_rng(args.seed)
    items = []
    for node in range(1, model.num_nodes + 1):
        for _ in range(args.num_seqs):
            seq = sample_from_node(model, node, args.length, rng)
            items.append((node, seq, args.label))
    io.save_dataset(SequenceDataset(items), args.out)
    print(f"wrote {args.out} ({len(items)} sequences: {args.num_seqs} per node "
          f"x {model.num_nodes} nodes, length {args.length})")
    return 0


def _cmd_standardize(args) -> int:
    dataset = io.load_dataset(args.data)
    if args.stats_in:
        stats = io.load_stats(args.stats_in)
    else:
        stats = io.standardization_stats(dataset, per_node=args.per_node)
    out_ds = io.apply_standardization(dataset, stats)
    io.save_dataset(out_ds, args.out)
    if args.stats_out:
        io.save_stats(stats, args.stats_out)
    print(f"wrote {args.out}" + (f"; stats: {args.stats_out}" if args.stats_out else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphhmm",
        description="Sparse mixtures of Gaussian HMMs for sequences from "
                    "graph-connected nodes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a mixture to a dataset")
    _add(p, "--data", required=True, help="training dataset (JSON Lines)")
    _add(p, "--graph", help="affinity graph JSON; omit to train without the graph term")
    _add(p, "--components", required=True, type=int, help="number of shared HMM components")
    _add(p, "--states", required=True, type=int, help="states per component")
    _add(p, "--lambda", type=float, default=0.0, dest="lam",
         help="graph regularization strength")
    _add(p, "--outer-iters", type=int, default=100, help="max EM iterations")
    _add(p, "--inner-iters", type=int, default=100, help="score-update iterations per M-step")
    _add(p, "--lr", type=float, default=1e-3, help="score-update learning rate")
    _add(p, "--seed", type=int, default=0, help="training seed")
    _add(p, "--standardize", flag_only=True,
         help="standardize features before training and store the stats in the model")
    _add(p, "--normalize-graph", flag_only=True,
         help="rescale graph weights so the maximum is 1")
    _add(p, "--out", required=True, help="output model JSON")
    _add(p, "--log-out", help="training log CSV (default: <out>.train.csv)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score sequences under a trained model")
    _add(p, "--model", required=True, help="model JSON")
    _add(p, "--data", required=True, help="dataset to score (JSON Lines)")
    _add(p, "--scores-out", help="per-sequence scores CSV")
    _add(p, "--roc-out", help="ROC curve CSV (needs both labels present)")
    _add(p, "--json-out", help="summary metrics JSON")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("forecast", help="posterior-predictive mean after a prefix")
    _add(p, "--model", required=True, help="model JSON")
    _add(p, "--prefix-file", required=True,
         help="JSON Lines file whose first record is the prefix")
    _add(p, "--node", type=int, help="node id (default: the prefix record's node)")
    _add(p, "--horizon", type=int, default=10, help="steps to forecast")
    _add(p, "--samples", type=int, default=100, help="Monte Carlo samples")
    _add(p, "--seed", type=int, default=0, help="sampling seed")
    _add(p, "--out", required=True, help="output CSV (step, features)")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("cluster", help="dominant component per node")
    _add(p, "--model", required=True, help="model JSON")
    _add(p, "--out", required=True, help="output JSON")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("generate", help="sample a dataset from a model")
    _add(p, "--spec", required=True, help="generating model JSON")
    _add(p, "--num-seqs", required=True, type=int, help="sequences per node")
    _add(p, "--length", required=True, type=int, help="timesteps per sequence")
    _add(p, "--seed", type=int, default=0, help="sampling seed")
    _add(p, "--label", choices=["normal", "anomalous"],
         help="label to attach to every generated sequence")
    _add(p, "--out", required=True, help="output dataset (JSON Lines)")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("standardize", help="shift/scale features to zero mean, unit spread")
    _add(p, "--data", required=True, help="input dataset (JSON Lines)")
    _add(p, "--out", required=True, help="output dataset (JSON Lines)")
    _add(p, "--stats-out", help="write the stats used to this JSON file")
    _add(p, "--stats-in", help="apply stats from this JSON file instead of computing them")
    _add(p, "--per-node", flag_only=True, help="standardize each node separately")
    p.set_defaults(func=_cmd_standardize)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
