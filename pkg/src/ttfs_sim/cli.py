"""Command-line front end: train, convert, optimize, run.

Configuration is a flat key=value text file; command-line flags override
config keys.  Exit codes: 0 success, 1 user error (paths, config,
degenerate data), 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import codec, conversion, datasets, dnn, kopt, metrics, simulator
from .core import KernelParams, load_network, save_network, validate_network


class UserError(Exception):
    pass


def load_config(path) -> dict:
    if not os.path.exists(path):
        raise UserError(f"config file not found: {path}")
    cfg = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UserError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    return cfg


def _require_file(path, what):
    if path is None:
        raise UserError(f"missing {what}")
    if not os.path.exists(path):
        raise UserError(f"{what} not found: {path}")
    return path


def _load_dataset(images_path, labels_path):
    x = datasets.load_idx_images(_require_file(images_path, "image file"))
    y = datasets.load_idx_labels(_require_file(labels_path, "label file"))
    if len(x) != len(y):
        raise UserError(f"{images_path} and {labels_path} disagree on sample count")
    return x, y


def _setting(args, cfg, key, default=None, cast=str):
    value = getattr(args, key, None)
    if value is None:
        value = cfg.get(key, default)
    if value is None:
        return None
    return cast(value)


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    train_x, train_y = _load_dataset(
        _setting(args, cfg, "train_images"), _setting(args, cfg, "train_labels")
    )
    hidden = _setting(args, cfg, "hidden", "300")
    sizes = [train_x.shape[1]] + [int(h) for h in str(hidden).split(",") if h] + [
        int(train_y.max()) + 1
    ]
    tcfg = dnn.TrainConfig(
        learning_rate=_setting(args, cfg, "learning_rate", 0.1, float),
        epochs=_setting(args, cfg, "epochs", 10, int),
        batch_size=_setting(args, cfg, "batch_size", 32, int),
        rng_seed=_setting(args, cfg, "seed", 0, int),
    )
    time_window = _setting(args, cfg, "time_window", 80, int)
    net = dnn.build_mlp(sizes, time_window=time_window, seed=tcfg.rng_seed)
    net, history = dnn.train(net, train_x, train_y, tcfg)
    print(f"final training loss {history[-1]:.4f}")
    print(f"train accuracy {dnn.accuracy(net, train_x, train_y):.4f}")

    test_images = _setting(args, cfg, "test_images")
    if test_images:
        test_x, test_y = _load_dataset(test_images, _setting(args, cfg, "test_labels"))
        print(f"test accuracy {dnn.accuracy(net, test_x, test_y):.4f}")

    percentile = _setting(args, cfg, "percentile", None, float)
    try:
        stats = dnn.record_stats(net, train_x, percentile=percentile)
    except dnn.DegenerateStatsError as e:
        raise UserError(str(e))
    save_network(args.out, net, stats)
    print(f"wrote {args.out}")
    return 0


def cmd_convert(args) -> int:
    net, stats = load_network(_require_file(args.model, "model file"))
    if stats is None:
        raise UserError(f"{args.model} carries no activation statistics")
    try:
        normalized, norm_stats = conversion.normalize(net, stats)
    except ValueError as e:
        raise UserError(str(e))
    if args.tau is not None or args.td is not None:
        tau = args.tau if args.tau is not None else net.time_window / 4
        t_d = args.td if args.td is not None else 0.0
        for layer in normalized.layers:
            layer.kernel = KernelParams(tau=tau, t_d=t_d)
    problems = validate_network(normalized)
    if problems:
        raise UserError("normalized network invalid: " + "; ".join(problems))
    save_network(args.out, normalized, norm_stats)
    print(f"wrote {args.out}")
    return 0


def cmd_optimize(args) -> int:
    net, stats = load_network(_require_file(args.model, "model file"))
    if stats is None:
        raise UserError(f"{args.model} carries no activation statistics")
    try:
        net, rows = kopt.optimize(
            net, stats, lr=args.lr, iters=args.iters, seed=args.seed
        )
    except kopt.OptimizeDiverged as e:
        raise UserError(f"optimization diverged: {e}")
    save_network(args.out, net, stats)
    if args.loss_csv:
        kopt.write_loss_history(args.loss_csv, rows)
        print(f"wrote {args.loss_csv}")
    for i, layer in enumerate(net.layers):
        print(f"layer {i}: tau={layer.kernel.tau:.4f} t_d={layer.kernel.t_d:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    net, _ = load_network(_require_file(args.model, "model file"))
    x, y = _load_dataset(args.images, args.labels)
    if x.shape[1] != net.layers[0].n_in:
        raise UserError(
            f"dataset has {x.shape[1]} features, model expects {net.layers[0].n_in}"
        )
    if args.limit:
        x, y = x[: args.limit], y[: args.limit]
    if args.T:
        net.time_window = args.T

    if args.kernel_table:
        with open(args.kernel_table, "w") as f:
            f.write("layer,offset,value\n")
            for i, layer in enumerate(net.layers):
                for t, v in enumerate(codec.kernel_table(layer.kernel, net.time_window)):
                    f.write(f"{i},{t},{v!r}\n")
        print(f"wrote {args.kernel_table}")

    if args.coding == "rate":
        runs = [simulator.run_rate_baseline(net, xi, args.T or 500) for xi in x]
        correct = [r.predicted_label == yi for r, yi in zip(runs, y)]
        report = metrics.summarize(runs, correct)
        result_runs = runs
    else:
        mode = "early_firing" if args.schedule == "early-firing" else "baseline"
        schedule = simulator.build_schedule(net.num_layers, net.time_window, mode)
        results = [simulator.run_ttfs(net, xi, schedule, engine=args.engine) for xi in x]
        runs = [r.stats for r in results]
        correct = [r.stats.predicted_label == yi for r, yi in zip(results, y)]
        report = metrics.summarize(runs, correct)
        result_runs = runs
        if args.trace:
            simulator.write_trace(args.trace, results[0].spike_times)
            print(f"wrote {args.trace}")
        if args.curve:
            T = net.time_window
            step = max(1, T // 4)
            times = list(range(0, schedule.latency + 1, step))
            n_out = net.layers[-1].n_out
            with open(args.curve, "w") as f:
                f.write("time,accuracy\n")
                for j, t_cut in enumerate(times):
                    preds = [
                        simulator.decisions_over_time(r, n_out, [t_cut])[0]
                        for r in results
                    ]
                    acc = float(np.mean([p == yi for p, yi in zip(preds, y)]))
                    f.write(f"{t_cut},{acc!r}\n")
            print(f"wrote {args.curve}")

    print(metrics.format_report(report, title=f"{args.coding} run"))
    if args.report:
        with open(args.report, "w") as f:
            for r, ok in zip(result_runs, correct):
                f.write(
                    json.dumps(
                        {
                            "predicted": r.predicted_label,
                            "correct": bool(ok),
                            "spikes": r.total_spikes,
                            "latency": r.latency,
                            "energy_tn": r.energy_tn,
                            "energy_sn": r.energy_sn,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
            f.write(json.dumps(report.as_dict(), sort_keys=True) + "\n")
        print(f"wrote {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttfs-sim",
        description="ReLU-network to TTFS spiking network toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a ReLU MLP and record activation stats")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", default="model.ttfs")
    for key in ("train_images", "train_labels", "test_images", "test_labels", "hidden"):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--time-window", dest="time_window", type=int)
    p.add_argument("--percentile", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="normalize weights into [0, 1] activations")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="model-norm.ttfs")
    p.add_argument("--tau", type=float, help="initial kernel time constant")
    p.add_argument("--td", type=float, help="initial kernel delay")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("optimize", help="gradient-optimize the kernels")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="model-opt.ttfs")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss-csv", dest="loss_csv")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="simulate inference over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--schedule", choices=["baseline", "early-firing"], default="baseline")
    p.add_argument("--coding", choices=["ttfs", "rate"], default="ttfs")
    p.add_argument("--engine", choices=["event", "dense"], default="event")
    p.add_argument("--T", type=int, help="time window (ttfs) or total steps (rate)")
    p.add_argument("--limit", type=int, help="only the first N samples")
    p.add_argument("--trace", help="spike trace CSV for the first sample")
    p.add_argument("--curve", help="accuracy-vs-time CSV")
    p.add_argument("--report", help="JSON-lines report path")
    p.add_argument("--kernel-table", dest="kernel_table", help="kernel lookup table CSV")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UserError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # invariant violation or bug
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
