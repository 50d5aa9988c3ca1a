"""Command-line entry point.

Commands: train, eval, strip, bench, sweep, export-embeddings,
export-graph, gen-data. Exit codes: 0 success, 2 invalid configuration,
3 numeric divergence, 4 I/O or checkpoint problems.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import RunConfig, parse_synthetic_arg
from .errors import (CheckpointError, ConfigError, ContractError, DataError,
                     NumericError, PTGNNError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _load_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(train__seed=args.seed)
    data_arg = getattr(args, "data", None)
    if data_arg and data_arg.startswith("synthetic"):
        cfg = cfg.with_overrides(**parse_synthetic_arg(data_arg))
    return cfg


def _flags(args):
    raw = getattr(args, "ablation", None)
    if not raw:
        return ()
    flags = tuple(f.strip() for f in raw.split(",") if f.strip())
    from .config import ABLATION_FLAGS
    unknown = set(flags) - set(ABLATION_FLAGS)
    if unknown:
        raise ConfigError(f"unknown ablation flags: {sorted(unknown)}")
    return flags


def _load_recordings(args, cfg):
    from .data import generate_synthetic, load_dataset
    data_arg = getattr(args, "data", None) or "synthetic"
    if data_arg.startswith("synthetic"):
        return generate_synthetic(cfg.synthetic_spec())
    return load_dataset(data_arg)


def _out_dir(args):
    out = getattr(args, "out", None) or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_train(args):
    from .checkpoint import checkpoint_from_model, save_checkpoint
    from .data import make_windows
    from .evaluation import MetricsReport, _fold_metrics, make_folds
    from .training import train_model

    cfg = _load_config(args)
    flags = _flags(args)
    eff = cfg.apply_ablations(flags)
    recordings = _load_recordings(args, eff)
    out = _out_dir(args)

    window_sets = [make_windows(r, eff["data.window"], eff["data.stride"],
                                eff["data.segments"], eff["data.clip_seconds"])
                   for r in recordings]
    plan = make_folds([w.subject_id for w in window_sets], eff["eval.folds"],
                      eff["train.seed"])
    by = {w.subject_id: w for w in window_sets}
    train_sets = [by[s] for s in plan.train_subjects(0)]
    test_sets = [by[s] for s in plan.test_subjects(0)]

    log_lines = []
    ckpt_path = os.path.join(out, "checkpoint.ptgc")

    def log(line):
        log_lines.append(line)

    try:
        model, history = train_model(eff, train_sets, seed=eff["train.seed"], log=log)
    except NumericError:
        with open(os.path.join(out, "metrics.log"), "w") as fh:
            fh.write("\n".join(log_lines) + "\n")
        raise
    save_checkpoint(ckpt_path, checkpoint_from_model(model, eff))
    with open(os.path.join(out, "metrics.log"), "w") as fh:
        fh.write("\n".join(log_lines) + "\n")

    mode = "shuffled" if "shuffled_baseline" in flags else "paired"
    m = _fold_metrics(model, test_sets, mode, eff["train.seed"])
    report = MetricsReport(
        top1=m["top1"], top3=m["top3"], macro_f1=m["macro_f1"],
        cosine=m["cosine"], align_mse=m["align_mse"],
        confusion=m["confusion"].tolist(),
        per_fold=[{k: m[k] for k in ("top1", "top3", "macro_f1", "cosine", "align_mse")}],
        alignment_mode=mode, ablations=sorted(flags))
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    print(f"checkpoint: {ckpt_path}")
    print(f"held-out fold 0: top1={report.top1:.2f} top3={report.top3:.2f} "
          f"macro_f1={report.macro_f1:.2f} cosine={report.cosine:.3f}")
    return EXIT_OK


def cmd_eval(args):
    from .checkpoint import load_checkpoint
    from .data import make_windows
    from .evaluation import (MetricsReport, _fold_metrics, run_cv)
    from .model import MMPTGNN

    cfg = _load_config(args)
    flags = _flags(args)
    recordings = _load_recordings(args, cfg)
    out = _out_dir(args)

    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        eff = RunConfig.from_flat(ckpt.config).apply_ablations(flags)
        if not args.data or args.data.startswith("synthetic"):
            recordings = _load_recordings(args, eff)
        model = MMPTGNN(eff, seed=eff["train.seed"])
        model.load_state(ckpt)
        window_sets = [make_windows(r, eff["data.window"], eff["data.stride"],
                                    eff["data.segments"], eff["data.clip_seconds"])
                       for r in recordings]
        mode = "shuffled" if "shuffled_baseline" in flags else "paired"
        m = _fold_metrics(model, window_sets, mode, eff["train.seed"])
        report = MetricsReport(
            top1=m["top1"], top3=m["top3"], macro_f1=m["macro_f1"],
            cosine=m["cosine"], align_mse=m["align_mse"],
            confusion=m["confusion"].tolist(),
            per_fold=[{k: m[k] for k in ("top1", "top3", "macro_f1", "cosine", "align_mse")}],
            alignment_mode=mode, ablations=sorted(flags))
    else:
        report = run_cv(recordings, cfg, flags)

    with open(os.path.join(out, "metrics.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    _write_confusion_csv(os.path.join(out, "confusion.csv"), report.confusion)
    print(f"top1={report.top1:.2f} top3={report.top3:.2f} "
          f"macro_f1={report.macro_f1:.2f} cosine={report.cosine:.3f} "
          f"align_mse={report.align_mse:.4f}")
    return EXIT_OK


def _write_confusion_csv(path, confusion):
    with open(path, "w") as fh:
        fh.write(",".join(f"pred_{i}" for i in range(len(confusion))) + "\n")
        for row in confusion:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def cmd_strip(args):
    from .checkpoint import load_checkpoint, save_checkpoint, strip_checkpoint

    cp = load_checkpoint(args.checkpoint)
    stripped, was_stripped = strip_checkpoint(cp)
    if was_stripped:
        print("input is already video-only; writing unchanged copy")
    save_checkpoint(args.out_path, stripped)
    full_b, strip_b = cp.payload_bytes(), stripped.payload_bytes()
    print(f"full: {cp.param_scalars()} params, {full_b} payload bytes")
    print(f"stripped: {stripped.param_scalars()} params, {strip_b} payload bytes")
    return EXIT_OK


def cmd_bench(args):
    from .bench import bench_latency, format_report
    from .checkpoint import load_checkpoint

    cp = load_checkpoint(args.checkpoint)
    report = bench_latency(cp, n_samples=args.n_samples, warmup=args.warmup,
                           seed=args.seed or 0)
    text = format_report(report)
    if args.out:
        out = _out_dir(args)
        with open(os.path.join(out, "bench.json"), "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_sweep(args):
    from .evaluation import sweep, sweep_csv

    cfg = _load_config(args)
    flags = _flags(args)
    recordings = _load_recordings(args, cfg)
    out = _out_dir(args)
    windows = [int(w) for w in args.windows.split(",")]
    kernels = [int(k) for k in args.kernels.split(",")]
    for k in kernels:
        if k < 1 or k % 2 == 0:
            raise ConfigError(f"difference kernel sizes must be odd and >= 1, got {k}")
    rows = sweep(recordings, cfg, windows, [(k - 1) // 2 for k in kernels], flags)
    for row, k in zip(rows, [k for _ in windows for k in kernels]):
        row["kernel"] = k  # report the full window size 2k+1, as configured
    text = sweep_csv(rows)
    path = os.path.join(out, "sweep.csv")
    with open(path, "w") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_export_embeddings(args):
    from .checkpoint import load_checkpoint
    from .data import make_windows
    from .evaluation import evaluate_windows
    from .model import MMPTGNN

    ckpt = load_checkpoint(args.checkpoint)
    eff = RunConfig.from_flat(ckpt.config)
    recordings = _load_recordings(args, eff)
    model = MMPTGNN(eff, seed=eff["train.seed"])
    model.load_state(ckpt)
    window_sets = [make_windows(r, eff["data.window"], eff["data.stride"],
                                eff["data.segments"], eff["data.clip_seconds"])
                   for r in recordings]
    _, labels, z_v, z_p, subjects = evaluate_windows(model, window_sets)
    out = _out_dir(args)
    path = os.path.join(out, "embeddings.csv")
    d = z_p.shape[1]
    header = (["id", "label"] + [f"zp_{i}" for i in range(d)]
              + [f"zv_{i}" for i in range(d)])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(labels)):
            row = [f"{subjects[i]}_{i}", str(int(labels[i]))]
            row += [f"{v:.9g}" for v in z_p[i]]
            row += [f"{v:.9g}" for v in z_v[i]]
            fh.write(",".join(row) + "\n")
    print(f"wrote {len(labels)} embedding rows to {path}")
    return EXIT_OK


def cmd_export_graph(args):
    from .checkpoint import load_checkpoint
    from .model import MMPTGNN

    ckpt = load_checkpoint(args.checkpoint)
    eff = RunConfig.from_flat(ckpt.config)
    model = MMPTGNN(eff, seed=eff["train.seed"])
    model.load_state(ckpt)
    out = _out_dir(args)
    for modality, gc in model.graphs.items():
        a = gc.adj.effective().data
        path = os.path.join(out, f"adjacency_{modality}.csv")
        np.savetxt(path, a, fmt="%.9g", delimiter=",")
        print(f"{modality}: {a.shape[0]}x{a.shape[1]} adjacency -> {path}")
    return EXIT_OK


def cmd_gen_data(args):
    from .data import generate_synthetic, save_recording

    cfg = _load_config(args)
    out = _out_dir(args)
    recordings = generate_synthetic(cfg.synthetic_spec())
    for rec in recordings:
        save_recording(rec, out)
    print(f"wrote {len(recordings)} subject recordings under {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ptgnn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, config=True, out=True, seed=True, ablation=True):
        if config:
            sp.add_argument("--config", help="run config file (key = value lines)")
        if seed:
            sp.add_argument("--seed", type=int, help="override train.seed")
        if out:
            sp.add_argument("--out", help="output directory (default: cwd)")
        if ablation:
            sp.add_argument("--ablation", help="comma-separated ablation flags")
        if data:
            sp.add_argument("--data", help="recording dir or synthetic:k=v,...")

    sp = sub.add_parser("train", help="train a model, write checkpoint + metrics")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate (cross-validation or a checkpoint)")
    common(sp)
    sp.add_argument("--checkpoint", help="evaluate this checkpoint instead of running CV")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("strip", help="remove sensor branches from a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("out_path")
    sp.set_defaults(func=cmd_strip)

    sp = sub.add_parser("bench", help="batch-1 video-path latency report")
    sp.add_argument("checkpoint")
    sp.add_argument("--n-samples", type=int, default=1000)
    sp.add_argument("--warmup", type=int, default=50)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("sweep", help="window x difference-kernel grid of CV runs")
    common(sp)
    sp.add_argument("--windows", required=True, help="comma list, e.g. 150,300")
    sp.add_argument("--kernels", required=True,
                    help="comma list of odd difference window sizes, e.g. 3,5")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("export-embeddings", help="z_p/z_v rows for external analysis")
    common(sp, config=False, seed=False, ablation=False)
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(func=cmd_export_embeddings)

    sp = sub.add_parser("export-graph", help="learned adjacency matrices as CSV")
    common(sp, data=False, config=False, seed=False, ablation=False)
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(func=cmd_export_graph)

    sp = sub.add_parser("gen-data", help="write synthetic recordings to disk")
    common(sp, data=True, ablation=False)
    sp.set_defaults(func=cmd_gen_data)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CheckpointError, DataError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except PTGNNError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
