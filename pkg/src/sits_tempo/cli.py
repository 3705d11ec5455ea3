"""Command line entry point: ``sits-tempo {train,evaluate,grid,synth,report}``."""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, harness, plotting
from .data import NormalizationStats, SynthSpec, apply_normalizer, fit_normalizer, synth_generate, write_delimited
from .errors import ConfigurationError, SitsError
from .evaluation import evaluate
from .models import ModelConfig, build_model, count_parameters, load_model, save_model
from .models.config import VARIANTS
from .presets import load_config_file, lookup
from .training import default_training_config, train

SEED_ENV = "SITS_TEMPO_SEED"
DATASET_CHOICES = ("tiselac", "sits-tsi", "synth")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _dataset(name: str) -> str:
    return {"synth": "synthetic", "sits-tsi": "sits_tsi"}.get(name, name)


def _read_synth_file(path) -> SynthSpec:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh, source=path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return harness.synth_spec_from_mapping(parser["synth"] if parser.has_section("synth") else {})


def _synth_from_args(args):
    return _read_synth_file(args.synth_spec) if args.synth_spec else None


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _write_evaluation(report, out, title):
    paths = [_write(os.path.join(out, "evaluation.md"), report.to_markdown(title)),
             _write(os.path.join(out, "evaluation.csv"), report.to_csv()),
             _write(os.path.join(out, "confusion.csv"), report.confusion.to_csv())]
    paths.append(plotting.plot_confusion(report.confusion, os.path.join(out, "confusion.png"), title))
    return paths


def _stats_payload(stats: NormalizationStats) -> dict:
    return {"low": stats.low.tolist(), "high": stats.high.tolist(), "low_p": stats.low_p, "high_p": stats.high_p}


def _stats_from_payload(payload) -> NormalizationStats:
    return NormalizationStats(np.array(payload["low"]), np.array(payload["high"]), payload["low_p"],
                              payload["high_p"])


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    dataset = _dataset(args.dataset)
    if args.preset:
        p = lookup(args.preset)
        model_cfg, train_cfg = p.model, p.training
    elif args.config:
        model_cfg, train_cfg, _ = load_config_file(args.config)
    else:
        model_cfg = ModelConfig.default(args.model)
        train_cfg = default_training_config(args.model)
    if args.model and model_cfg.variant != args.model:
        raise ConfigurationError(f"--model {args.model} conflicts with configured variant {model_cfg.variant}")
    if args.epochs:
        train_cfg = train_cfg.with_(max_epochs=args.epochs)
    if args.batch_size:
        train_cfg = train_cfg.with_(batch_size=args.batch_size)
    train_cfg = train_cfg.with_(seed=seed)

    train_ds, val_ds, test_ds = harness.raw_splits(dataset, args.data_dir, _synth_from_args(args))
    stats = fit_normalizer(train_ds)
    train_ds, val_ds, test_ds = (apply_normalizer(d, stats) for d in (train_ds, val_ds, test_ds))
    model = build_model(model_cfg, train_ds.t, train_ds.c, train_ds.k, seed=seed)
    print(f"model {model_cfg.label()}  params={count_parameters(model)}  "
          f"train/val/test={train_ds.n}/{val_ds.n}/{test_ds.n}", flush=True)

    def progress(row):
        if not args.quiet:
            print(f"epoch {row['epoch']:4d}  loss {row['train_loss']:.4f}  acc {row['train_acc']:6.2f}  "
                  f"val_loss {row['val_loss']:.4f}  val_acc {row['val_acc']:6.2f}", flush=True)

    log = train(model, train_ds, val_ds if val_ds.n else None, train_cfg if val_ds.n
                else train_cfg.with_(early_stopping=None), progress=progress)
    report = evaluate(model, test_ds, train_time_seconds=log.total_time)

    os.makedirs(args.out, exist_ok=True)
    save_model(model, os.path.join(args.out, "model.npz"),
               extra={"normalizer": _stats_payload(stats), "dataset": dataset, "training": {
                   k: str(v) for k, v in train_cfg.to_mapping().items()}})
    log.to_csv(os.path.join(args.out, "train_log.csv"))
    plotting.plot_training_curves(log, os.path.join(args.out, "training_curves.png"), model_cfg.label())
    _write_evaluation(report, args.out, model_cfg.label())
    print(f"stopped: {log.stopped_reason}  best epoch {log.best_epoch}  time {log.total_time:.1f}s")
    print(f"test OA {report.overall_accuracy:.2f}  F1 {report.f1:.2f}  (macro {report.f1_macro:.2f})")
    return 0


def cmd_evaluate(args) -> int:
    model, extra = load_model(args.model_file)
    _, _, test_ds = harness.raw_splits(_dataset(args.dataset), args.data_dir, _synth_from_args(args))
    if "normalizer" in extra:
        stats = _stats_from_payload(extra["normalizer"])
    else:
        logging.getLogger(__name__).warning("model file carries no normalizer; refitting on the training split")
        stats = fit_normalizer(harness.raw_splits(_dataset(args.dataset), args.data_dir,
                                                  _synth_from_args(args))[0])
    report = evaluate(model, apply_normalizer(test_ds, stats), workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    _write_evaluation(report, args.out, model.config.label())
    print(report.to_markdown(model.config.label()))
    return 0


def cmd_grid(args) -> int:
    if bool(args.preset) == bool(args.spec):
        raise ConfigurationError("give exactly one of --preset or --spec")
    if args.preset:
        spec = harness.preset(args.preset, _dataset(args.dataset) if args.dataset else None)
    else:
        spec = harness.load_experiment_file(args.spec)
    changes = {"out_dir": args.out, "workers": args.workers}
    if args.data_dir:
        changes["data_dir"] = args.data_dir
    if args.seeds:
        changes["seeds"] = [int(s) for s in args.seeds.split(",")]
    elif os.environ.get(SEED_ENV):
        changes["seeds"] = [_default_seed()]
    for key, value in changes.items():
        setattr(spec, key, value)
    if args.epochs:
        spec.trials = [harness.Trial(t.model, t.training.with_(max_epochs=args.epochs), t.reference_oa)
                       for t in spec.trials]

    def progress(row):
        status = "ok" if row["status"] == "ok" else f"FAILED ({row['error']})"
        oa = "" if row.get("oa") is None else f"OA {row['oa']:.2f}"
        print(f"[{row['key']}] {row['config']} seed={row['seed']} {oa} {status}", flush=True)

    table = harness.run_experiment(spec, progress=progress)
    paths = harness.emit_report(table, args.out, ("markdown", "csv"), figures=not args.no_figures)
    print(table.to_markdown())
    print("wrote " + ", ".join(paths))
    return 0 if all(r["status"] == "ok" for r in table.rows) else 1


def cmd_synth(args) -> int:
    spec = _read_synth_file(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    ds = synth_generate(spec)
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    write_delimited(ds, args.out, {"synth_spec": spec.describe()})
    print(f"wrote {ds.n} samples (T={ds.t}, C={ds.c}, K={ds.k}) to {args.out}")
    return 0


def cmd_report(args) -> int:
    table = harness.load_results(args.in_dir)
    paths = harness.emit_report(table, args.in_dir, (args.format,), figures=not args.no_figures,
                                layout=args.layout)
    with open(paths[0], encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    print("wrote " + ", ".join(paths))
    return 0


# ------------------------------------------------------------------ parser

def _add_data_args(p, required=True):
    p.add_argument("--dataset", choices=DATASET_CHOICES, required=required)
    p.add_argument("--data-dir", help="directory (or file) holding the dataset; for synth, a file from `synth`")
    p.add_argument("--synth-spec", help="INI file with a [synth] section, used when --dataset synth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sits-tempo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and evaluate it on the test split")
    _add_data_args(p)
    p.add_argument("--model", choices=VARIANTS,
                   help="architecture; defaults apply unless --config or --preset is given")
    p.add_argument("--config", help="INI file with [model] and [training] sections")
    p.add_argument("--preset", help="committed preset such as temporal_cnn/tiselac")
    p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
    p.add_argument("--epochs", type=int, help="override max_epochs")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--quiet", action="store_true", help="no per-epoch lines")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved model on a test split")
    p.add_argument("--model-file", required=True)
    _add_data_args(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="run a study preset or an experiment file")
    p.add_argument("--preset", choices=harness.PRESETS)
    p.add_argument("--spec", help="experiment INI file")
    p.add_argument("--dataset", choices=DATASET_CHOICES, help="dataset for presets that take one")
    p.add_argument("--data-dir")
    p.add_argument("--seeds", help="comma-separated seeds (default: from the experiment file, or $%s)" % SEED_ENV)
    p.add_argument("--epochs", type=int, help="override max_epochs for every trial")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--spec", help="INI file with a [synth] section (default: the standard separable set)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="render results of a grid run")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--layout", choices=("auto", "appendix", "generic"), default="auto")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SitsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
