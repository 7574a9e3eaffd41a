"""Command-line entry point: ``boss {train,synth,synth-ensemble,eval,reduce,curves}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from boss.errors import BossError, ConfigError
from boss.harness import (ExperimentConfig, emit_curves, get_classifier, load_dataset,
                          read_report, run_experiment, write_curve)
from boss.models import save_model
from boss.reduction import (brute_force_clique, check_feasible, read_dimacs, reduce,
                            witness_to_x)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_THRESHOLD = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}

log = logging.getLogger("boss")


def _labels(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated labels, got {text!r}") from exc


def _common(p):
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--dry-run", action="store_true", help="validate the config and exit")


def _synth_flags(p):
    p.add_argument("--preset", choices=["targeted", "confidence", "boundary", "uniform"])
    p.add_argument("--target", type=int)
    p.add_argument("--cd", type=float)
    p.add_argument("--boundary-labels", type=_labels)
    p.add_argument("--delta-c", type=float)
    p.add_argument("--delta-s", type=float)
    p.add_argument("--max-iters", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="boss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier and write its model file")
    _common(p)

    p = sub.add_parser("synth", help="run one preset over a batch of samples")
    _common(p)
    _synth_flags(p)

    p = sub.add_parser("synth-ensemble", help="synthesize against several classifiers at once")
    _common(p)
    _synth_flags(p)
    p.add_argument("--models", nargs="+", help="classifier model files (default: config)")
    p.add_argument("--targets", help="comma-separated target per model, or 'distinct'")

    p = sub.add_parser("eval", help="check a report CSV against thresholds")
    p.add_argument("report", type=Path)
    p.add_argument("--min-alpha", type=float)
    p.add_argument("--min-ssim", type=float)
    p.add_argument("--max-js", type=float)
    p.add_argument("--min-ca", type=float)

    p = sub.add_parser("reduce", help="build the BOSS instance for a DIMACS graph and clique size")
    p.add_argument("graph", type=Path)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("curves", help="SSIM CDF and JS CCDF from report CSVs")
    p.add_argument("reports", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=True)
    return parser


def overrides_from(args):
    """Flag values that were actually given, shaped like the config file."""
    o = {}
    for flag, key in (("seed", "seed"), ("jobs", "jobs"), ("delta_c", "delta_c"),
                      ("delta_s", "delta_s"), ("max_iters", "max_iters")):
        if getattr(args, flag, None) is not None:
            o[key] = getattr(args, flag)
    if getattr(args, "out", None) is not None:
        o["out"] = str(args.out)
    preset = {}
    if getattr(args, "preset", None):
        preset["variant"] = args.preset
    if getattr(args, "target", None) is not None:
        preset["t"] = args.target
    if getattr(args, "cd", None) is not None:
        preset["c_d"] = args.cd
    if getattr(args, "boundary_labels", None) is not None:
        preset["B"] = args.boundary_labels
    if preset:
        o["preset"] = preset
    ens = {}
    if getattr(args, "models", None):
        ens["classifiers"] = args.models
    if getattr(args, "targets", None):
        ens["targets"] = args.targets if args.targets == "distinct" else _labels(args.targets)
    if ens:
        o["ensemble"] = ens
    return o


def _config(args):
    overrides = overrides_from(args)
    file_cfg = None
    if args.config is not None:
        try:
            file_cfg = json.loads(args.config.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    # a new variant on the command line replaces the file's preset wholesale
    if "variant" in overrides.get("preset", {}) and file_cfg:
        file_cfg = {k: v for k, v in file_cfg.items() if k != "preset"}
    return ExperimentConfig.resolve(file_cfg, overrides)


def cmd_train(args):
    cfg = _config(args)
    if args.dry_run:
        return EXIT_OK
    data = load_dataset(cfg)
    # for training, --seed picks the weight initialization and batch order
    clf = get_classifier(cfg, data, seed=args.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    save_model(clf, cfg.out / "classifier.json")
    print(f"train accuracy {clf.train_accuracy:.4f} -> {cfg.out / 'classifier.json'}")
    return EXIT_OK


def _run(cfg, dry_run):
    for name, report in run_experiment(cfg, dry_run=dry_run).items():
        print(f"{name}: {report.summary()}")
    return EXIT_OK


def cmd_synth(args):
    cfg = _config(args)
    if cfg["ensemble"] is not None:
        raise ConfigError("config has an ensemble section; use synth-ensemble")
    return _run(cfg, args.dry_run)


def cmd_synth_ensemble(args):
    cfg = _config(args)
    if cfg["ensemble"] is None or not cfg["ensemble"].get("classifiers"):
        raise ConfigError("synth-ensemble needs ensemble.classifiers (config) or --models")
    return _run(cfg, args.dry_run)


def cmd_eval(args):
    try:
        rows = read_report(args.report)
    except OSError as exc:
        raise ConfigError(f"cannot read report {args.report}: {exc}") from exc
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    success = np.array([r["success"] == "1" for r in rows])
    alpha = float(success.mean())
    ssim_ok = float(col("ssim")[success].mean()) if success.any() else float("nan")
    js = float(col("js").mean())
    labelled = [r for r in rows if r["true_label"] not in ("", "None")]
    ca = (float(np.mean([r["pred_label"] == r["true_label"] for r in labelled]))
          if labelled else float("nan"))
    print(f"alpha={alpha:.4f} ssim_of_successes={ssim_ok:.4f} js={js:.4f} ca={ca:.4f}")
    misses = []
    if args.min_alpha is not None and not alpha >= args.min_alpha:
        misses.append(f"alpha {alpha:.4f} < {args.min_alpha}")
    if args.min_ssim is not None and not ssim_ok >= args.min_ssim:
        misses.append(f"ssim {ssim_ok:.4f} < {args.min_ssim}")
    if args.max_js is not None and not js <= args.max_js:
        misses.append(f"js {js:.4f} > {args.max_js}")
    if args.min_ca is not None and not ca >= args.min_ca:
        misses.append(f"ca {ca:.4f} < {args.min_ca}")
    for m in misses:
        print(f"threshold miss: {m}")
    return EXIT_THRESHOLD if misses else EXIT_OK


def cmd_reduce(args):
    try:
        graph = read_dimacs(args.graph)
    except OSError as exc:
        raise ConfigError(f"cannot read graph {args.graph}: {exc}") from exc
    instance = reduce(graph, args.k)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        save_model(instance.classifier, args.out / "reduction.json")
    clique = brute_force_clique(graph, args.k)
    if clique is None:
        print(f"no {args.k}-clique; no witness")
        return EXIT_OK
    check = check_feasible(instance, witness_to_x(graph, clique, args.k))
    if not check.feasible:
        print("witness infeasible: " + "; ".join(check.violations))
        return EXIT_RUNTIME
    print(f"feasible witness found: vertices {sorted(v + 1 for v in clique)}")
    return EXIT_OK


def cmd_curves(args):
    ssim_vals, js_vals = [], []
    for path in args.reports:
        try:
            rows = read_report(path)
        except OSError as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from exc
        ssim_vals += [float(r["ssim"]) for r in rows]
        js_vals += [float(r["js"]) for r in rows]
    args.out.mkdir(parents=True, exist_ok=True)
    write_curve(args.out / "cdf_ssim.csv", emit_curves(ssim_vals))
    write_curve(args.out / "ccdf_js.csv", emit_curves(js_vals, complementary=True))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "synth": cmd_synth, "synth-ensemble": cmd_synth_ensemble,
            "eval": cmd_eval, "reduce": cmd_reduce, "curves": cmd_curves}


def main(argv=None):
    level = os.environ.get("BOSS_LOG", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BossError, ValueError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
