"""Batch experiments: config resolution, dataset/classifier setup, runs and artifacts."""

from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from boss.data import generate_blobs, ingest_idx, write_pgm
from boss.engine import Head, run_heads
from boss.errors import BossError, ConfigError
from boss.metrics import EvalRow, fmt, js_distance, one_hot_target, report_from_rows, similarity
from boss.models import build_generator, load_model, save_model, train_classifier
from boss.presets import AttackPreset, make_spec, pd_targeted, random_target

log = logging.getLogger(__name__)

DEFAULTS = {
    "dataset": {"format": "blobs", "classes": 10, "per_class": 100, "dim": 784,
                "image_shape": [28, 28], "noise": 0.1, "seed": 0},
    "classifier": {"path": None, "hidden": [256, 128], "epochs": 10, "lr": 1e-3, "seed": 0},
    "generator": {"Q": 100, "hidden": [128, 256], "seed": 0},
    "preset": {"variant": "targeted"},
    "ensemble": None,
    "delta_s": 0.3,
    "delta_c": 0.3,
    "lambda0": 0.001,
    "lr": 0.025,
    "max_iters": 3000,
    "inner_steps": 1,
    "batch_size": 20,
    "seed": 0,
    "jobs": 1,
    "out": "runs/latest",
}


class StageError(BossError):
    """Failure inside one named stage of an experiment."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, value in (over or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def resolve(cls, file_cfg=None, overrides=None):
        """Defaults, then the config file, then flag overrides (highest precedence)."""
        cfg = _merge(_merge(DEFAULTS, file_cfg), overrides)
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if int(cfg["batch_size"]) < 1:
            raise ConfigError("batch_size must be at least 1")
        ds = cfg["dataset"]
        if ds["format"] == "idx":
            for key in ("images", "labels"):
                if not ds.get(key) or not Path(ds[key]).exists():
                    raise ConfigError(f"dataset.{key} path {ds.get(key)!r} does not exist")
        elif ds["format"] != "blobs":
            raise ConfigError(f"unknown dataset format {ds['format']!r}")
        path = cfg["classifier"].get("path")
        if path and not Path(path).exists():
            raise ConfigError(f"classifier.path {path!r} does not exist")
        if cfg["ensemble"] is None:
            preset = dict(cfg["preset"])
            if preset.get("variant") == "targeted" and preset.get("t") is None:
                preset["t"] = 0  # placeholder: targets are drawn per sample
            AttackPreset.from_dict(preset)
        return cls(cfg)

    @classmethod
    def from_file(cls, path, overrides=None):
        try:
            file_cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.resolve(file_cfg, overrides)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def out(self):
        return Path(self.raw["out"])


def load_dataset(cfg):
    ds = cfg["dataset"]
    if ds["format"] == "idx":
        return ingest_idx(ds["images"], ds["labels"])
    shape = tuple(ds["image_shape"]) if ds.get("image_shape") else None
    return generate_blobs(ds["classes"], ds["per_class"], ds["dim"], seed=ds["seed"],
                          noise=ds["noise"], image_shape=shape)


def get_classifier(cfg, data, seed=None, path=None):
    c = cfg["classifier"]
    path = path or c.get("path")
    if path:
        return load_model(path)
    arch = [data.dim, *c["hidden"], data.num_classes]
    return train_classifier(data, arch, epochs=c["epochs"], lr=c["lr"],
                            seed=c["seed"] if seed is None else seed)


def get_generator(cfg, n):
    g = cfg["generator"]
    return build_generator(g["Q"], n, tuple(g["hidden"]), seed=g["seed"])


def select_samples(cfg, data, classifier):
    """Deterministic sample order; confidence runs keep only correctly classified points."""
    rng = np.random.default_rng(cfg["seed"])
    order = rng.permutation(len(data))
    needs_correct = cfg["ensemble"] is None and cfg["preset"].get("variant") == "confidence"
    picked = []
    for i in order:
        if needs_correct and classifier.label(data.x[i]) != data.labels[i]:
            continue
        picked.append(int(i))
        if len(picked) == cfg["batch_size"]:
            break
    return picked


def _shape_x(data, i):
    x = data.x[i]
    return x.reshape(data.image_shape) if data.image_shape else x


def build_jobs(cfg, data, classifiers):
    """One job per sample: (sample_id, index, x_d, heads, true_label)."""
    picked = select_samples(cfg, data, classifiers[0])
    target_rng = np.random.default_rng(cfg["seed"] + 1)
    jobs = []
    for sid, i in enumerate(picked):
        x_d = _shape_x(data, i)
        y = int(data.labels[i])
        if cfg["ensemble"] is not None:
            ens = cfg["ensemble"]
            targets = ens.get("targets")
            if targets is None:
                t = random_target(y, classifiers[0].M, target_rng)
                targets = [t] * len(classifiers)
            elif targets == "distinct":
                t1 = random_target(y, classifiers[0].M, target_rng)
                rest = [m for m in range(classifiers[0].M) if m not in (y, t1)]
                targets = [t1] + [int(target_rng.choice(rest)) for _ in classifiers[1:]]
            dcs = ens.get("delta_c", [cfg["delta_c"]] * len(classifiers))
            heads = [Head(c, pd_targeted(int(t), c.M), float(dc), cfg["lambda0"])
                     for c, t, dc in zip(classifiers, targets, dcs)]
        else:
            preset = dict(cfg["preset"])
            if preset.get("variant") == "targeted" and preset.get("t") is None:
                preset["t"] = random_target(y, classifiers[0].M, target_rng)
            spec = make_spec(preset, x_d, classifiers[0], delta_s=cfg["delta_s"],
                             delta_c=cfg["delta_c"], lambda0=cfg["lambda0"])
            heads = [Head(classifiers[0], spec.p_d, spec.delta_c, spec.lambda0)]
        jobs.append((sid, i, x_d, heads, y))
    return jobs


def _run_job(args):
    sid, x_d, heads, generator, cfg = args
    return sid, run_heads(x_d, heads, generator, cfg["delta_s"], cfg["max_iters"],
                          cfg["inner_steps"], cfg["seed"] + sid, cfg["lr"])


def run_jobs(cfg, jobs, generator):
    payload = [(sid, x_d, heads, generator, cfg.raw) for sid, _, x_d, heads, _ in jobs]
    if cfg["jobs"] > 1 and len(payload) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            done = dict(pool.map(_run_job, payload))
    else:
        done = dict(map(_run_job, payload))
    return [done[sid] for sid, *_ in jobs]


def rows_for(jobs, results, image_shape, model_index=0):
    rows = []
    for (sid, _, x_d, heads, y), res in zip(jobs, results):
        head = heads[model_index]
        pmf = head.classifier.predict(res.x)
        pred = int(np.argmax(pmf))
        target = one_hot_target(head.p_d)
        rows.append(EvalRow(
            sample_id=sid, true_label=y, pred_label=pred, target_label=target,
            ssim=similarity(res.x, x_d, image_shape), js=js_distance(pmf, head.p_d),
            confidence=float(pmf[y]),
            success=bool(pred == target if target is not None else res.satisfied),
            iterations=res.iterations))
    return rows


def emit_curves(values, complementary=False):
    """Empirical CDF (or CCDF, P(V >= v)) rows ``(value, cum_fraction)``."""
    values = sorted(float(v) for v in values)
    if not values:
        raise ValueError("cannot build a curve from no values")
    n = len(values)
    if complementary:
        return [(v, (n - i) / n) for i, v in enumerate(values)]
    return [(v, (i + 1) / n) for i, v in enumerate(values)]


def write_curve(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "cum_fraction"])
        for v, f in rows:
            w.writerow([fmt(v), fmt(f)])


def read_report(path):
    """Per-sample rows of a report CSV (the trailing aggregate row is dropped)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["sample_id"] != "mean"]
    if not rows:
        raise ValueError(f"{path}: report has no sample rows")
    return rows


def write_artifacts(out, jobs, results, reports, image_shape):
    out.mkdir(parents=True, exist_ok=True)
    for (sid, _, x_d, _, _), res in zip(jobs, results):
        (out / "traces").mkdir(exist_ok=True)
        (out / "traces" / f"sample_{sid:04d}.csv").write_text(res.trace_csv())
        if image_shape is not None:
            (out / "images").mkdir(exist_ok=True)
            write_pgm(out / "images" / f"sample_{sid:04d}_x.pgm", np.reshape(res.x, image_shape))
            write_pgm(out / "images" / f"sample_{sid:04d}_xd.pgm", np.reshape(x_d, image_shape))
    for name, report in reports.items():
        (out / f"{name}.csv").write_text(report.to_csv())
        write_curve(out / f"{name}_cdf_ssim.csv", emit_curves([r.ssim for r in report.rows]))
        write_curve(out / f"{name}_ccdf_js.csv",
                    emit_curves([r.js for r in report.rows], complementary=True))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except BossError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise StageError(name, str(exc)) from exc


@dataclass
class Batch:
    data: object
    classifiers: list
    jobs: list
    results: list
    reports: dict


def run_batch(cfg):
    """Train or load the classifier(s), synthesize the batch, write every artifact."""
    out = cfg.out
    data = _stage("data", load_dataset, cfg)
    log.info("dataset: %s (%d samples, dim %d)", data.source, len(data), data.dim)
    if cfg["ensemble"] is not None:
        members = cfg["ensemble"]["classifiers"]
        classifiers = [
            _stage("classifier", get_classifier, cfg, data,
                   **({"path": m} if isinstance(m, str) else {"seed": int(m)}))
            for m in members]
    else:
        classifiers = [_stage("classifier", get_classifier, cfg, data)]
    out.mkdir(parents=True, exist_ok=True)
    for v, clf in enumerate(classifiers):
        log.info("classifier %d train accuracy %s", v, clf.train_accuracy)
        name = f"classifier_{v + 1}.json" if len(classifiers) > 1 else "classifier.json"
        save_model(clf, out / name)
    generator = _stage("generator", get_generator, cfg, data.dim)
    jobs = _stage("specs", build_jobs, cfg, data, classifiers)
    results = _stage("synthesis", run_jobs, cfg, jobs, generator)
    if len(classifiers) == 1:
        reports = {"report": report_from_rows(rows_for(jobs, results, data.image_shape))}
    else:
        reports = {f"report_model{v + 1}": report_from_rows(rows_for(jobs, results, data.image_shape, v))
                   for v in range(len(classifiers))}
    _stage("artifacts", write_artifacts, out, jobs, results, reports, data.image_shape)
    for name, report in reports.items():
        log.info("%s: %s", name, report.summary())
    return Batch(data, classifiers, jobs, results, reports)


def run_experiment(cfg, dry_run=False):
    """Run a configured batch and return ``{name: EvalReport}``.

    A single classifier yields one ``report`` entry; an ensemble yields one
    ``report_model{v}`` entry per member. A dry run only validates.
    """
    if dry_run:
        log.info("config ok; dry run writes nothing")
        return {}
    return run_batch(cfg).reports
