"""Command-line front end: fit, transform, sweep, table1.

Every command reads one JSON config (see :mod:`fairstack.config`) plus a few
overrides, and writes its artifacts into a fresh timestamped directory under
``out_dir`` — nothing is ever overwritten. All artifacts embed the config
hash and seed so a run can be traced back to its exact inputs.

Exit codes: 0 success, 1 runtime failure (training/IO), 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (ConfigError, ExperimentConfig, config_hash, forest_spec_for,
                     load_config, load_dataset, probe_spec_for, stack_spec_for,
                     train_config_for)
from .data import Dataset, DatasetError, standardize, train_val_test_split
from .downstream import cross_validate, train_probe
from .metrics import PredictionBatch, evaluate
from .model import ModelFormatError, SpecError, TrainedStack
from .training import DivergenceError, train_stack, write_log_csv

METRIC_COLUMNS = ("accuracy", "delta_dp", "delta_eo", "delta_eopp")
SWEEP_COLUMNS = ("beta", "seed", "variant") + ("status",) + METRIC_COLUMNS
VARIANTS = ("stacked", "vanilla")
TABLE1_VARIANTS = ("unfair", "lafr", "stacked")
TABLE1_MODELS = ("logreg", "forest")


def _run_dir(out_dir: str, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(out_dir) / f"{command}-{stamp}"
    path, n = base, 0
    while path.exists():
        n += 1
        path = Path(f"{base}-{n}")
    path.mkdir(parents=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _split_standardize(ds: Dataset, seed: int, val_frac: float):
    """Shared per-run protocol: seeded train/val split, z-scoring fit on the
    train rows only. Returns (standardized full ds, train subset, val subset)."""
    plan = train_val_test_split(ds.n, seed=seed, val_frac=val_frac)
    std = standardize(ds, plan.train)
    return std, std.subset(plan.train), std.subset(plan.val)


def _probe_report(stack: TrainedStack, train_ds: Dataset, val_ds: Dataset,
                  cfg: ExperimentConfig, seed: int):
    probe = train_probe(stack, train_ds.X, train_ds.y, probe_spec_for(cfg, seed))
    pred = probe.predict(val_ds.X)
    return evaluate(PredictionBatch(pred, val_ds.y, val_ds.s), eo_mode=cfg.eo_mode)


# ---------------------------------------------------------------------------
# fit


def cmd_fit(cfg: ExperimentConfig) -> int:
    seed = cfg.seeds[0]
    ds = load_dataset(cfg)
    std, train_ds, val_ds = _split_standardize(ds, seed, cfg.val_frac)
    spec = stack_spec_for(cfg, in_dim=ds.d, variant="stacked")
    tcfg = train_config_for(cfg, seed)

    t0 = time.perf_counter()
    stack, logs = train_stack(spec, train_ds, tcfg, val=val_ds)
    wall = time.perf_counter() - t0

    report = _probe_report(stack, train_ds, val_ds, cfg, seed)
    chash = config_hash(cfg)
    run = _run_dir(cfg.out_dir, "fit")
    model_path = run / "model.fstk"
    stack.save(model_path)
    log_paths = []
    for log in logs:
        p = run / f"train-level{log.level}.csv"
        write_log_csv(log, p, comment=f"config_hash={chash} seed={seed}")
        log_paths.append(str(p))

    record = {
        "command": "fit",
        "config_hash": chash,
        "config": cfg.to_dict(),
        "seed": seed,
        "beta": spec.beta,
        "criterion": cfg.criterion,
        "wall_time_s": wall,
        "decoder_inactive": spec.alpha == 0.0,
        "model_path": str(model_path),
        "log_paths": log_paths,
        "probe_report": report.to_json(),
        "dataset": ds.summary(),
        "n_train": train_ds.n,
        "n_val": val_ds.n,
    }
    _write_json(run / "run.json", record)
    print(f"fit: wrote {model_path} ({stack.n_levels} levels, out_dim={stack.out_dim})")
    print(f"fit: probe accuracy={report.accuracy:.4f} "
          f"delta_dp={_fmt(report.delta_dp)} (val n={val_ds.n})")
    print(f"fit: artifacts in {run}")
    return 0


def _fmt(x) -> str:
    if x is None:
        return "undefined"
    return f"{x:.4f}"


# ---------------------------------------------------------------------------
# transform


def _read_numeric_csv(path: Path) -> np.ndarray:
    """Float matrix from a CSV that may start with a non-numeric header row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        return np.zeros((0, 0))
    def numeric(row):
        try:
            [float(x) for x in row]
            return True
        except ValueError:
            return False
    if not numeric(rows[0]):
        rows = rows[1:]
    if not rows:
        return np.zeros((0, 0))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DatasetError(f"ragged CSV: row widths {sorted(widths)} in {path}")
    bad = next((r for r in rows if not numeric(r)), None)
    if bad is not None:
        raise DatasetError(f"non-numeric row in {path}: {bad[:5]}...")
    return np.array([[float(x) for x in r] for r in rows])


def cmd_transform(model_path: str, input_path: str, output_path: str) -> int:
    stack = TrainedStack.load(model_path)
    X = _read_numeric_csv(Path(input_path))
    header = [f"z_{i}" for i in range(stack.out_dim)]
    if X.size == 0:
        Z = np.zeros((0, stack.out_dim))
    else:
        if X.shape[1] != stack.in_dim:
            raise DatasetError(
                f"width mismatch: model expects {stack.in_dim} input columns, "
                f"{input_path} has {X.shape[1]}"
            )
        Z = stack.encode(X)
    with open(output_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in Z:
            writer.writerow([repr(float(v)) for v in row])
    print(f"transform: {Z.shape[0]} rows -> {output_path} ({stack.out_dim} columns)")
    return 0


# ---------------------------------------------------------------------------
# sweep


def _sweep_job(cfg: ExperimentConfig, beta: float, seed: int, variant: str) -> dict:
    """One independent training run: returns a sweep row dict."""
    row = {"beta": beta, "seed": seed, "variant": variant, "status": "ok",
           **{m: "" for m in METRIC_COLUMNS}}
    try:
        ds = load_dataset(cfg)
        _, train_ds, val_ds = _split_standardize(ds, seed, cfg.val_frac)
        spec = stack_spec_for(cfg, in_dim=ds.d, variant=variant, beta=beta)
        stack, _ = train_stack(spec, train_ds, train_config_for(cfg, seed), val=None)
        report = _probe_report(stack, train_ds, val_ds, cfg, seed)
        rj = report.to_json()
        for m in METRIC_COLUMNS:
            row[m] = rj[m]
    except Exception as exc:  # a failed run becomes a failed row, not a crash
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _baseline_job(cfg: ExperimentConfig, seed: int) -> dict:
    """Unfair reference: probe on raw standardized features (identity stack)."""
    row = {"seed": seed, "status": "ok", **{m: "" for m in METRIC_COLUMNS}}
    try:
        ds = load_dataset(cfg)
        _, train_ds, val_ds = _split_standardize(ds, seed, cfg.val_frac)
        identity = TrainedStack.identity(ds.d, provenance={"variant": "unfair"})
        report = _probe_report(identity, train_ds, val_ds, cfg, seed)
        rj = report.to_json()
        for m in METRIC_COLUMNS:
            row[m] = rj[m]
    except Exception as exc:
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _write_rows(path: Path, columns, rows, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])


def _mean_rows(rows: list[dict], key_cols: tuple) -> list[dict]:
    """Arithmetic means of the metric columns over ok-rows per key."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = tuple(row[c] for c in key_cols)
        groups.setdefault(key, []).append(row)
    means = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        members = groups[key]
        out = dict(zip(key_cols, key))
        out["n"] = len(members)
        for m in METRIC_COLUMNS:
            vals = [r[m] for r in members if r[m] not in ("", None)]
            out[m] = float(np.mean(vals)) if vals else ""
        means.append(out)
    return means


def cmd_sweep(cfg: ExperimentConfig, jobs: int = 1) -> int:
    if not cfg.betas:
        raise ConfigError("sweep.betas: must be non-empty for the sweep command")
    chash = config_hash(cfg)
    run = _run_dir(cfg.out_dir, "sweep")
    tasks = [(beta, seed, variant)
             for beta in cfg.betas for seed in cfg.seeds for variant in VARIANTS]

    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_job, *zip(*[(cfg, b, s, v) for b, s, v in tasks])))
            baseline = list(ex.map(_baseline_job, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        rows = [_sweep_job(cfg, b, s, v) for b, s, v in tasks]
        baseline = [_baseline_job(cfg, s) for s in cfg.seeds]
    wall = time.perf_counter() - t0

    comment = f"config_hash={chash}"
    _write_rows(run / "sweep.csv", SWEEP_COLUMNS, rows, comment)
    _write_rows(run / "baseline.csv", ("seed", "status") + METRIC_COLUMNS, baseline, comment)
    _write_rows(run / "sweep_means.csv", ("beta", "variant", "n") + METRIC_COLUMNS,
                _mean_rows(rows, ("beta", "variant")), comment)
    _write_rows(run / "baseline_means.csv", ("n",) + METRIC_COLUMNS,
                _mean_rows(baseline, ()), comment)

    failures = [r for r in rows + baseline if r["status"] != "ok"]
    _write_json(run / "run.json", {
        "command": "sweep", "config_hash": chash, "config": cfg.to_dict(),
        "wall_time_s": wall, "n_rows": len(rows), "n_failed": len(failures),
        "failures": [{k: r.get(k) for k in ("beta", "seed", "variant", "error")}
                     for r in failures],
    })
    print(f"sweep: {len(rows)} runs ({len(failures)} failed) in {wall:.1f}s -> {run}")
    for r in failures:
        print(f"sweep: FAILED beta={r.get('beta')} seed={r.get('seed')} "
              f"variant={r.get('variant')}: {r.get('error')}", file=sys.stderr)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# table1


def _cv_job(args):
    kind, stack, ds, k, seed, eo_mode, probe_spec, forest_spec = args
    return cross_validate(kind, stack, ds, k=k, seed=seed, eo_mode=eo_mode,
                          probe_spec=probe_spec, forest_spec=forest_spec)


def cmd_table1(cfg: ExperimentConfig, jobs: int = 1) -> int:
    seed = cfg.seeds[0]
    # The tabulated protocol pins the loss weights; note the pin in run.json.
    forced = {"alpha": 0.0, "beta": 1.0, "gamma": 1.0}
    ds = load_dataset(cfg)
    plan = train_val_test_split(ds.n, seed=seed, val_frac=cfg.val_frac)
    std = standardize(ds, plan.train)
    train_ds = std.subset(plan.train)

    def spec_for(variant):
        s = stack_spec_for(cfg, in_dim=ds.d, variant=variant)
        return replace(s, **forced)

    t0 = time.perf_counter()
    tcfg = train_config_for(cfg, seed)
    stacked, _ = train_stack(spec_for("stacked"), train_ds, tcfg)
    lafr, _ = train_stack(spec_for("vanilla"), train_ds, tcfg)
    encoders = {
        "unfair": TrainedStack.identity(ds.d, provenance={"variant": "unfair"}),
        "lafr": lafr,
        "stacked": stacked,
    }

    labels = [(kind, variant) for kind in TABLE1_MODELS for variant in TABLE1_VARIANTS]
    cv_args = [
        (kind, encoders[variant], std, cfg.cv_folds, seed, cfg.eo_mode,
         probe_spec_for(cfg, seed), forest_spec_for(cfg, seed))
        for kind, variant in labels
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_cv_job, cv_args))
    else:
        results = [_cv_job(a) for a in cv_args]
    wall = time.perf_counter() - t0

    cells: dict = {kind: {} for kind in TABLE1_MODELS}
    for (kind, variant), res in zip(labels, results):
        cells[kind][variant] = {
            "delta_dp_mean": res.mean["delta_dp"], "delta_dp_std": res.std["delta_dp"],
            "accuracy_mean": res.mean["accuracy"], "accuracy_std": res.std["accuracy"],
            "delta_eo_mean": res.mean["delta_eo"], "delta_eo_std": res.std["delta_eo"],
            "delta_eopp_mean": res.mean["delta_eopp"], "delta_eopp_std": res.std["delta_eopp"],
        }

    chash = config_hash(cfg)
    run = _run_dir(cfg.out_dir, "table1")
    _write_json(run / "table1.json", {
        "command": "table1", "config_hash": chash, "config": cfg.to_dict(),
        "dataset": ds.summary(), "loss_weights": forced, "k": cfg.cv_folds,
        "seed": seed, "std_kind": "sample (ddof=1)", "wall_time_s": wall,
        "cells": cells,
    })
    csv_rows = []
    for kind in TABLE1_MODELS:
        for variant in TABLE1_VARIANTS:
            c = cells[kind][variant]
            csv_rows.append({"model": kind, "variant": variant, **c})
    _write_rows(run / "table1.csv",
                ("model", "variant", "delta_dp_mean", "delta_dp_std",
                 "accuracy_mean", "accuracy_std"),
                [{k: ("" if v is None else v) for k, v in r.items()} for r in csv_rows],
                f"config_hash={chash} std=sample(ddof=1)")
    for kind in TABLE1_MODELS:
        parts = []
        for variant in TABLE1_VARIANTS:
            c = cells[kind][variant]
            dp = c["delta_dp_mean"]
            parts.append(f"{variant} dp={dp:.3f}±{c['delta_dp_std']:.3f}"
                         if dp is not None else f"{variant} dp=undefined")
        print(f"table1[{kind}]: " + "  ".join(parts))
    print(f"table1: artifacts in {run}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairstack",
        description="Train and evaluate fair representations of tabular data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="override: use this single seed")
        p.add_argument("--beta", type=float, default=None,
                       help="override: pin loss.beta and sweep.betas to this value")
        p.add_argument("--criterion", default=None, choices=("dp", "eo", "eopp"),
                       help="override the fairness criterion")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes where the command supports it")

    add_config_args(sub.add_parser("fit", help="train one stacked model"))
    t = sub.add_parser("transform", help="encode a CSV of raw feature rows")
    t.add_argument("--model", required=True, help="path to a saved .fstk model")
    t.add_argument("--input", required=True, help="CSV of numeric feature rows")
    t.add_argument("--output", required=True, help="where to write the encoded CSV")
    add_config_args(sub.add_parser("sweep", help="beta sweep over seeds and variants"))
    add_config_args(sub.add_parser("table1", help="cross-validated fairness table"))
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        if args.command == "transform":
            return cmd_transform(args.model, args.input, args.output)
        cfg = load_config(args.config, seed=args.seed, beta=args.beta,
                          criterion=args.criterion)
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, jobs=args.jobs)
        if args.command == "table1":
            return cmd_table1(cfg, jobs=args.jobs)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, DatasetError, ModelFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
