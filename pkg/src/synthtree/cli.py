"""Command-line entry point: ``synthtree train | predict | evaluate | export | augment-export | augment-import``.

Exit codes: 0 success, 2 invalid input or configuration, 1 runtime failure.
Every command writes its artifacts under ``--out DIR`` together with a
``manifest.txt`` recording inputs, hashes and settings.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import sklearn

from . import __version__
from .blackbox import ExternalTablePredictor, read_numeric_csv, write_numeric_csv
from .data import Task, file_sha256, read_manifest, write_manifest
from .evaluation import (coefficient_report, coefficient_table, score, write_coefficient_report,
                         write_rows_csv)
from .exceptions import StageError, UnsupportedFormat, ValidationError
from .pipeline import (Preprocessor, RunConfig, dumps, evaluate_protocol, fit_pipeline, load_model,
                       load_training_data, model_bundle, query_plan)
from .tree import SynthTreeModel

log = logging.getLogger("synthtree")

# RunConfig fields that map one-to-one onto scalar flags
_CONFIG_FLAGS = (
    "data", "target", "task", "method", "external_x", "external_yhat", "j_cells", "n_sim", "pruning",
    "folds", "lasso_folds", "seed", "n_trees", "gb_rounds", "gb_learning_rate", "gb_depth", "n_boot",
    "kmeans_restarts", "n_splits", "test_fraction",
)


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _add_config_flags(p: argparse.ArgumentParser, evaluate: bool = False) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with RunConfig fields; explicit flags override it")
    g.add_argument("--data", help="training CSV (header row required)")
    g.add_argument("--target", help="response column")
    g.add_argument("--task", choices=["regression", "classification"])
    g.add_argument("--method", choices=["synthtree", "mlm-epic"])
    g.add_argument("--blackbox", help="comma list from rf,gb,external (several = INT mode)")
    g.add_argument("--external-x", help="x table of imported external predictions")
    g.add_argument("--external-yhat", help="prediction column matching --external-x")
    g.add_argument("--j-cells", type=int, help="fixed number of cells (skips the grid search)")
    g.add_argument("--j-grid", help="comma list of candidate cell counts (default 16,32,64,128)")
    g.add_argument("--epic-grid", help="comma list of candidate EPIC counts")
    g.add_argument("--n-sim", type=int, help="augmented points per cell (default 100)")
    g.add_argument("--pruning", choices=["default", "ltrim", "ccprune", "compare"])
    g.add_argument("--folds", type=int, help="CV folds for right-sizing (default 10)")
    g.add_argument("--lasso-folds", type=int, help="CV folds for penalty selection (default 5)")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-trees", type=int, help="random forest size (default 100)")
    g.add_argument("--gb-rounds", type=int)
    g.add_argument("--gb-learning-rate", type=float)
    g.add_argument("--gb-depth", type=int)
    g.add_argument("--kmeans-restarts", type=int)
    g.add_argument("--n-boot", type=int, help="bootstrap resamples for coefficient intervals (default 200)")
    if evaluate:
        g.add_argument("--n-splits", type=int, help="number of seeded splits (default 5)")
        g.add_argument("--test-fraction", type=float, help="test share of each split (default 0.2)")
        g.add_argument("--no-baselines", action="store_true", help="skip the LR and CART rows")


def config_from_args(args, check_external: bool = True) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    for name in _CONFIG_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    if getattr(args, "blackbox", None):
        base["blackbox"] = tuple(b.strip() for b in args.blackbox.split(",") if b.strip())
    for name in ("j_grid", "epic_grid"):
        v = getattr(args, name, None)
        if v:
            try:
                base[name] = _int_list(v)
            except ValueError as exc:
                raise ValidationError(f"--{name.replace('_', '-')}: {exc}") from exc
    cfg = RunConfig.from_dict(base)
    if not cfg.data or not cfg.target:
        raise ValidationError("--data and --target are required")
    if not Path(cfg.data).is_file():
        raise ValidationError(f"data file not found: {cfg.data}")
    return cfg.validate(check_external)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_manifest(command: str, cfg: RunConfig | None = None) -> dict:
    m = {"command": command, "synthtree_version": __version__, "python": platform.python_version(),
         "numpy": np.__version__, "scikit_learn": sklearn.__version__}
    if cfg is not None:
        m.update({f"config.{k}": json.dumps(v) for k, v in cfg.to_dict().items()})
        if cfg.data:
            m["data_sha256"] = file_sha256(cfg.data)
        for name in ("external_x", "external_yhat"):
            path = getattr(cfg, name)
            if path and "external" in cfg.blackbox:
                m[f"{name}_sha256"] = file_sha256(path)
    return m


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    out = _out_dir(args)
    raw, ds = load_training_data(cfg.data, cfg.target, cfg.task)
    if raw.n_dropped:
        log.warning("dropped %d rows with a missing or unparseable target", raw.n_dropped)
    prep = Preprocessor.from_datasets(raw, ds, cfg.target)
    t0 = time.perf_counter()
    fit = fit_pipeline(ds.x, ds.y, cfg, dummy_blocks=ds.dummy_blocks(), column_names=ds.column_names)
    secs = time.perf_counter() - t0

    bundle = model_bundle(fit, prep, cfg)
    _write(out / "model.json", dumps(bundle))
    _write(out / "config.json", dumps(cfg.to_dict()))
    _write(out / "prune_report.txt", "\n".join(fit.report_lines) + "\n")
    header, rows = coefficient_table(fit.model)
    write_rows_csv(out / "coefficients.csv", header, rows)
    if cfg.n_boot > 0:
        try:
            report = coefficient_report(fit.model, ds.x, ds.y, n_boot=cfg.n_boot, seed=cfg.seed)
            write_coefficient_report(out / "coefficient_intervals.csv", report)
        except Exception as exc:
            raise StageError("coefficient-report", exc) from exc
    if isinstance(fit.model, SynthTreeModel):
        _write(out / "tree.dot", fit.model.to_dot())
    else:
        fit.model.write_report(out / "epic_report.csv")
    train_score = score(fit.task, ds.y, fit.predict(ds.x))
    summary = {"dataset": Path(cfg.data).name, "method": fit.method, "seed": cfg.seed, "n": ds.n,
               "p": ds.p, "n_dropped": raw.n_dropped, "j_cells": fit.j_cells, "regions": fit.n_regions,
               "train_metric": "auc" if fit.task is Task.CLASSIFICATION else "rmse",
               "train_score": train_score, "seconds": secs}
    _write(out / "train_report.json", dumps(summary))
    manifest = _base_manifest("train", cfg)
    manifest["model_sha256"] = file_sha256(out / "model.json")
    write_manifest(out / "manifest.txt", manifest)
    print(f"{fit.method}: {fit.n_regions} regions from {fit.j_cells} cells; "
          f"training {summary['train_metric']} = {train_score:.4f}; model written to {out / 'model.json'}")
    return 0


def cmd_predict(args) -> int:
    loaded = load_model(args.model)
    out = _out_dir(args)
    x = loaded.preprocessing.transform_file(args.data)
    pred = loaded.predict(x) if x.shape[0] else np.empty(0)
    write_numeric_csv(out / "predictions.csv", ["prediction"], pred)
    m = _base_manifest("predict")
    m.update({"model_sha256": file_sha256(args.model), "data_sha256": file_sha256(args.data), "rows": pred.size})
    write_manifest(out / "manifest.txt", m)
    print(f"{pred.size} predictions written to {out / 'predictions.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = config_from_args(args)
    out = _out_dir(args)
    _, ds = load_training_data(cfg.data, cfg.target, cfg.task)

    def progress(s, reports):
        print("split {}: ".format(s + 1) + ", ".join(f"{k} {r.test[-1]:.4f}" for k, r in reports.items()),
              flush=True)

    reports = evaluate_protocol(ds, cfg, baselines=not args.no_baselines, progress=progress)
    summary = {"dataset": Path(cfg.data).name, "seed": cfg.seed, "n_splits": cfg.n_splits,
               "test_fraction": cfg.test_fraction,
               "methods": {k: r.to_dict() for k, r in reports.items()}}
    _write(out / "evaluation.json", dumps(summary))
    rows = []
    for k, r in reports.items():
        for s in range(len(r.test)):
            regions = r.extras.get("regions", [""] * len(r.test))[s]
            rows.append([k, s + 1, r.extras["seed"][s], repr(r.train[s]), repr(r.test[s]), regions])
    write_rows_csv(out / "splits.csv", ["method", "split", "seed", "train", "test", "regions"], rows)
    write_manifest(out / "manifest.txt", _base_manifest("evaluate", cfg))
    for k, r in reports.items():
        line = f"{k:>16s}  {r.metric} mean {r.mean:.4f}  sd {r.sd:.4f}  gap {r.gap:+.4f}"
        if "regions" in r.extras:
            line += f"  leaves/regions mean {np.mean(r.extras['regions']):.1f}"
        print(line)
    return 0


EXPORT_FORMATS = ("dot", "json", "coeff-csv")


def cmd_export(args) -> int:
    if args.format not in EXPORT_FORMATS:
        raise UnsupportedFormat(f"format must be one of {EXPORT_FORMATS}, got {args.format!r}")
    loaded = load_model(args.model)
    out = _out_dir(args)
    if args.format == "json":
        target = out / "model.json"
        _write(target, dumps(loaded.bundle))
    elif args.format == "coeff-csv":
        target = out / "coefficients.csv"
        header, rows = coefficient_table(loaded.model)
        write_rows_csv(target, header, rows)
    else:
        if not isinstance(loaded.model, SynthTreeModel):
            raise UnsupportedFormat("DOT export is only available for SynthTree models")
        x_eval = y_eval = None
        if args.data:
            prep = loaded.preprocessing
            x_eval = prep.transform_file(args.data)
            y_eval = _read_target(args.data, prep.target)
        target = out / "tree.dot"
        _write(target, loaded.model.to_dot(x_eval, y_eval))
    print(f"wrote {target}")
    return 0


def _read_target(path, target):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or target not in [f.strip() for f in reader.fieldnames]:
            raise ValidationError(f"{path}: target column {target!r} needed for leaf accuracy labels")
        return np.array([float(row[target]) for row in reader])


def cmd_augment_export(args) -> int:
    cfg = config_from_args(args, check_external=False)  # the predictions do not exist yet
    out = _out_dir(args)
    _, ds = load_training_data(cfg.data, cfg.target, cfg.task)
    pts = query_plan(ds.x, ds.y, cfg, dummy_blocks=ds.dummy_blocks())
    path = out / "augmented_x.csv"
    write_numeric_csv(path, list(ds.column_names), pts)
    m = _base_manifest("augment-export", cfg)
    m.update({"augmented_x_sha256": file_sha256(path), "rows": pts.shape[0],
              "columns": ",".join(ds.column_names)})
    write_manifest(out / "manifest.txt", m)
    print(f"{pts.shape[0]} query points written to {path}; predict them and save one column "
          f"(header 'yhat', same row order) as augmented_yhat.csv, then run augment-import")
    return 0


def cmd_augment_import(args) -> int:
    src = Path(args.export_dir)
    manifest_path = src / "manifest.txt"
    x_path = src / "augmented_x.csv"
    if not manifest_path.is_file() or not x_path.is_file():
        raise ValidationError(f"{src} does not hold an augment-export result")
    manifest = read_manifest(manifest_path)
    if file_sha256(x_path) != manifest.get("augmented_x_sha256"):
        raise ValidationError(f"{x_path} no longer matches the hash recorded at export")
    yhat_path = Path(args.yhat) if args.yhat else src / "augmented_yhat.csv"
    if not yhat_path.is_file():
        raise ValidationError(f"prediction file not found: {yhat_path}")
    task = Task.parse(json.loads(manifest.get("config.task", '"regression"')))
    header, x = read_numeric_csv(x_path)
    _, yhat = read_numeric_csv(yhat_path)
    if yhat.ndim != 2 or yhat.shape[1] != 1:
        raise ValidationError(f"{yhat_path}: expected exactly one prediction column")
    table = ExternalTablePredictor(task, x, yhat[:, 0])  # validates counts and duplicates
    if task is Task.CLASSIFICATION and ((yhat < 0) | (yhat > 1)).any():
        raise ValidationError("classification predictions must be probabilities in [0, 1]")
    out = _out_dir(args)
    shutil.copyfile(x_path, out / "external_x.csv")
    write_numeric_csv(out / "external_yhat.csv", ["yhat"], yhat[:, 0])
    m = _base_manifest("augment-import")
    m.update({"augmented_x_sha256": manifest["augmented_x_sha256"], "yhat_sha256": file_sha256(yhat_path),
              "rows": len(table), "task": task.value})
    write_manifest(out / "manifest.txt", m)
    print(f"imported {x.shape[0]} predictions; train with --blackbox ...,external "
          f"--external-x {out / 'external_x.csv'} --external-yhat {out / 'external_yhat.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthtree", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"synthtree {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="fit SynthTree or MLM-EPIC on a CSV")
    _add_config_flags(s)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict a CSV with a saved model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="seeded train/test splits with LR and CART baselines")
    _add_config_flags(s, evaluate=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("export", help="export a saved model as DOT, JSON or coefficient CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--format", required=True, help="dot, json or coeff-csv")
    s.add_argument("--data", help="labelled CSV for per-leaf accuracy in DOT output")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("augment-export", help="write every point an external model must predict")
    _add_config_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment_export)

    s = sub.add_parser("augment-import", help="check and store external predictions for training")
    s.add_argument("--export-dir", required=True, help="directory written by augment-export")
    s.add_argument("--yhat", help="prediction CSV (default: EXPORT_DIR/augmented_yhat.csv)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment_import)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.cause, ValidationError) else 1
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit code 1
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
