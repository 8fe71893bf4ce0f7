"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import (SynthConfig, load_waves, missingness_report, preprocess, read_dataset_csv,
                   stratified_split, synth_raw_tables, write_dataset_csv, write_wave_csv)
from .errors import DataError, NumericError
from .evaluation import (DEFAULT_GRIDS, avg_top1_probability, cross_validate, grid_search,
                         lime_accuracy_table, micro_metrics)
from .factsheet import factsheet_emit
from .importance import aggregate_lime_importance, ensemble_importance, topk_retrain
from .lime import (LimeConfig, LimeExplanation, TrainStats, explain_dataset, explain_instance,
                   instance_seed)
from .models import MODEL_KINDS, dump_json, fit_model, load_model, model_kind, save_model
from .pipeline import RunConfig, run_full_pipeline

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out-dir", default=argparse.SUPPRESS)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON file")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wavexplain", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--config", default=None, help="JSON file")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = [_common()]

    def cmd(name, help_text):
        return sub.add_parser(name, parents=common, help=help_text)

    p = cmd("ingest", "preprocess six wave CSVs into one dataset")
    p.add_argument("--waves", nargs=6, required=True, metavar="CSV")
    p.add_argument("--out", default=None)
    p.add_argument("--split", action="store_true", help="also write train.csv and test.csv")

    p = cmd("synth", "generate a synthetic dataset with planted drifting features")
    p.add_argument("--rows", type=int, default=1000, help="rows per wave")
    p.add_argument("--drift", type=float, default=1.5)
    p.add_argument("--planted", type=int, default=3)
    p.add_argument("--out", default=None)
    p.add_argument("--raw-dir", default=None, help="also write the raw wave CSVs here")
    p.add_argument("--split", action="store_true", help="also write train.csv and test.csv")

    p = cmd("report-missing", "count blank cells per column before imputation")
    p.add_argument("--waves", nargs=6, required=True, metavar="CSV")
    p.add_argument("--out", default=None)

    p = cmd("train", "fit a model")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)

    p = cmd("tune", "grid search by cross-validated accuracy")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", default=None, help="JSON grid; defaults exist for dt, rf, gb")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", default=None)

    p = cmd("evaluate", "cross-validate a model kind, or score a saved model")
    p.add_argument("--model", required=True, help="model kind or model JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", default=None)

    p = cmd("explain", "LIME explanation of one row (or all rows)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train", default=None, help="dataset for resampling statistics")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--row", type=int)
    group.add_argument("--all", action="store_true")
    _lime_flags(p)
    p.add_argument("--out", default=None)

    p = cmd("lime-table", "per-class LIME prediction accuracy")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train", default=None)
    _lime_flags(p)
    p.add_argument("--out", default=None)

    p = cmd("importance", "impurity-based feature importance of a tree model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)

    p = cmd("importance-lime", "aggregate |weight| over saved explanations")
    p.add_argument("--explanations", required=True, help="directory or JSON file")
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--out", default=None)

    p = cmd("topk-retrain", "retrain on a feature subset and compare accuracy")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--features", required=True, help="comma-separated names")
    p.add_argument("--out", default=None)

    p = cmd("factsheet", "explainability fact sheet")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--r2", type=float, default=None, help="mean local R2")
    src.add_argument("--soundness", default=None, help="soundness JSON from a run")
    p.add_argument("--out", default=None)

    cmd("run-all", "full pipeline into --out-dir")
    return parser


def _lime_flags(p):
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--topk", type=int, default=None)
    p.add_argument("--kernel-width", type=float, default=None)
    p.add_argument("--ridge", type=float, default=None)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None


def _config(args) -> dict:
    return _read_json(args.config) if args.config else {}


def _out(args, default: str) -> Path:
    path = Path(args.out) if args.out else Path(args.out_dir) / default
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _dataset(path):
    try:
        dataset = read_dataset_csv(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    if dataset.has_missing():
        raise DataError(f"{path}: dataset has missing values; run ingest first")
    return dataset


def _waves(paths):
    try:
        return load_waves(paths)
    except OSError as exc:
        raise DataError(f"{exc.filename}: {exc.strerror}") from None


def _model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None


def _check_features(dataset, names, path):
    if names is not None and list(names) != dataset.feature_names:
        raise DataError(f"{path}: features differ from those the model was trained on")


def _lime_config(args) -> LimeConfig:
    cfg = {**_config(args), "seed": args.seed}
    for key, flag in (("num_samples", "samples"), ("num_features_k", "topk"),
                      ("kernel_width", "kernel_width"), ("ridge_lambda", "ridge")):
        if getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    return LimeConfig(**cfg)


def _write_dataset(dataset, args, default, split):
    out = _out(args, default)
    write_dataset_csv(dataset, out)
    if split:
        train, test = stratified_split(dataset, 0.8, args.seed)
        write_dataset_csv(train, out.parent / "train.csv")
        write_dataset_csv(test, out.parent / "test.csv")
    return out


def cmd_ingest(args):
    tables = _waves(args.waves)
    missing = missingness_report(tables)
    dataset, stats = preprocess(tables)
    out = _write_dataset(dataset, args, "data.csv", args.split)
    dump_json({"missing_counts": missing, "imputation": stats.to_dict()},
              out.parent / "preprocessing.json")
    print(f"{dataset.n_rows} rows x {dataset.n_features} features -> {out}")


def cmd_synth(args):
    cfg = SynthConfig(**{**_config(args), "rows_per_wave": args.rows, "drift_strength": args.drift,
                         "n_planted": args.planted, "seed": args.seed})
    tables = synth_raw_tables(cfg)
    if args.raw_dir:
        raw = Path(args.raw_dir)
        raw.mkdir(parents=True, exist_ok=True)
        for t in tables:
            write_wave_csv(t, raw / f"wave{t.wave_id}.csv")
    dataset, _ = preprocess(tables)
    out = _write_dataset(dataset, args, "data.csv", args.split)
    print(f"{dataset.n_rows} rows x {dataset.n_features} features "
          f"(planted: {', '.join(cfg.planted)}) -> {out}")


def cmd_report_missing(args):
    report = missingness_report(_waves(args.waves))
    out = _out(args, "missing.json")
    dump_json(report, out)
    for name, count in report.items():
        if count:
            print(f"{name}: {count}")


def cmd_train(args):
    train = _dataset(args.data)
    model = fit_model(args.model, train, _config(args), args.seed)
    out = _out(args, f"{args.model}.json")
    save_model(model, out, train.feature_names)
    acc = float(np.mean(model.predict(train.X) == train.y))
    print(f"{args.model}: training accuracy {acc:.4f} -> {out}")


def cmd_tune(args):
    data = _dataset(args.data)
    if args.grid:
        grid = _read_json(args.grid)
    elif args.model in DEFAULT_GRIDS:
        grid = DEFAULT_GRIDS[args.model]
    else:
        raise UsageError(f"no default grid for {args.model}; pass --grid")
    res = grid_search(args.model, grid, data, args.folds, args.seed, _config(args))
    dump_json(res.to_dict(), _out(args, "tuning.json"))
    print(f"best {res.best_params}: cv mean {res.best.mean:.4f}")


def cmd_evaluate(args):
    data = _dataset(args.data)
    out = _out(args, "metrics.json")
    if args.model in MODEL_KINDS:
        res = cross_validate(args.model, _config(args), data, args.folds, args.seed)
        dump_json({"model": args.model, "cv": res.to_dict()}, out)
        print(f"{args.model}: {args.folds}-fold accuracy {res.mean:.4f} +/- {res.std:.4f}")
        return
    model, names = _model(args.model)
    _check_features(data, names, args.data)
    m = micro_metrics(model.predict(data.X), data.y, [int(c) for c in model.classes])
    doc = {"model": model_kind(model), "holdout": m.to_dict(),
           "avg_top1_probability": avg_top1_probability(model, data)}
    del doc["holdout"]["train_time_seconds"]
    dump_json(doc, out)
    print(f"{doc['model']}: accuracy {m.accuracy:.4f}")


def _explain_setup(args):
    model, names = _model(args.model)
    data = _dataset(args.data)
    _check_features(data, names, args.data)
    train = _dataset(args.train) if args.train else data
    _check_features(train, names, args.train)
    return model, data, TrainStats.from_dataset(train), _lime_config(args)


def cmd_explain(args):
    model, data, stats, cfg = _explain_setup(args)
    if args.all:
        expls = explain_dataset(model, data, cfg, stats)
        dump_json([e.to_dict() for e in expls], _out(args, "explanations.json"))
        print(f"explained {len(expls)} rows")
        return
    if not 0 <= args.row < data.n_rows:
        raise UsageError(f"--row must be in 0..{data.n_rows - 1}")
    e = explain_instance(model, data.X[args.row], cfg, stats, seed=instance_seed(cfg.seed, args.row),
                         true_label=data.y[args.row], row=args.row)
    dump_json(e.to_dict(), _out(args, f"explanation_{args.row}.json"))
    print(f"row {args.row}: predicted {e.predicted_label} (p={e.top1_probability:.4f}), "
          f"local R2 {e.local_r2:.4f}")
    for name, w in e.top_features:
        print(f"  {name:<10} {w:+.5f}")


def cmd_lime_table(args):
    model, data, stats, cfg = _explain_setup(args)
    table = lime_accuracy_table(model, data, cfg, stats)
    dump_json(table.to_dict(), _out(args, "lime_table.json"))
    for label, r in table.rows.items():
        print(f"{label}: {r['correct']}/{r['correct'] + r['incorrect']}")
    print(f"total accuracy {table.accuracy:.4f}")


def cmd_importance(args):
    model, names = _model(args.model)
    try:
        rep = ensemble_importance(model, names)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    dump_json(rep.to_dict(), _out(args, "importance.json"))
    for name in rep.top(5):
        print(f"{name:<10} {rep.score(name):.4f}")


def _load_explanations(path) -> list:
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise DataError(f"{path}: no explanation files")
    expls = []
    for f in files:
        doc = _read_json(f)
        try:
            expls += [LimeExplanation.from_dict(d) for d in (doc if isinstance(doc, list) else [doc])]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{f}: not an explanation document ({exc})") from None
    return expls


def cmd_importance_lime(args):
    expls = _load_explanations(args.explanations)
    agg = aggregate_lime_importance(expls, expls[0].feature_names, top_k=args.topk)
    dump_json(agg.to_dict(), _out(args, "importance_lime.json"))
    for label, feats in agg.table.items():
        print(f"{label}: {', '.join(feats)}")


def cmd_topk_retrain(args):
    train, test = _dataset(args.train), _dataset(args.test)
    feats = [f.strip() for f in args.features.split(",") if f.strip()]
    res = topk_retrain(train, test, args.model, _config(args), feats, args.seed)
    dump_json(res.to_dict(), _out(args, "retrain.json"))
    print(f"full {res.accuracy_full:.4f}, selected {res.accuracy_topk:.4f}, delta {res.delta:+.4f}")


def cmd_factsheet(args):
    r2 = args.r2
    if args.soundness:
        r2 = _read_json(args.soundness).get("mean_r2")
    sheet = factsheet_emit(r2)
    out = _out(args, "factsheet.json")
    dump_json(sheet.to_dict(), out)
    text = sheet.render()
    out.with_suffix(".txt").write_text(text, encoding="utf-8")
    print(text)


def cmd_run_all(args):
    cfg = RunConfig.from_dict({**_config(args), "seed": args.seed, "out_dir": args.out_dir})
    run_full_pipeline(cfg)
    print((Path(args.out_dir) / "summary.txt").read_text(encoding="utf-8"), end="")


COMMANDS = {
    "ingest": cmd_ingest, "synth": cmd_synth, "report-missing": cmd_report_missing,
    "train": cmd_train, "tune": cmd_tune, "evaluate": cmd_evaluate, "explain": cmd_explain,
    "lime-table": cmd_lime_table, "importance": cmd_importance,
    "importance-lime": cmd_importance_lime, "topk-retrain": cmd_topk_retrain,
    "factsheet": cmd_factsheet, "run-all": cmd_run_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required; see --help")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
