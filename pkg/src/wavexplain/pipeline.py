"""End-to-end run: data -> split -> (tune) -> train/evaluate -> explain ->
importance -> top-k retrain -> fact sheet, written to one directory."""
from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (Dataset, SynthConfig, load_waves, missingness_report, preprocess,
                   read_dataset_csv, stratified_split, synth_raw_tables, write_dataset_csv)
from .errors import DataError, NumericError
from .evaluation import (DEFAULT_GRIDS, avg_top1_probability, cross_validate, evaluate_holdout,
                         grid_search, lime_accuracy_from_explanations)
from .factsheet import factsheet_emit
from .importance import aggregate_lime_importance, ensemble_importance, topk_retrain
from .lime import LimeConfig, SoundnessScore, TrainStats, explain_dataset
from .models import MODEL_KINDS, TREE_KINDS, dump_json, make_params, save_model


@dataclass
class RunConfig:
    seed: int = 42
    out_dir: str = "run"
    # data source: a preprocessed CSV, six raw wave CSVs, or the generator
    data: Optional[str] = None
    waves: list = field(default_factory=list)
    synth: dict = field(default_factory=dict)  # SynthConfig fields except seed
    train_fraction: float = 0.8
    models: list = field(default_factory=lambda: list(MODEL_KINDS))
    explain_models: list = field(default_factory=lambda: ["rf", "gb"])
    params: dict = field(default_factory=dict)  # kind -> hyperparameter overrides
    tune: bool = False
    grids: dict = field(default_factory=dict)
    tune_folds: int = 10
    cv_folds: int = 10  # 0 skips cross-validation
    lime: dict = field(default_factory=dict)  # LimeConfig fields except seed
    lime_rows: Optional[int] = None  # None explains every test row
    retrain_k_lime: int = 3
    retrain_k_gini: int = 5
    factsheet_model: Optional[str] = None
    record_time: bool = False  # wall-clock times break byte-identical reruns

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        except OSError as exc:
            raise DataError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def lime_config(self) -> LimeConfig:
        return LimeConfig(**{**self.lime, "seed": self.seed})

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**{**self.synth, "seed": self.seed})

    def validate(self) -> None:
        for kind in [*self.models, *self.explain_models]:
            if kind not in MODEL_KINDS:
                raise ValueError(f"unknown model kind {kind!r}")
        missing = [k for k in self.explain_models if k not in self.models]
        if missing:
            raise ValueError(f"explain_models {missing} are not in models")
        if self.factsheet_model is not None and self.factsheet_model not in self.explain_models:
            raise ValueError("factsheet_model must be one of explain_models")
        if self.data is not None and self.waves:
            raise ValueError("give either data or waves, not both")
        if self.waves and len(self.waves) != 6:
            raise ValueError("waves needs one CSV per wave (6 paths)")
        for p in ([self.data] if self.data else []) + list(self.waves):
            if not Path(p).is_file():
                raise DataError(f"input file not found: {p}")
        if self.lime_rows is not None and self.lime_rows < 1:
            raise ValueError("lime_rows must be >= 1")
        if self.retrain_k_lime < 1 or self.retrain_k_gini < 1:
            raise ValueError("retrain sizes must be >= 1")
        self.synth_config().validate()


@contextlib.contextmanager
def stage(name: str):
    """Re-raise errors prefixed with the stage name, keeping their type."""
    try:
        yield
    except (DataError, NumericError, ValueError) as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc


def stratified_rows(y, n: int, seed: int) -> np.ndarray:
    """``n`` row indices spread evenly over classes (earlier classes take the
    remainder), sorted."""
    y = np.asarray(y)
    classes = np.unique(y)
    if n >= y.size:
        return np.arange(y.size)
    rng = np.random.default_rng(seed)
    base, extra = divmod(n, classes.size)
    picked = []
    for i, c in enumerate(classes):
        idx = np.flatnonzero(y == c)
        take = min(idx.size, base + (i < extra))
        picked.append(rng.choice(idx, size=take, replace=False))
    return np.sort(np.concatenate(picked))


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _ranking_rows(report):
    return [(i + 1, name, repr(report.score(name))) for i, name in enumerate(report.ranking)]


def _load_data(cfg: RunConfig):
    if cfg.data is not None:
        dataset = read_dataset_csv(cfg.data)
        if dataset.has_missing():
            raise DataError(f"{cfg.data}: dataset has missing values; run ingest first")
        return dataset, None
    tables = load_waves(cfg.waves) if cfg.waves else synth_raw_tables(cfg.synth_config())
    missing = missingness_report(tables)
    dataset, stats = preprocess(tables)
    return dataset, {"missing_counts": missing, "imputation": stats.to_dict()}


def run_full_pipeline(cfg: RunConfig) -> dict:
    """Run every stage and write the artifacts under ``cfg.out_dir``.

    Returns the in-memory bundle (also summarized in summary.json).
    """
    with stage("config"):
        cfg.validate()
        lime_cfg = cfg.lime_config()
    out = Path(cfg.out_dir)
    for sub in ("models", "explanations"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    # the output location is left out so reruns elsewhere compare equal
    dump_json({k: v for k, v in cfg.to_dict().items() if k != "out_dir"}, out / "config.json")

    with stage("data"):
        dataset, prep = _load_data(cfg)
        write_dataset_csv(dataset, out / "data.csv")
        if prep is not None:
            dump_json(prep, out / "preprocessing.json")

    with stage("split"):
        train, test = stratified_split(dataset, cfg.train_fraction, cfg.seed)
        if test.n_rows == 0:
            raise DataError("test split is empty")
        dump_json({"train_fraction": cfg.train_fraction, "train_rows": train.n_rows,
                   "test_rows": test.n_rows,
                   "per_class": {str(int(c)): {"train": int(np.sum(train.y == c)),
                                               "test": int(np.sum(test.y == c))}
                                 for c in dataset.classes}}, out / "split.json")

    params = {k: make_params(k, cfg.params.get(k)).to_dict() for k in cfg.models}
    tuning = {}
    if cfg.tune:
        with stage("tune"):
            for kind in cfg.models:
                if kind not in TREE_KINDS:
                    continue
                grid = cfg.grids.get(kind, DEFAULT_GRIDS[kind])
                res = grid_search(kind, grid, train, cfg.tune_folds, cfg.seed, params[kind])
                params[kind] = make_params(kind, res.best_params).to_dict()
                tuning[kind] = res.to_dict()
            dump_json(tuning, out / "tuning.json")

    models, metrics = {}, {}
    with stage("train"):
        for kind in cfg.models:
            model, m = evaluate_holdout(kind, params[kind], train, test, cfg.seed, cfg.record_time)
            models[kind] = model
            save_model(model, out / "models" / f"{kind}.json", train.feature_names)
            metrics[kind] = {"params": params[kind], "holdout": m.to_dict()}
            if not cfg.record_time:
                del metrics[kind]["holdout"]["train_time_seconds"]

    with stage("evaluate"):
        cv_rows = []
        for kind in cfg.models:
            metrics[kind]["avg_top1_probability"] = avg_top1_probability(models[kind], test)
            cv = None
            if cfg.cv_folds:
                cv = cross_validate(kind, params[kind], dataset, cfg.cv_folds, cfg.seed)
                cv_rows += [(kind, f + 1, repr(a)) for f, a in enumerate(cv.fold_accuracies)]
                cv = {k: v for k, v in cv.to_dict().items() if k != "params"}
            metrics[kind]["cv"] = cv
        dump_json({"test_rows": test.n_rows, "models": metrics}, out / "metrics.json")
        if cv_rows:
            _write_csv(out / "cv_accuracy.csv", ("model", "fold", "accuracy"), cv_rows)

    explained = {}
    with stage("explain"):
        stats = TrainStats.from_dataset(train)
        rows = (np.arange(test.n_rows) if cfg.lime_rows is None
                else stratified_rows(test.y, cfg.lime_rows, cfg.seed))
        for kind in cfg.explain_models:
            model = models[kind]
            expls = explain_dataset(model, test, lime_cfg, stats, rows)
            table = lime_accuracy_from_explanations(expls)
            sub = test.subset(rows)
            direct = int(np.count_nonzero(model.predict(sub.X) == sub.y)) / sub.n_rows
            sound = SoundnessScore.from_values([e.local_r2 for e in expls])
            explained[kind] = {"explanations": expls, "table": table, "soundness": sound}
            dump_json([e.to_dict() for e in expls], out / "explanations" / f"{kind}.json")
            dump_json({"model": kind, "rows_explained": len(expls),
                       "all_test_rows": cfg.lime_rows is None or len(expls) == test.n_rows,
                       "model_accuracy_same_rows": direct, **table.to_dict()},
                      out / f"lime_table_{kind}.json")
            dump_json({"model": kind, **sound.to_dict()}, out / f"soundness_{kind}.json")

    importance = {}
    with stage("importance"):
        names = train.feature_names
        for kind in cfg.models:
            if kind in TREE_KINDS:
                rep = ensemble_importance(models[kind], names)
                importance.setdefault(kind, {})["gini"] = rep
                dump_json({"model": kind, **rep.to_dict()}, out / f"importance_gini_{kind}.json")
                _write_csv(out / f"importance_gini_{kind}.csv", ("rank", "feature", "score"),
                           _ranking_rows(rep))
        for kind, ex in explained.items():
            agg = aggregate_lime_importance(ex["explanations"], names, top_k=lime_cfg.num_features_k)
            importance.setdefault(kind, {})["lime"] = agg
            dump_json({"model": kind, **agg.to_dict()}, out / f"importance_lime_{kind}.json")
            _write_csv(out / f"importance_lime_{kind}.csv", ("rank", "feature", "score"),
                       _ranking_rows(agg.overall))

    retrain = []
    with stage("topk-retrain"):
        for kind in cfg.explain_models:
            sources = [("lime", importance[kind]["lime"].overall, cfg.retrain_k_lime)]
            if "gini" in importance[kind]:
                sources.append(("gini", importance[kind]["gini"], cfg.retrain_k_gini))
            for source, rep, k in sources:
                res = topk_retrain(train, test, kind, params[kind], rep.top(k), cfg.seed)
                retrain.append({"source": source, "k": k, **res.to_dict()})
        dump_json(retrain, out / "retrain.json")

    with stage("factsheet"):
        fs_model = cfg.factsheet_model or (cfg.explain_models[0] if cfg.explain_models else None)
        r2 = explained[fs_model]["soundness"].mean_r2 if fs_model else None
        sheet = factsheet_emit(r2)
        dump_json({"soundness_model": fs_model, **sheet.to_dict()}, out / "factsheet.json")
        (out / "factsheet.txt").write_text(sheet.render(), encoding="utf-8")

    with stage("summary"):
        text = render_summary(out)
        (out / "summary.txt").write_text(text, encoding="utf-8")

    return {"dataset": dataset, "train": train, "test": test, "models": models,
            "metrics": metrics, "explained": explained, "importance": importance,
            "retrain": retrain, "factsheet": sheet, "params": params, "tuning": tuning}


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _load(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def render_summary(out_dir) -> str:
    """Plain-text tables built only from the JSON artifacts in ``out_dir``."""
    out = Path(out_dir)
    metrics = _load(out / "metrics.json")["models"]
    lines = ["Classifier accuracy", ""]
    lines.append(f"{'model':<6} {'holdout':>8} {'cv mean':>8} {'cv std':>8} {'top1 p':>8}  config")
    for kind, m in metrics.items():
        cv = m["cv"]
        cv_mean = _fmt(cv["mean"]) if cv else "-"
        cv_std = _fmt(cv["std"]) if cv else "-"
        conf = " ".join(f"{k}={v}" for k, v in m["params"].items())
        lines.append(f"{kind:<6} {_fmt(m['holdout']['accuracy']):>8} {cv_mean:>8} {cv_std:>8} "
                     f"{_fmt(m['avg_top1_probability']):>8}  {conf}")
    lines.append("")

    for path in sorted(out.glob("lime_table_*.json")):
        t = _load(path)
        lines.append(f"LIME prediction accuracy, {t['model']}")
        lines.append(f"{'wave':<6} {'correct':>8} {'wrong':>8} {'accuracy':>9}")
        for label, r in t["per_class"].items():
            lines.append(f"{label:<6} {r['correct']:>8} {r['incorrect']:>8} {_fmt(r['accuracy']):>9}")
        tot = t["total"]
        lines.append(f"{'total':<6} {tot['correct']:>8} {tot['incorrect']:>8} {_fmt(tot['accuracy']):>9}")
        lines.append("")

    for path in sorted(out.glob("soundness_*.json")):
        s = _load(path)
        lines.append(f"LIME soundness, {s['model']}: mean local R2 {_fmt(s['mean_r2'])}")
    lines.append("")

    for path in sorted(out.glob("importance_lime_*.json")):
        imp = _load(path)
        lines.append(f"Most influential features per wave, {imp['model']} with LIME")
        for label, feats in imp["per_class_top"].items():
            lines.append(f"{label:<6} " + ", ".join(feats))
        lines.append(f"{'all':<6} " + ", ".join(imp["overall"]["ranking"][: imp["top_k"]]))
        lines.append("")

    for path in sorted(out.glob("importance_gini_*.json")):
        imp = _load(path)
        top = imp["ranking"][:5]
        lines.append(f"Gini importance, {imp['model']}: "
                     + ", ".join(f"{n} {_fmt(imp['scores'][n])}" for n in top))
    lines.append("")

    lines.append("Retrained on selected features")
    for r in _load(out / "retrain.json"):
        lines.append(f"{r['model']:<6} {r['source']:<5} {','.join(r['features'])}: "
                     f"full {_fmt(r['accuracy_full'])} selected {_fmt(r['accuracy_topk'])} "
                     f"delta {_fmt(r['delta'])}")
    lines.append("")
    fs = _load(out / "factsheet.json")
    r2 = fs["computed"]["lime_mean_r2"]
    lines.append(f"Fact sheet soundness ({fs['soundness_model']}): "
                 + ("undefined" if r2 is None else _fmt(r2)))
    return "\n".join(lines) + "\n"
