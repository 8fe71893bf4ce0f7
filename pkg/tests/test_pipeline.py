import json
import re

import numpy as np
import pytest

from wavexplain.data import SynthConfig, synth_generate, write_dataset_csv
from wavexplain.errors import DataError
from wavexplain.pipeline import RunConfig, render_summary, run_full_pipeline, stratified_rows

TINY = {"synth": {"rows_per_wave": 60}, "params": {"rf": {"n_estimators": 5}, "gb": {"n_estimators": 5},
                                                   "lr": {"epochs": 30}, "svm": {"epochs": 2}},
        "cv_folds": 3, "lime": {"num_samples": 40}}


def json_numbers(obj, out):
    if isinstance(obj, bool) or obj is None:
        return out
    if isinstance(obj, (int, float)):
        out.append(float(obj))
    elif isinstance(obj, dict):
        for k, v in obj.items():
            try:
                out.append(float(k))
            except ValueError:
                pass
            json_numbers(v, out)
    elif isinstance(obj, list):
        for v in obj:
            json_numbers(v, out)
    return out


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    bundle = run_full_pipeline(RunConfig.from_dict({**TINY, "seed": 3, "out_dir": str(out)}))
    return out, bundle


def test_artifacts_written(run):
    out, _ = run
    for name in ("config.json", "data.csv", "split.json", "metrics.json", "retrain.json",
                 "factsheet.json", "factsheet.txt", "summary.txt", "lime_table_rf.json",
                 "soundness_gb.json", "importance_gini_rf.csv", "importance_lime_gb.json",
                 "cv_accuracy.csv", "models/svm.json", "explanations/rf.json"):
        assert (out / name).is_file(), name


def test_summary_numbers_come_from_json(run):
    out, _ = run
    numbers = []
    for path in out.rglob("*.json"):
        json_numbers(json.loads(path.read_text()), numbers)
    values = np.array(numbers)
    text = (out / "summary.txt").read_text()
    tokens = re.findall(r"(?<![\w.])-?\d+(?:\.\d+)?(?![\w.])", text)
    assert tokens
    for tok in tokens:
        decimals = len(tok.split(".")[1]) if "." in tok else 0
        assert np.any(np.abs(values - float(tok)) <= 0.5 * 10 ** -decimals + 1e-12), tok


def test_lime_table_totals_match_metrics(run):
    out, _ = run
    metrics = json.loads((out / "metrics.json").read_text())["models"]
    for kind in ("rf", "gb"):
        table = json.loads((out / f"lime_table_{kind}.json").read_text())
        assert table["all_test_rows"]
        assert table["total"]["accuracy"] == metrics[kind]["holdout"]["accuracy"]
        assert table["total"]["accuracy"] == table["model_accuracy_same_rows"]


def test_factsheet_carries_run_r2(run):
    out, bundle = run
    sheet = json.loads((out / "factsheet.json").read_text())
    r2 = json.loads((out / "soundness_rf.json").read_text())["mean_r2"]
    assert sheet["computed"]["lime_mean_r2"] == r2
    u1 = [r for s in sheet["sections"] for r in s["rows"] if r["id"] == "U1"][0]
    assert u1["lime"]["text"] == f"R² = {r2:.2f}"


def test_no_wall_clock_by_default(run):
    out, _ = run
    assert "train_time_seconds" not in (out / "metrics.json").read_text()


def test_retrain_records_delta(run):
    out, _ = run
    rows = json.loads((out / "retrain.json").read_text())
    assert {(r["model"], r["source"]) for r in rows} == {("rf", "lime"), ("rf", "gini"),
                                                          ("gb", "lime"), ("gb", "gini")}
    for r in rows:
        assert r["delta"] == r["accuracy_topk"] - r["accuracy_full"]


def test_summary_rerender_is_stable(run):
    out, _ = run
    assert render_summary(out) == (out / "summary.txt").read_text()


def test_rerun_byte_identical(tmp_path):
    cfg = {**TINY, "models": ["dt", "rf", "gb"], "cv_folds": 0, "lime_rows": 12}
    for d in ("a", "b"):
        run_full_pipeline(RunConfig.from_dict({**cfg, "out_dir": str(tmp_path / d)}))
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*")
                           if p.is_file())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_tune_stage(tmp_path):
    cfg = {**TINY, "models": ["dt", "gb"], "explain_models": ["gb"], "cv_folds": 0, "lime_rows": 6,
           "tune": True, "tune_folds": 2, "grids": {"dt": {"max_depth": [1, 3]},
                                                     "gb": {"max_depth": [1], "n_estimators": [2, 4]}},
           "out_dir": str(tmp_path)}
    bundle = run_full_pipeline(RunConfig.from_dict(cfg))
    tuning = json.loads((tmp_path / "tuning.json").read_text())
    assert set(tuning) == {"dt", "gb"}
    assert bundle["params"]["dt"]["max_depth"] == tuning["dt"]["best_params"]["max_depth"]


def test_stage_error_names_stage(tmp_path):
    ds = synth_generate(SynthConfig(rows_per_wave=10))
    X = ds.X.copy()
    X[0, 0] = np.nan
    from wavexplain.data import Dataset
    write_dataset_csv(Dataset(ds.schema, X, ds.y), tmp_path / "bad.csv")
    cfg = RunConfig(data=str(tmp_path / "bad.csv"), out_dir=str(tmp_path / "o"))
    with pytest.raises(DataError, match="stage data"):
        run_full_pipeline(cfg)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="unknown run config"):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="stage config"):
        run_full_pipeline(RunConfig(models=["dt"], explain_models=["rf"], out_dir=str(tmp_path)))
    with pytest.raises(DataError, match="not found"):
        run_full_pipeline(RunConfig(data=str(tmp_path / "none.csv"), out_dir=str(tmp_path)))


def test_stratified_rows():
    y = np.repeat([1, 2, 3], 10)
    rows = stratified_rows(y, 7, 0)
    assert len(rows) == 7 and np.all(np.diff(rows) > 0)
    assert sorted(np.bincount(y[rows])[1:].tolist()) == [2, 2, 3]
    assert stratified_rows(y, 100, 0).tolist() == list(range(30))
