import json

import numpy as np
import pytest

from wavexplain.errors import DataError
from wavexplain.models import (MODEL_KINDS, default_params, fit_model, load_model, make_params,
                               model_kind, save_model)
from wavexplain.trees import TUNED_RF

SMALL = {"rf": {"n_estimators": 5}, "gb": {"n_estimators": 5}, "lr": {"epochs": 20},
         "svm": {"epochs": 2}}


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_roundtrip_predictions(kind, small_split, tmp_path):
    train, test = small_split
    model = fit_model(kind, train, SMALL.get(kind), seed=3)
    save_model(model, tmp_path / "m.json", train.feature_names)
    back, names = load_model(tmp_path / "m.json")
    assert names == train.feature_names
    assert model_kind(back) == kind
    np.testing.assert_array_equal(back.predict_proba(test.X), model.predict_proba(test.X))
    # the document itself is stable
    save_model(back, tmp_path / "m2.json", names)
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_tree_document_shape(small_split, tmp_path):
    model = fit_model("dt", small_split[0], {"max_depth": 2})
    save_model(model, tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["kind"] == "dt"
    root = doc["tree"]
    assert {"feature", "threshold", "counts", "left", "right"} <= set(root)


def test_defaults_are_tuned_configs():
    assert default_params("rf") == TUNED_RF
    assert make_params("rf", {"n_estimators": 7}).max_depth == 6
    assert make_params("gb", {"lr": 0.2}).learning_rate == 0.2


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_params("knn")


def test_load_rejects_other_json(tmp_path):
    (tmp_path / "x.json").write_text("{}")
    with pytest.raises(DataError):
        load_model(tmp_path / "x.json")
    (tmp_path / "y.json").write_text("{")
    with pytest.raises(DataError):
        load_model(tmp_path / "y.json")
