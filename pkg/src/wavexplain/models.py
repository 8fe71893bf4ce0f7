"""Model registry (kind tag -> params + fitter) and the JSON model container."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .baselines import (GaussianNbModel, LinearSvmModel, LogisticModel, LogisticParams,
                        NbParams, SvmParams, fit_gaussian_nb, fit_linear_svm, fit_logistic)
from .data import Dataset
from .errors import DataError, NumericError
from .trees import (TUNED_DT, TUNED_GB, TUNED_RF, DecisionTreeModel, ForestModel, ForestParams,
                    GbmModel, GbmParams, ParamsMixin, TreeNode, TreeParams, fit_forest, fit_gbm,
                    fit_tree)

FORMAT = "wavexplain-model"
VERSION = 1

REGISTRY = {
    "dt": (TreeParams, fit_tree, DecisionTreeModel),
    "rf": (ForestParams, fit_forest, ForestModel),
    "gb": (GbmParams, fit_gbm, GbmModel),
    "nb": (NbParams, fit_gaussian_nb, GaussianNbModel),
    "lr": (LogisticParams, fit_logistic, LogisticModel),
    "svm": (SvmParams, fit_linear_svm, LinearSvmModel),
}
MODEL_KINDS = tuple(REGISTRY)
TREE_KINDS = ("dt", "rf", "gb")

_DEFAULTS = {"dt": TUNED_DT, "rf": TUNED_RF, "gb": TUNED_GB}


def default_params(kind: str) -> ParamsMixin:
    """Tuned configurations for the tree models, class defaults otherwise."""
    params_cls = _registry(kind)[0]
    return _DEFAULTS.get(kind) or params_cls()


def _registry(kind: str):
    try:
        return REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}") from None


def make_params(kind: str, params: Union[None, dict, ParamsMixin] = None) -> ParamsMixin:
    """Resolve ``params``; a dict overrides the kind's defaults key by key."""
    params_cls = _registry(kind)[0]
    if isinstance(params, params_cls):
        return params
    merged = default_params(kind).to_dict()
    aliases = getattr(params_cls, "_aliases", {})
    for key, value in (params or {}).items():
        merged[aliases.get(key, key)] = value
    return params_cls.from_dict(merged)


def fit_model(kind: str, train: Dataset, params: Union[None, dict, ParamsMixin] = None, seed: int = 0):
    _, fit, _ = _registry(kind)
    return fit(train, make_params(kind, params), seed)


def model_kind(model) -> str:
    for kind, (_, _, cls) in REGISTRY.items():
        if type(model) is cls:
            return kind
    raise TypeError(f"not a registered model: {type(model).__name__}")


# ---------------------------------------------------------------------------
# JSON container


def _node_to_dict(node: TreeNode) -> dict:
    d = {"n": node.n_samples, "weighted_n": node.weighted_n, "impurity": node.impurity,
         "value": node.value.tolist()}
    if node.class_counts is not None:
        d["counts"] = node.class_counts.tolist()
    if not node.is_leaf:
        d["feature"] = node.feature
        d["threshold"] = node.threshold
        d["left"] = _node_to_dict(node.left)
        d["right"] = _node_to_dict(node.right)
    return d


def _node_from_dict(d: dict) -> TreeNode:
    node = TreeNode(d["n"], d["weighted_n"], d["impurity"], np.array(d["value"], dtype=np.float64),
                    np.array(d["counts"], dtype=np.float64) if "counts" in d else None)
    if "feature" in d:
        node.feature = d["feature"]
        node.threshold = d["threshold"]
        node.left = _node_from_dict(d["left"])
        node.right = _node_from_dict(d["right"])
    return node


def model_to_dict(model, feature_names=None) -> dict:
    kind = model_kind(model)
    doc = {"format": FORMAT, "version": VERSION, "kind": kind,
           "classes": [int(c) for c in model.classes], "n_features": model.n_features,
           "feature_names": list(feature_names) if feature_names is not None else None}
    if kind in TREE_KINDS:
        doc["params"] = model.params.to_dict()
        doc["seed"] = model.seed
    if kind == "dt":
        doc["tree"] = _node_to_dict(model.root)
    elif kind == "rf":
        doc["trees"] = [_node_to_dict(t.root) for t in model.trees]
    elif kind == "gb":
        doc["prior_counts"] = model.prior_counts.tolist()
        doc["train_deviance"] = list(model.train_deviance)
        doc["stages"] = [[_node_to_dict(t.root) for t in stage] for stage in model.stages]
    elif kind == "nb":
        doc.update(priors=model.priors.tolist(), means=model.means.tolist(),
                   variances=model.variances.tolist(), var_floor=model.var_floor)
    else:
        doc.update(W=model.W.tolist(), b=model.b.tolist(), mean=model.mean.tolist(),
                   scale=model.scale.tolist())
        if kind == "lr":
            doc["loss_trace"] = list(model.loss_trace)
        else:
            doc["temperature"] = model.temperature
            doc["objective_trace"] = list(model.objective_trace)
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise DataError("not a model document")
    kind = doc["kind"]
    params_cls = _registry(kind)[0]
    classes = np.array(doc["classes"], dtype=np.int64)
    F = doc["n_features"]
    a = lambda key: np.array(doc[key], dtype=np.float64)
    if kind == "dt":
        return DecisionTreeModel(_node_from_dict(doc["tree"]), classes, F,
                                 params_cls.from_dict(doc["params"]), doc["seed"])
    if kind == "rf":
        params = params_cls.from_dict(doc["params"])
        trees = [DecisionTreeModel(_node_from_dict(t), classes, F, params.tree_params())
                 for t in doc["trees"]]
        return ForestModel(trees, classes, F, params, doc["seed"])
    if kind == "gb":
        params = params_cls.from_dict(doc["params"])
        stages = [[DecisionTreeModel(_node_from_dict(t), np.array([0]), F, params.tree_params(),
                                     0, "squared_error") for t in stage]
                  for stage in doc["stages"]]
        return GbmModel(stages, classes, F, a("prior_counts"), params, doc["seed"],
                        list(doc["train_deviance"]))
    if kind == "nb":
        return GaussianNbModel(classes, a("priors"), a("means"), a("variances"), doc["var_floor"])
    if kind == "lr":
        return LogisticModel(classes, a("W"), a("b"), a("mean"), a("scale"), list(doc["loss_trace"]))
    return LinearSvmModel(classes, a("W"), a("b"), a("mean"), a("scale"), doc["temperature"],
                          list(doc["objective_trace"]))


def dump_json(obj, path) -> None:
    """Write JSON with stable key order and a trailing newline."""
    try:
        text = json.dumps(obj, indent=1, ensure_ascii=False, allow_nan=False)
    except ValueError as exc:
        raise NumericError(f"cannot write {path}: {exc}") from None
    Path(path).write_text(text + "\n", encoding="utf-8")


def save_model(model, path, feature_names=None) -> None:
    dump_json(model_to_dict(model, feature_names), path)


def load_model(path) -> tuple:
    """Returns (model, feature_names or None)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    return model_from_dict(doc), doc.get("feature_names")
