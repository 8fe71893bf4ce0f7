"""Impurity-based (ante-hoc) and LIME-aggregate (post-hoc) feature importance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import DataError, SchemaError
from .trees import DecisionTreeModel, ForestModel, GbmModel, TreeNode


def node_importance(node: TreeNode) -> float:
    """Weighted impurity of a node minus that of its two children."""
    if node.is_leaf:
        raise ValueError("node importance is defined for internal nodes only")
    return (node.weighted_n * node.impurity
            - node.left.weighted_n * node.left.impurity
            - node.right.weighted_n * node.right.impurity)


@dataclass
class ImportanceReport:
    feature_names: list
    scores: np.ndarray
    source: str  # "gini" | "lime-aggregate"
    undefined_total: bool = False

    @property
    def ranking(self) -> list[str]:
        order = sorted(range(len(self.scores)), key=lambda j: (-self.scores[j], j))
        return [self.feature_names[j] for j in order]

    def top(self, k: int) -> list[str]:
        return self.ranking[:k]

    def score(self, name: str) -> float:
        return float(self.scores[self.feature_names.index(name)])

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "undefined_total": self.undefined_total,
            "ranking": self.ranking,
            "scores": {n: float(s) for n, s in zip(self.feature_names, self.scores)},
        }


def _normalize(raw: np.ndarray, names, source) -> ImportanceReport:
    total = math.fsum(raw)
    if not total > 0:
        return ImportanceReport(list(names), np.zeros(len(names)), source, True)
    return ImportanceReport(list(names), raw / total, source)


def _feature_names(model, feature_names) -> list:
    if feature_names is not None:
        names = list(feature_names)
        if len(names) != model.n_features:
            raise SchemaError("feature_names length does not match the model")
        return names
    return [f"x{j}" for j in range(model.n_features)]


def _tree_raw(tree: DecisionTreeModel) -> np.ndarray:
    raw = np.zeros(tree.n_features)
    for node in tree.root.walk():
        if not node.is_leaf:
            raw[node.feature] += node_importance(node)
    return raw


def tree_feature_importance(tree: DecisionTreeModel, feature_names=None) -> ImportanceReport:
    """Share of the total node importance contributed by splits on each feature.

    A tree without splits gets all-zero scores and ``undefined_total``.
    """
    return _normalize(_tree_raw(tree), _feature_names(tree, feature_names), "gini")


def _ensemble_trees(model) -> list:
    if isinstance(model, ForestModel):
        return list(model.trees)
    if isinstance(model, GbmModel):
        return [t for stage in model.stages for t in stage]
    if isinstance(model, DecisionTreeModel):
        return [model]
    raise TypeError(f"no impurity importance for {type(model).__name__}")


def ensemble_importance(model, feature_names=None) -> ImportanceReport:
    """Average of per-tree normalized importances, renormalized to sum 1.

    Boosting stages are regression trees, so their impurity is the
    variance of the residuals rather than Gini.
    """
    trees = _ensemble_trees(model)
    names = _feature_names(model, feature_names)
    per_tree = [tree_feature_importance(t).scores for t in trees]
    if not per_tree:
        return ImportanceReport(names, np.zeros(len(names)), "gini", True)
    stacked = np.array(per_tree)
    # fsum keeps the mean independent of tree order
    mean = np.array([math.fsum(col) for col in stacked.T]) / len(per_tree)
    return _normalize(mean, names, "gini")


@dataclass
class LimeImportance:
    overall: ImportanceReport
    per_class: dict  # label -> ImportanceReport
    top_k: int = 5
    labels_from: str = "true"

    @property
    def table(self) -> dict:
        return {label: rep.top(self.top_k) for label, rep in self.per_class.items()}

    def to_dict(self) -> dict:
        return {
            "labels_from": self.labels_from,
            "overall": self.overall.to_dict(),
            "top_k": self.top_k,
            "per_class_top": {str(k): v for k, v in self.table.items()},
            "per_class": {str(k): v.to_dict() for k, v in self.per_class.items()},
        }


def aggregate_lime_importance(explanations: Sequence, feature_names: Sequence[str],
                              labels: Optional[Sequence[int]] = None,
                              top_k: int = 5) -> LimeImportance:
    """Sum |surrogate weight| per feature over explanations, overall and per class.

    Rows are grouped by their true label (``labels`` or the label stored on
    each explanation); explanations without one fall back to the predicted
    label.
    """
    if not explanations:
        raise DataError("no explanations to aggregate")
    names = list(feature_names)
    for e in explanations:
        if list(e.feature_names) != names:
            raise SchemaError("explanation features do not match the schema")
    if labels is None:
        labels = [e.true_label for e in explanations]
    source = "true"
    if any(l is None for l in labels):
        labels = [e.predicted_label if l is None else l for e, l in zip(explanations, labels)]
        source = "predicted"
    absw = np.array([np.abs(e.surrogate.weights) for e in explanations])
    overall = np.array([math.fsum(col) for col in absw.T])
    per_class = {}
    labels = np.asarray(labels)
    for label in np.unique(labels):
        sums = np.array([math.fsum(col) for col in absw[labels == label].T])
        per_class[int(label)] = _normalize(sums, names, "lime-aggregate")
    return LimeImportance(_normalize(overall, names, "lime-aggregate"), per_class, top_k, source)


@dataclass
class RetrainResult:
    model_kind: str
    features: list
    accuracy_full: float
    accuracy_topk: float

    @property
    def delta(self) -> float:
        return self.accuracy_topk - self.accuracy_full

    def to_dict(self) -> dict:
        return {"model": self.model_kind, "features": self.features,
                "accuracy_full": self.accuracy_full, "accuracy_topk": self.accuracy_topk,
                "delta": self.delta}


def topk_retrain(train: Dataset, test: Dataset, model_kind: str, params: Optional[dict],
                 selected_features: Sequence[str], seed: int = 0) -> RetrainResult:
    """Test accuracy with all features versus only ``selected_features``."""
    from .models import fit_model

    selected = list(selected_features)
    if not selected:
        raise ValueError("selected_features must be nonempty")
    for name in selected:
        train.schema.index(name)
    accs = []
    for tr, te in ((train, test), (train.select_features(selected), test.select_features(selected))):
        model = fit_model(model_kind, tr, params, seed)
        accs.append(float(np.count_nonzero(model.predict(te.X) == te.y)) / te.n_rows)
    return RetrainResult(model_kind, selected, accs[0], accs[1])
