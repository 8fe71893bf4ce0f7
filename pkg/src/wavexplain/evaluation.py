"""Cross-validation, grid tuning, micro metrics and LIME accuracy tables."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .data import Dataset
from .errors import DataError
from .lime import LimeConfig, LimeExplanation, TrainStats, explain_dataset
from .models import fit_model

# Grids covering every tuned configuration of the tree models.
DEFAULT_GRIDS = {
    "gb": {"learning_rate": [0.05, 0.1, 0.2], "max_depth": [1, 3, 5], "n_estimators": [50, 150, 300]},
    "rf": {"max_depth": [4, 6, 10], "n_estimators": [100, 500], "min_samples_split": [2, 4]},
    "dt": {"max_depth": [10, 20, None], "min_samples_leaf": [1, 3], "min_samples_split": [2, 3]},
}


@dataclass
class Metrics:
    accuracy: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    classes: list
    confusion: list  # rows: true class, columns: predicted class
    n: int
    train_time_seconds: Optional[float] = None

    def to_dict(self) -> dict:
        return {"n": self.n, "accuracy": self.accuracy, "micro_precision": self.micro_precision,
                "micro_recall": self.micro_recall, "micro_f1": self.micro_f1,
                "train_time_seconds": self.train_time_seconds,
                "classes": self.classes, "confusion": self.confusion}


def micro_metrics(predictions, labels, classes: Optional[Sequence[int]] = None) -> Metrics:
    """Micro-averaged precision/recall/F1 from pooled TP/FP/FN counts.

    With one label per row every false positive is some other class's
    false negative, so all three equal the accuracy.
    """
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape != true.shape:
        raise ValueError("predictions and labels differ in length")
    n = pred.size
    if n == 0:
        raise ValueError("need at least one prediction")
    classes = sorted(set(true.tolist()) | set(pred.tolist())) if classes is None else list(classes)
    pos = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true.tolist(), pred.tolist()):
        confusion[pos[t], pos[p]] += 1
    tp = int(np.trace(confusion))
    fp = int(confusion.sum(axis=0).sum() - tp)
    fn = int(confusion.sum(axis=1).sum() - tp)
    return Metrics(accuracy=tp / n, micro_precision=tp / (tp + fp), micro_recall=tp / (tp + fn),
                   micro_f1=2 * tp / (2 * tp + fp + fn), classes=[int(c) for c in classes],
                   confusion=confusion.tolist(), n=n)


@dataclass
class CvResult:
    fold_accuracies: list
    mean: float
    std: float
    params: dict = field(default_factory=dict)

    @classmethod
    def from_folds(cls, accs: Sequence[float], params=None) -> "CvResult":
        mean = math.fsum(accs) / len(accs)
        std = math.sqrt(math.fsum((a - mean) ** 2 for a in accs) / len(accs))
        return cls([float(a) for a in accs], mean, std, dict(params or {}))

    def to_dict(self) -> dict:
        return {"folds": len(self.fold_accuracies), "mean": self.mean, "std": self.std,
                "fold_accuracies": self.fold_accuracies, "params": self.params}


def stratified_folds(y, folds: int, seed: int = 0) -> np.ndarray:
    """Fold id per row; within every class fold sizes differ by at most one."""
    y = np.asarray(y)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    start = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        if idx.size < folds:
            raise DataError(f"class {c} has {idx.size} rows, fewer than {folds} folds")
        # rotate the starting fold so overall fold sizes stay balanced too
        fold_of[idx] = (np.arange(idx.size) + start) % folds
        start = (start + idx.size) % folds
    return fold_of


def derived_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


Fitter = Union[str, Callable]


def _fit(model_kind: Fitter, train, params, seed):
    if callable(model_kind):
        return model_kind(train, params, seed)
    return fit_model(model_kind, train, params, seed)


def cross_validate(model_kind: Fitter, params: Optional[dict], dataset: Dataset,
                   folds: int = 10, seed: int = 0) -> CvResult:
    """Stratified k-fold accuracy; fold f trains with a seed derived from (seed, f).

    ``model_kind`` is a registry tag or a callable ``(train, params, seed) -> model``.
    """
    fold_of = stratified_folds(dataset.y, folds, seed)
    accs = []
    for f in range(folds):
        test = fold_of == f
        model = _fit(model_kind, dataset.subset(np.flatnonzero(~test)), params, derived_seed(seed, f))
        held = dataset.subset(np.flatnonzero(test))
        accs.append(int(np.count_nonzero(model.predict(held.X) == held.y)) / held.n_rows)
    return CvResult.from_folds(accs, params)


def grid_points(grid: dict) -> list[dict]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must have at least one value per hyperparameter")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass
class GridResult:
    best_params: dict
    best: CvResult
    results: list  # CvResult per grid point, grid order

    def to_dict(self) -> dict:
        return {"best_params": self.best_params, "best": self.best.to_dict(),
                "results": [r.to_dict() for r in self.results]}


def grid_search(model_kind: Fitter, grid: dict, dataset: Dataset, folds: int = 10,
                seed: int = 0, base_params: Optional[dict] = None) -> GridResult:
    """Exhaustive search by mean CV accuracy; the first best point wins ties."""
    results = []
    best = None
    for point in grid_points(grid):
        params = {**(base_params or {}), **point}
        res = cross_validate(model_kind, params, dataset, folds, seed)
        results.append(res)
        if best is None or res.mean > best.mean:
            best = res
    return GridResult(best.params, best, results)


@dataclass
class PerClassLimeAccuracy:
    rows: dict  # label -> {"correct", "incorrect", "accuracy"}
    correct: int
    incorrect: int
    accuracy: float

    def to_dict(self) -> dict:
        return {"per_class": {str(k): v for k, v in self.rows.items()},
                "total": {"correct": self.correct, "incorrect": self.incorrect,
                          "accuracy": self.accuracy}}


def lime_accuracy_from_explanations(explanations: Sequence[LimeExplanation],
                                    labels: Optional[Sequence[int]] = None) -> PerClassLimeAccuracy:
    if not explanations:
        raise DataError("no explanations")
    labels = [e.true_label for e in explanations] if labels is None else list(labels)
    if any(l is None for l in labels):
        raise DataError("explanations lack true labels")
    rows = {}
    for label in sorted(set(int(l) for l in labels)):
        hits = [e.predicted_label == label for e, l in zip(explanations, labels) if l == label]
        c = sum(hits)
        rows[label] = {"correct": c, "incorrect": len(hits) - c, "accuracy": c / len(hits)}
    correct = sum(r["correct"] for r in rows.values())
    incorrect = sum(r["incorrect"] for r in rows.values())
    return PerClassLimeAccuracy(rows, correct, incorrect, correct / (correct + incorrect))


def lime_accuracy_table(model, test_set: Dataset, config: LimeConfig, stats: TrainStats,
                        explanations: Optional[Sequence[LimeExplanation]] = None) -> PerClassLimeAccuracy:
    """Per-class counts of explained rows whose explained label is the true one."""
    if test_set.n_rows == 0:
        raise DataError("test set is empty")
    if explanations is None:
        explanations = explain_dataset(model, test_set, config, stats)
    return lime_accuracy_from_explanations(explanations)


def avg_top1_probability(model, test_set: Dataset) -> float:
    if test_set.n_rows == 0:
        raise DataError("test set is empty")
    proba = model.predict_proba(test_set.X)
    return math.fsum(proba.max(axis=1)) / test_set.n_rows


def evaluate_holdout(model_kind: str, params, train: Dataset, test: Dataset, seed: int = 0,
                     record_time: bool = True):
    """Fit on ``train``; returns (model, Metrics on ``test``)."""
    t0 = time.perf_counter()
    model = fit_model(model_kind, train, params, seed)
    elapsed = time.perf_counter() - t0
    metrics = micro_metrics(model.predict(test.X), test.y, [int(c) for c in train.classes])
    metrics.train_time_seconds = elapsed if record_time else None
    return model, metrics
