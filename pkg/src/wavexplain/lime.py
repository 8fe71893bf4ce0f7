"""Local surrogate explanations for any probabilistic classifier.

An instance is explained by sampling perturbed copies of it, querying the
black box on every copy, weighting copies by their closeness to the
instance and fitting a weighted ridge regression to the black-box
probability of the predicted class.  The fit quality (weighted R^2 over the
perturbation set) is the explanation's soundness score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import DataError, NumericError, SchemaError


@dataclass(frozen=True)
class LimeConfig:
    num_samples: int = 5000
    kernel_width: Optional[float] = None  # None -> 0.75 * sqrt(n_features)
    ridge_lambda: float = 1.0
    num_features_k: int = 5
    seed: int = 0

    def width(self, n_features: int) -> float:
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(n_features)

    def validate(self, n_features: int) -> None:
        if self.num_samples < 10:
            raise ValueError("num_samples must be >= 10")
        if not self.width(n_features) > 0:
            raise ValueError("kernel_width must be > 0")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        if not 1 <= self.num_features_k <= n_features:
            raise ValueError(f"num_features_k must be in 1..{n_features}")


@dataclass(frozen=True, eq=False)
class TrainStats:
    """Empirical per-feature values used to resample perturbations."""

    feature_names: list
    values: np.ndarray  # training matrix, one column per feature
    std: np.ndarray

    @classmethod
    def from_dataset(cls, train: Dataset) -> "TrainStats":
        return cls.from_matrix(train.X, train.feature_names)

    @classmethod
    def from_matrix(cls, X, feature_names=None) -> "TrainStats":
        X = np.array(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError("training statistics need at least one row")
        names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
        X.flags.writeable = False
        return cls(names, X, X.std(axis=0))

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LocalSurrogate:
    weights: np.ndarray
    intercept: float
    target_class: int = -1

    def predict(self, samples) -> np.ndarray:
        return self.intercept + np.asarray(samples) @ self.weights


@dataclass
class LimeExplanation:
    surrogate: LocalSurrogate
    feature_names: list
    top_features: list  # [(name, signed weight)] by |weight| descending
    local_r2: float
    predicted_label: int
    top1_probability: float
    instance_values: dict = field(default_factory=dict)
    true_label: Optional[int] = None
    row: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "row": self.row,
            "true_label": self.true_label,
            "predicted_label": self.predicted_label,
            "top1_probability": self.top1_probability,
            "target_class_index": self.surrogate.target_class,
            "local_r2": self.local_r2,
            "intercept": self.surrogate.intercept,
            "top_features": [{"feature": n, "weight": w, "value": self.instance_values[n]}
                             for n, w in self.top_features],
            "weights": dict(zip(self.feature_names, map(float, self.surrogate.weights))),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LimeExplanation":
        names = list(d["weights"])
        surrogate = LocalSurrogate(np.array([d["weights"][n] for n in names]),
                                   d["intercept"], d["target_class_index"])
        return cls(surrogate, names,
                   [(t["feature"], t["weight"]) for t in d["top_features"]],
                   d["local_r2"], d["predicted_label"], d["top1_probability"],
                   {t["feature"]: t["value"] for t in d["top_features"]},
                   d.get("true_label"), d.get("row"))


@dataclass
class SoundnessScore:
    per_instance: list
    mean_r2: float

    @classmethod
    def from_values(cls, r2s: Sequence[float]) -> "SoundnessScore":
        if len(r2s) == 0:
            raise DataError("soundness needs at least one explanation")
        return cls([float(v) for v in r2s], math.fsum(r2s) / len(r2s))

    def to_dict(self) -> dict:
        return {"mean_r2": self.mean_r2, "n_instances": len(self.per_instance),
                "per_instance_r2": self.per_instance}


def perturb(instance, stats: TrainStats, n: int, seed=0) -> np.ndarray:
    """Row 0 is the instance; elsewhere each feature keeps its value with
    probability 1/2, otherwise takes a random observed training value."""
    if n < 1:
        raise ValueError("n must be >= 1")
    instance = np.asarray(instance, dtype=np.float64)
    n_train, F = stats.values.shape
    if instance.shape != (F,):
        raise SchemaError(f"instance has shape {instance.shape}, expected ({F},)")
    rng = np.random.default_rng(seed)
    keep = rng.random((n, F)) < 0.5
    draws = stats.values[rng.integers(0, n_train, size=(n, F)), np.arange(F)]
    samples = np.where(keep, instance, draws)
    samples[0] = instance
    return samples


def proximity_weights(samples, instance, kernel_width: float, scale=None) -> np.ndarray:
    """exp(-d^2 / width^2), d = Euclidean distance after dividing by ``scale``.

    Features with zero scale do not contribute to the distance.
    """
    if not kernel_width > 0:
        raise ValueError("kernel_width must be > 0")
    diff = np.asarray(samples, dtype=np.float64) - np.asarray(instance, dtype=np.float64)
    if scale is not None:
        scale = np.asarray(scale, dtype=np.float64)
        safe = np.where(scale > 0, scale, 1.0)
        diff = np.where(scale > 0, diff / safe, 0.0)
    d2 = np.einsum("ij,ij->i", diff, diff)
    return np.exp(-d2 / kernel_width ** 2)


def fit_local_surrogate(samples, target, weights, ridge_lambda: float = 1.0,
                        target_class: int = -1) -> LocalSurrogate:
    """Weighted ridge regression with an unpenalized intercept.

    Solved through the normal equations on weight-centred, weight-scaled
    columns; coefficients are returned on the original feature scale.
    Columns that are constant over the samples get weight 0.
    """
    X = np.asarray(samples, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if np.count_nonzero(w > 0) < 2:
        raise DataError("need at least two samples with positive weight")
    if np.ptp(y) == 0:
        return LocalSurrogate(np.zeros(X.shape[1]), float(y[0]), target_class)
    sw = w.sum()
    mu = w @ X / sw
    ybar = w @ y / sw
    Xc = X - mu
    scale = np.sqrt(w @ (Xc * Xc) / sw)
    active = (np.ptp(X, axis=0) > 0) & (scale > 0)
    coef = np.zeros(X.shape[1])
    if active.any():
        Z = Xc[:, active] / scale[active]
        A = Z.T @ (w[:, None] * Z) + ridge_lambda * np.eye(Z.shape[1])
        b = Z.T @ (w * (y - ybar))
        eig = np.linalg.eigvalsh(A)
        if not eig[0] > eig[-1] * A.shape[0] * np.finfo(float).eps:
            raise NumericError("surrogate normal equations are singular; use ridge_lambda > 0")
        beta = np.linalg.solve(A, b)
        if not np.all(np.isfinite(beta)):
            raise NumericError("surrogate coefficients are not finite")
        coef[active] = beta / scale[active]
    return LocalSurrogate(coef, float(ybar - mu @ coef), target_class)


def r2_score(y, y_hat, weights=None) -> float:
    """1 - SS_res / SS_tot, optionally weighted; 0 when y is constant."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.ptp(y) == 0:
        return 0.0
    ybar = w @ y / w.sum()
    ss_res = w @ (y - y_hat) ** 2
    ss_tot = w @ (y - ybar) ** 2
    if ss_tot == 0:
        return 0.0
    return float(1.0 - ss_res / ss_tot)


def _predict_fn(model) -> Callable:
    return model.predict_proba if hasattr(model, "predict_proba") else model


def explain_instance(model, instance, config: LimeConfig, stats: TrainStats,
                     seed=None, true_label=None, row=None) -> LimeExplanation:
    """Explain the model's predicted class at ``instance``.

    ``model`` is anything with ``predict_proba`` (or a callable returning
    an (n, n_classes) probability matrix); its ``classes`` attribute, when
    present, maps class indices to labels.
    """
    instance = np.asarray(instance, dtype=np.float64)
    F = stats.n_features
    if instance.shape != (F,):
        raise SchemaError(f"instance has shape {instance.shape}, expected ({F},)")
    config.validate(F)
    predict = _predict_fn(model)
    p0 = np.asarray(predict(instance[None, :]))[0]
    target = int(np.argmax(p0))
    classes = getattr(model, "classes", None)
    label = int(classes[target]) if classes is not None else target

    samples = perturb(instance, stats, config.num_samples, config.seed if seed is None else seed)
    y = np.asarray(predict(samples))[:, target]
    weights = proximity_weights(samples, instance, config.width(F), stats.std)
    surrogate = fit_local_surrogate(samples, y, weights, config.ridge_lambda, target)
    local_r2 = r2_score(y, surrogate.predict(samples), weights)

    order = np.argsort(-np.abs(surrogate.weights), kind="stable")[: config.num_features_k]
    names = stats.feature_names
    top = [(names[j], float(surrogate.weights[j])) for j in order]
    values = {names[j]: float(instance[j]) for j in order}
    return LimeExplanation(surrogate, list(names), top, local_r2, label, float(p0[target]),
                           values, None if true_label is None else int(true_label), row)


def instance_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index])


def explain_dataset(model, dataset: Dataset, config: LimeConfig, stats: TrainStats,
                    rows: Optional[Sequence[int]] = None) -> list[LimeExplanation]:
    """Explain every (or the selected) row; row i uses a stream from (seed, i)."""
    if dataset.feature_names != stats.feature_names:
        raise SchemaError("dataset and training statistics have different features")
    rows = range(dataset.n_rows) if rows is None else rows
    return [explain_instance(model, dataset.X[i], config, stats,
                             seed=instance_seed(config.seed, int(i)),
                             true_label=dataset.y[i], row=int(i))
            for i in rows]


def soundness_r2(model, test_set: Dataset, config: LimeConfig, stats: TrainStats,
                 explanations: Optional[Sequence[LimeExplanation]] = None) -> SoundnessScore:
    """Mean local R^2 of the explanations of every test row."""
    if test_set.n_rows == 0:
        raise DataError("test set is empty")
    if explanations is None:
        explanations = explain_dataset(model, test_set, config, stats)
    return SoundnessScore.from_values([e.local_r2 for e in explanations])
