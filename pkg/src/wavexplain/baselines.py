"""Non-tree classifiers: Gaussian naive Bayes, softmax regression, linear SVM."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import DataError, NumericError
from .trees import ParamsMixin, _check_width, _Classifier, _xy

NB_VAR_FLOOR = 1e-9


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class NbParams(ParamsMixin):
    var_floor: float = NB_VAR_FLOOR


@dataclass(frozen=True)
class LogisticParams(ParamsMixin):
    epochs: int = 300
    step: float = 0.5


@dataclass(frozen=True)
class SvmParams(ParamsMixin):
    epochs: int = 30
    step: float = 0.1
    reg: float = 1e-3
    batch_size: int = 64
    temperature: float = 1.0


@dataclass(eq=False)
class GaussianNbModel(_Classifier):
    classes: np.ndarray
    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    var_floor: float = NB_VAR_FLOOR

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = _check_width(X, self.n_features)
        out = np.empty((X.shape[0], self.n_classes))
        for k in range(self.n_classes):
            var = self.variances[k]
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * var)) \
                - 0.5 * np.sum((X - self.means[k]) ** 2 / var, axis=1)
            out[:, k] = np.log(self.priors[k]) + ll
        return out

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.joint_log_likelihood(X))


def fit_gaussian_nb(train: Dataset, params: NbParams = NbParams(), seed: int = 0) -> GaussianNbModel:
    """Maximum-likelihood class Gaussians; variances floored at ``var_floor``."""
    X, classes, codes = _xy(train)
    K = classes.size
    counts = np.bincount(codes, minlength=K).astype(np.float64)
    means = np.array([X[codes == k].mean(axis=0) for k in range(K)])
    var = np.array([((X[codes == k] - means[k]) ** 2).mean(axis=0) for k in range(K)])
    return GaussianNbModel(classes, counts / counts.sum(), means,
                           np.maximum(var, params.var_floor), params.var_floor)


class _Standardized(_Classifier):
    mean: np.ndarray
    scale: np.ndarray
    W: np.ndarray
    b: np.ndarray

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    def transform(self, X) -> np.ndarray:
        X = _check_width(X, self.n_features)
        return (X - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        return self.transform(X) @ self.W.T + self.b


def _standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (X - mean) / scale, mean, scale


@dataclass(eq=False)
class LogisticModel(_Standardized):
    classes: np.ndarray
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    loss_trace: list = field(default_factory=list)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))


def logistic_loss_grad(W, b, Z, Y):
    """Mean cross-entropy of softmax(Z W^T + b) against one-hot Y, and its gradient."""
    P = softmax(Z @ W.T + b)
    loss = -np.mean(np.sum(Y * np.log(np.maximum(P, 1e-300)), axis=1))
    G = (P - Y) / Z.shape[0]
    return float(loss), G.T @ Z, G.sum(axis=0)


def fit_logistic(train: Dataset, params: LogisticParams = LogisticParams(), seed: int = 0) -> LogisticModel:
    """Full-batch gradient descent from zero weights (``seed`` is unused)."""
    if params.epochs < 1:
        raise ValueError("epochs must be >= 1")
    X, classes, codes = _xy(train)
    Z, mean, scale = _standardize(X)
    Y = np.eye(classes.size)[codes]
    W = np.zeros((classes.size, X.shape[1]))
    b = np.zeros(classes.size)
    trace = []
    for _ in range(params.epochs):
        loss, gW, gb = logistic_loss_grad(W, b, Z, Y)
        if not np.isfinite(loss):
            raise NumericError("logistic loss is not finite; lower the step size")
        trace.append(loss)
        W = W - params.step * gW
        b = b - params.step * gb
    loss, _, _ = logistic_loss_grad(W, b, Z, Y)
    if not np.isfinite(loss):
        raise NumericError("logistic loss is not finite; lower the step size")
    trace.append(loss)
    return LogisticModel(classes, W, b, mean, scale, trace)


@dataclass(eq=False)
class LinearSvmModel(_Standardized):
    classes: np.ndarray
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    temperature: float = 1.0
    objective_trace: list = field(default_factory=list)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X) / self.temperature)


def svm_objective(W, b, Z, T, reg) -> float:
    """Sum over one-vs-rest problems of reg/2 |w|^2 + mean hinge loss."""
    hinge = np.maximum(0.0, 1.0 - T * (Z @ W.T + b))
    return float(0.5 * reg * np.sum(W * W) + hinge.mean(axis=0).sum())


def fit_linear_svm(train: Dataset, params: SvmParams = SvmParams(), seed: int = 0) -> LinearSvmModel:
    """One-vs-rest hinge loss, L2 penalty, mini-batch SGD with a decaying step."""
    if params.epochs < 1:
        raise ValueError("epochs must be >= 1")
    X, classes, codes = _xy(train)
    Z, mean, scale = _standardize(X)
    T = np.where(np.eye(classes.size)[codes] == 1, 1.0, -1.0)
    W = np.zeros((classes.size, X.shape[1]))
    b = np.zeros(classes.size)
    rng = np.random.default_rng(seed)
    trace = [svm_objective(W, b, Z, T, params.reg)]
    with np.errstate(over="ignore", invalid="ignore"):
        return _sgd(Z, T, W, b, classes, mean, scale, params, rng, trace)


def _sgd(Z, T, W, b, classes, mean, scale, params, rng, trace):
    n = Z.shape[0]
    t = 0
    for _ in range(params.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, params.batch_size):
            batch = perm[start:start + params.batch_size]
            Zb, Tb = Z[batch], T[batch]
            active = (Tb * (Zb @ W.T + b) < 1.0) * Tb
            gW = params.reg * W - active.T @ Zb / batch.size
            gb = -active.mean(axis=0)
            lr = params.step / (1.0 + params.step * params.reg * t)
            W = W - lr * gW
            b = b - lr * gb
            t += 1
        obj = svm_objective(W, b, Z, T, params.reg)
        if not (np.isfinite(obj) and np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NumericError("SVM diverged; lower the step size")
        trace.append(obj)
    return LinearSvmModel(classes, W, b, mean, scale, params.temperature, trace)
