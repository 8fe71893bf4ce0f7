import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wavexplain.errors import DataError, NumericError, SchemaError
from wavexplain.lime import (LimeConfig, LimeExplanation, SoundnessScore, TrainStats,
                             explain_dataset, explain_instance, fit_local_surrogate, perturb,
                             proximity_weights, r2_score, soundness_r2)
from wavexplain.models import fit_model

from conftest import make_dataset


class LinearTwoClass:
    """p(class 1) = c + x.beta, exactly linear in the features."""

    def __init__(self, beta, c=0.5):
        self.beta = np.asarray(beta, dtype=float)
        self.c = c

    def predict_proba(self, X):
        p1 = self.c + np.asarray(X) @ self.beta
        return np.column_stack([1 - p1, p1])


def linear_setup(seed=0, F=6):
    rng = np.random.default_rng(seed)
    beta = rng.normal(0, 0.02, size=F)
    train = rng.normal(size=(200, F))
    return LinearTwoClass(beta), TrainStats.from_matrix(train), train


def test_config_defaults_and_validation():
    cfg = LimeConfig()
    assert (cfg.num_samples, cfg.ridge_lambda, cfg.num_features_k) == (5000, 1.0, 5)
    assert cfg.width(64) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        LimeConfig(num_samples=5).validate(4)
    with pytest.raises(ValueError):
        LimeConfig(num_features_k=9).validate(4)
    with pytest.raises(ValueError):
        LimeConfig(kernel_width=0.0).validate(4)


def test_perturb_single_row_is_instance():
    stats = TrainStats.from_matrix([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(perturb([9.0, 9.0], stats, 1), [[9.0, 9.0]])


@given(st.integers(0, 2**31), st.integers(1, 60))
def test_perturb_values_come_from_instance_or_training(seed, n):
    rng = np.random.default_rng(seed)
    train = rng.integers(0, 5, size=(15, 3)).astype(float)
    stats = TrainStats.from_matrix(train)
    x = np.array([10.0, 11.0, 12.0])
    s = perturb(x, stats, n, seed)
    assert s.shape == (n, 3)
    np.testing.assert_array_equal(s[0], x)
    for j in range(3):
        allowed = set(train[:, j].tolist()) | {x[j]}
        assert set(s[:, j].tolist()) <= allowed
    np.testing.assert_array_equal(s, perturb(x, stats, n, seed))


def test_perturb_keep_rate():
    stats = TrainStats.from_matrix(np.arange(100.0)[:, None] + 1000)
    s = perturb([0.0], stats, 20000, 1)
    assert abs(np.mean(s[:, 0] == 0.0) - 0.5) < 0.02


def test_perturb_single_valued_feature():
    stats = TrainStats.from_matrix([[7.0], [7.0]])
    assert np.all(perturb([7.0], stats, 50, 0) == 7.0)


def test_perturb_width_check():
    with pytest.raises(SchemaError):
        perturb([1.0], TrainStats.from_matrix([[1.0, 2.0]]), 3)


def test_train_stats_need_rows():
    with pytest.raises(DataError):
        TrainStats.from_matrix(np.zeros((0, 2)))


def test_kernel_hand_case():
    w = proximity_weights([[0.0, 0.0], [2.0, 0.0], [0.0, 4.0]], [0.0, 0.0], 2.0)
    np.testing.assert_allclose(w, [1.0, math.exp(-1), math.exp(-4)])


def test_kernel_scaled_and_zero_std():
    w = proximity_weights([[2.0, 100.0]], [0.0, 0.0], 1.0, scale=[2.0, 0.0])
    np.testing.assert_allclose(w, [math.exp(-1)])


@given(st.lists(st.floats(0, 50), min_size=2, max_size=20))
def test_kernel_monotone(ds):
    ds = sorted(ds)
    w = proximity_weights(np.array(ds)[:, None], [0.0], 3.0)
    assert np.all(np.diff(w) <= 0)
    assert np.all((w >= 0) & (w <= 1))


def test_surrogate_recovers_linear_target():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 4))
    beta = np.array([0.5, -2.0, 0.0, 3.0])
    y = 1.5 + X @ beta
    s = fit_local_surrogate(X, y, rng.random(300), ridge_lambda=0.0)
    np.testing.assert_allclose(s.weights, beta, atol=1e-9)
    assert s.intercept == pytest.approx(1.5, abs=1e-9)


def test_surrogate_matches_weighted_least_squares():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    w = rng.random(50)
    s = fit_local_surrogate(X, y, w, ridge_lambda=0.0)
    A = np.column_stack([np.ones(50), X]) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)
    np.testing.assert_allclose([s.intercept, *s.weights], coef, atol=1e-10)


def test_surrogate_constant_target():
    X = np.random.default_rng(0).normal(size=(20, 3))
    s = fit_local_surrogate(X, np.full(20, 0.3), np.ones(20))
    assert np.all(s.weights == 0)
    assert s.intercept == pytest.approx(0.3)


def test_surrogate_ridge_limit():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 2))
    y = X @ [1.0, 2.0]
    s = fit_local_surrogate(X, y, np.ones(40), ridge_lambda=1e12)
    assert np.abs(s.weights).max() < 1e-9


def test_surrogate_constant_column_gets_zero():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.normal(size=30), np.full(30, 4.0)])
    s = fit_local_surrogate(X, 2 * X[:, 0], np.ones(30), 0.0)
    assert s.weights[1] == 0.0
    assert s.weights[0] == pytest.approx(2.0)


def test_surrogate_errors():
    with pytest.raises(DataError):
        fit_local_surrogate([[1.0], [2.0]], [0.0, 1.0], [1.0, 0.0])
    X = np.random.default_rng(0).normal(size=(5, 8))
    with pytest.raises(NumericError):
        fit_local_surrogate(X, X[:, 0], np.ones(5), ridge_lambda=0.0)


def test_r2_endpoints():
    y = np.array([0.1, 0.4, 0.9, 0.3])
    w = np.array([1.0, 0.5, 0.2, 0.9])
    assert r2_score(y, y, w) == 1.0
    ybar = np.sum(w * y) / np.sum(w)
    assert abs(r2_score(y, np.full(4, ybar), w)) < 1e-12
    assert r2_score(np.ones(3), np.zeros(3)) == 0.0


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.integers(0, 1000))
def test_r2_at_most_one(ys, seed):
    y = np.array(ys)
    yhat = y + np.random.default_rng(seed).normal(size=y.size)
    assert r2_score(y, yhat) <= 1.0


def test_explain_linear_model_recovers_coefficients():
    model, stats, train = linear_setup(0)
    cfg = LimeConfig(num_samples=500, ridge_lambda=0.0, num_features_k=6)
    e = explain_instance(model, train[0], cfg, stats)
    sign = 1 if e.surrogate.target_class == 1 else -1
    np.testing.assert_allclose(e.surrogate.weights, sign * model.beta, atol=1e-6)
    assert e.local_r2 > 0.99
    top = int(np.argmax(np.abs(model.beta)))
    assert e.top_features[0][0] == stats.feature_names[top]
    assert np.sign(e.top_features[0][1]) == sign * np.sign(model.beta[top])


def test_explain_constant_model():
    stats = TrainStats.from_matrix(np.random.default_rng(0).normal(size=(20, 3)))
    const = lambda X: np.tile([0.2, 0.8], (len(X), 1))
    e = explain_instance(const, np.zeros(3), LimeConfig(num_samples=50, num_features_k=3), stats)
    assert all(w == 0 for _, w in e.top_features)
    assert e.local_r2 == 0.0
    assert e.predicted_label == 1 and e.top1_probability == 0.8


def test_explain_agrees_with_predict_proba(small_split):
    train, test = small_split
    model = fit_model("rf", train, {"n_estimators": 5})
    stats = TrainStats.from_dataset(train)
    cfg = LimeConfig(num_samples=100)
    for e in explain_dataset(model, test, cfg, stats, rows=range(8)):
        p = model.predict_proba(test.X[e.row:e.row + 1])[0]
        assert e.predicted_label == model.classes[np.argmax(p)]
        assert e.top1_probability == p.max()
        assert e.true_label == test.y[e.row]
        ws = [abs(w) for _, w in e.top_features]
        assert ws == sorted(ws, reverse=True) and len(ws) == 5


def test_explain_scaling_invariance():
    model, stats, train = linear_setup(1)
    cfg = LimeConfig(num_samples=300)

    class Scaled:
        def predict_proba(self, X):
            return 0.5 * model.predict_proba(X)

    a = explain_instance(model, train[3], cfg, stats)
    b = explain_instance(Scaled(), train[3], cfg, stats)
    np.testing.assert_allclose(b.surrogate.weights, 0.5 * a.surrogate.weights, rtol=1e-9, atol=1e-15)
    assert [n for n, _ in a.top_features] == [n for n, _ in b.top_features]


def test_explanations_deterministic(small_split):
    train, test = small_split
    model = fit_model("gb", train, {"n_estimators": 3})
    stats = TrainStats.from_dataset(train)
    cfg = LimeConfig(num_samples=60, seed=5)
    a = [e.to_dict() for e in explain_dataset(model, test, cfg, stats, rows=[0, 4])]
    b = [e.to_dict() for e in explain_dataset(model, test, cfg, stats, rows=[0, 4])]
    assert a == b


def test_explanation_dict_roundtrip(small_split):
    train, test = small_split
    model = fit_model("nb", train)
    stats = TrainStats.from_dataset(train)
    (e,) = explain_dataset(model, test, LimeConfig(num_samples=40), stats, rows=[2])
    back = LimeExplanation.from_dict(e.to_dict())
    assert back.to_dict() == e.to_dict()


def test_explain_schema_mismatch(small_split):
    train, test = small_split
    stats = TrainStats.from_matrix(train.X[:, :3])
    with pytest.raises(SchemaError):
        explain_dataset(lambda X: X, test, LimeConfig(), stats)


def test_soundness_mean():
    s = SoundnessScore.from_values([1.0, 0.5, 0.0])
    assert s.mean_r2 == 0.5
    with pytest.raises(DataError):
        SoundnessScore.from_values([])


def test_soundness_linear_model():
    model, stats, train = linear_setup(4)
    test = make_dataset(train[:20], [1] * 20, stats.feature_names)
    s = soundness_r2(model, test, LimeConfig(num_samples=200, ridge_lambda=0.0), stats)
    assert s.mean_r2 > 0.999
    assert len(s.per_instance) == 20
