import numpy as np
import pytest
from hypothesis import given, strategies as st

from wavexplain.baselines import (LogisticParams, NbParams, SvmParams, fit_gaussian_nb,
                                  fit_linear_svm, fit_logistic, logistic_loss_grad, softmax,
                                  svm_objective)
from wavexplain.errors import NumericError

from conftest import make_dataset
from oracles import numeric_grad


@given(st.integers(0, 2**31))
def test_logistic_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, F, K = 7, 3, 4
    Z = rng.normal(size=(n, F))
    Y = np.eye(K)[rng.integers(0, K, size=n)]
    W = rng.normal(size=(K, F))
    b = rng.normal(size=K)
    _, gW, gb = logistic_loss_grad(W, b, Z, Y)
    nW = numeric_grad(lambda w: logistic_loss_grad(w, b, Z, Y)[0], W.copy())
    nb = numeric_grad(lambda v: logistic_loss_grad(W, v, Z, Y)[0], b.copy())
    assert np.linalg.norm(gW - nW) / max(np.linalg.norm(nW), 1e-12) < 1e-5
    assert np.linalg.norm(gb - nb) / max(np.linalg.norm(nb), 1e-12) < 1e-5


def test_softmax_rows():
    p = softmax(np.array([[0.0, 0.0], [1000.0, 0.0]]))
    np.testing.assert_allclose(p, [[0.5, 0.5], [1.0, 0.0]])


@pytest.mark.parametrize("fit", [fit_gaussian_nb, fit_logistic, fit_linear_svm])
def test_separable_blobs(fit, blobs):
    model = fit(blobs)
    assert np.mean(model.predict(blobs.X) == blobs.y) >= 0.97
    p = model.predict_proba(blobs.X)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert model.classes.tolist() == [1, 2, 3]


def test_nb_matches_closed_form():
    X = np.array([[0.0], [2.0], [10.0], [14.0]])
    model = fit_gaussian_nb(make_dataset(X, [1, 1, 2, 2]))
    np.testing.assert_allclose(model.means, [[1.0], [12.0]])
    np.testing.assert_allclose(model.variances, [[1.0], [4.0]])
    # point halfway in z-units is closer to class 1 only by the variance term
    x = np.array([[4.0]])
    ll1 = np.log(0.5) - 0.5 * np.log(2 * np.pi) - 0.5 * 9.0
    ll2 = np.log(0.5) - 0.5 * np.log(2 * np.pi * 4) - 0.5 * 64 / 4
    np.testing.assert_allclose(model.joint_log_likelihood(x), [[ll1, ll2]])


def test_nb_variance_floor():
    model = fit_gaussian_nb(make_dataset([[1.0], [1.0], [2.0], [3.0]], [1, 1, 2, 2]),
                            NbParams(var_floor=1e-3))
    assert model.variances[0, 0] == 1e-3
    assert np.all(np.isfinite(model.predict_proba([[1.5]])))


def test_logistic_loss_decreases(small_synth):
    model = fit_logistic(small_synth, LogisticParams(epochs=50))
    tr = model.loss_trace
    assert len(tr) == 51
    assert tr[0] == pytest.approx(np.log(6))
    assert all(b <= a + 1e-12 for a, b in zip(tr, tr[1:]))


def test_logistic_constant_feature(blobs):
    X = np.column_stack([blobs.X, np.ones(blobs.n_rows)])
    model = fit_logistic(make_dataset(X, blobs.y))
    assert np.all(np.isfinite(model.W))


def test_svm_objective_trace(small_synth):
    model = fit_linear_svm(small_synth, SvmParams(epochs=5))
    assert len(model.objective_trace) == 6
    assert model.objective_trace[-1] < model.objective_trace[0]


def test_svm_deterministic(small_synth):
    a = fit_linear_svm(small_synth, SvmParams(epochs=3), seed=4)
    b = fit_linear_svm(small_synth, SvmParams(epochs=3), seed=4)
    np.testing.assert_array_equal(a.W, b.W)


def test_svm_divergence_is_numeric_error(small_synth):
    with pytest.raises(NumericError):
        fit_linear_svm(small_synth, SvmParams(step=1e308, epochs=3))


def test_svm_hinge_hand_case():
    Z = np.array([[1.0], [-1.0]])
    T = np.array([[1.0, -1.0], [-1.0, 1.0]])
    W = np.zeros((2, 1))
    b = np.zeros(2)
    assert svm_objective(W, b, Z, T, 0.0) == 2.0
    W = np.array([[2.0], [-2.0]])
    assert svm_objective(W, b, Z, T, 0.5) == pytest.approx(0.25 * 8)


def test_svm_temperature_flattens(blobs):
    sharp = fit_linear_svm(blobs, SvmParams(temperature=0.5))
    flat = fit_linear_svm(blobs, SvmParams(temperature=5.0))
    assert sharp.predict_proba(blobs.X).max(axis=1).mean() > flat.predict_proba(blobs.X).max(axis=1).mean()
    np.testing.assert_array_equal(sharp.predict(blobs.X), flat.predict(blobs.X))
