import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wavexplain.data import Dataset, FeatureSchema, SynthConfig, stratified_split, synth_generate

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(X, y, names=None):
    X = np.asarray(X, dtype=float)
    names = names or [f"f{j}" for j in range(X.shape[1])]
    return Dataset(FeatureSchema.from_names(names), X, np.asarray(y))


@pytest.fixture(scope="session")
def small_synth():
    return synth_generate(SynthConfig(rows_per_wave=120, seed=7))


@pytest.fixture(scope="session")
def small_split(small_synth):
    return stratified_split(small_synth, 0.8, 7)


@pytest.fixture
def blobs():
    """Three well separated Gaussian classes in 4 features."""
    rng = np.random.default_rng(0)
    centers = np.array([[0, 0, 0, 0], [4, 0, 0, 0], [0, 4, 0, 0]], dtype=float)
    y = np.repeat([1, 2, 3], 40)
    X = centers[y - 1] + rng.normal(0, 0.5, size=(120, 4))
    return make_dataset(X, y)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def report():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
