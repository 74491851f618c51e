import numpy as np
import pytest

from stagewise.ingest import CycleRecord, BatteryDataset

_ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dataset(n_cycles=3, n_samples=6, name="toy", seed=0):
    r = np.random.default_rng(seed)
    cycles = []
    for c in range(1, n_cycles + 1):
        t = np.arange(n_samples) * 10.0
        cycles.append(CycleRecord(c, t, {
            "voltage": 4.2 - 0.01 * np.arange(n_samples) + 0.001 * r.standard_normal(n_samples),
            "current": -2.0 + 0.01 * r.standard_normal(n_samples),
            "temperature": 24.0 + 0.1 * np.arange(n_samples),
        }))
    return BatteryDataset(name, 2.0, tuple(cycles))


def uniform_dataset(n_cycles=40, change=None, shift=4.0, n_samples=120, seed=0):
    """Independent uniform channels; from ``change`` on, voltage is offset by ``shift``.

    Uniform samples keep T² bounded, so consistent cycles essentially never
    exceed the control limit and boundaries come only from the change.
    """
    r = np.random.default_rng(seed)
    cycles = []
    for c in range(1, n_cycles + 1):
        X = r.uniform(-1, 1, size=(n_samples, 3))
        if change is not None and c >= change:
            X[:, 0] += shift
        cycles.append(CycleRecord(c, np.arange(n_samples, dtype=float),
                                  {"voltage": X[:, 0], "current": X[:, 1], "temperature": X[:, 2]}))
    return BatteryDataset("uniform", 2.0, tuple(cycles))
