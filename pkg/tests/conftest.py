import csv
from pathlib import Path

import numpy as np
import pytest

from synthtree.blackbox import Predictor
from synthtree.data import Task

DATA_DIR = Path(__file__).parent / "data"


class FunctionPredictor(Predictor):
    """A 'black box' that is a known function; keeps tests free of forest noise."""

    kind = "function"

    def __init__(self, fn, task=Task.REGRESSION):
        self.fn = fn
        self.task = Task.parse(task)

    def predict(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


class FixedPredictor(Predictor):
    """Returns stored predictions for the training rows it was built with."""

    kind = "fixed"

    def __init__(self, values, task=Task.REGRESSION):
        self.values = np.asarray(values, dtype=float)
        self.task = Task.parse(task)

    def predict(self, x):
        return self.values[: np.asarray(x).shape[0]].copy()


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


BETA_LEFT = np.array([1.0, 2.0, -1.0])
BETA_RIGHT = np.array([-2.0, 0.5, 1.5])


def two_region_truth(x):
    x = np.asarray(x, dtype=float)
    return np.where(x[:, 0] <= 0, x @ BETA_LEFT + 1.0, x @ BETA_RIGHT - 0.5)


def two_blob_regimes(n, rng):
    """Two well-separated blobs, each with its own exact linear response."""
    half = n // 2
    a = rng.normal([-4.0, 0.0], 0.5, (half, 2))
    b = rng.normal([4.0, 0.0], 0.5, (n - half, 2))
    x = np.vstack([a, b])
    return x, regime_truth(x)


def regime_truth(x):
    x = np.asarray(x, dtype=float)
    return np.where(x[:, 0] < 0, 1.0 + 2.0 * x[:, 0] - x[:, 1], -3.0 + 0.5 * x[:, 0] + 1.5 * x[:, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def abalone_path():
    return DATA_DIR / "abalone.csv"


# acceptance results, printed once at the end of the run
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
