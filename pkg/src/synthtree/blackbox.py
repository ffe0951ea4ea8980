"""Black-box predictors used for co-supervision.

Random forests come from scikit-learn. Gradient boosting is a small
stagewise implementation over scikit-learn regression trees so that depth-0
stumps and per-round training loss are available. External predictions
(MLP, LRF or anything else trained outside) enter through an exact-match
lookup table.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.tree import DecisionTreeRegressor

from .data import Task
from .exceptions import RowCountMismatch, UnknownQueryPoint, ValidationError


def to_labels(prob) -> np.ndarray:
    """Hard 0/1 labels from class-1 probabilities (threshold 0.5, strict)."""
    return (np.asarray(prob) > 0.5).astype(float)


class Predictor:
    kind = "abstract"
    task: Task

    def predict(self, x) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class RandomForestPredictor(Predictor):
    kind = "rf"

    def __init__(self, task, n_trees: int = 100, min_leaf: int = 5, seed: int = 0):
        self.task = Task.parse(task)
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.seed = seed
        self._forest = None

    def fit(self, x, y) -> "RandomForestPredictor":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[0] < 2:
            raise ValidationError("random forest needs at least 2 rows")
        if self.task is Task.CLASSIFICATION:
            forest = RandomForestClassifier(n_estimators=self.n_trees, min_samples_leaf=self.min_leaf,
                                            max_features="sqrt", random_state=self.seed)
        else:
            forest = RandomForestRegressor(n_estimators=self.n_trees, min_samples_leaf=self.min_leaf,
                                           max_features=1.0 / 3.0, random_state=self.seed)
        self._forest = forest.fit(x, y)
        return self

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0] == 0:
            return np.empty(0)
        if self.task is Task.REGRESSION:
            return self._forest.predict(x)
        classes = self._forest.classes_
        if classes.size == 1:
            return np.full(x.shape[0], float(classes[0]))
        # fraction of trees voting for class 1
        votes = np.zeros(x.shape[0])
        pos = int(np.flatnonzero(classes == 1.0)[0])
        for tree in self._forest.estimators_:
            votes += tree.predict(x) == pos
        return votes / len(self._forest.estimators_)

    def describe(self):
        return {"kind": self.kind, "n_trees": self.n_trees, "min_leaf": self.min_leaf, "seed": self.seed}


def fit_random_forest(x, y, task, n_trees: int = 100, seed: int = 0) -> RandomForestPredictor:
    return RandomForestPredictor(task, n_trees=n_trees, seed=seed).fit(x, y)


class GradientBoostingPredictor(Predictor):
    """Stagewise additive trees on the squared-error or log-loss gradient."""

    kind = "gb"

    def __init__(self, task, n_rounds: int = 100, learning_rate: float = 0.1,
                 max_depth: int = 3, seed: int = 0):
        self.task = Task.parse(task)
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.seed = seed
        self.init_ = 0.0
        self.stages_: list = []
        self.train_loss_: list[float] = []

    def _loss(self, y, f):
        if self.task is Task.CLASSIFICATION:
            return float(np.mean(np.logaddexp(0.0, f) - y * f))
        return float(np.mean((y - f) ** 2))

    def fit(self, x, y) -> "GradientBoostingPredictor":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.task is Task.CLASSIFICATION:
            rate = np.clip(y.mean(), 1e-6, 1 - 1e-6)
            self.init_ = float(np.log(rate / (1 - rate)))
        else:
            self.init_ = float(y.mean())
        f = np.full(y.shape[0], self.init_)
        self.stages_ = []
        self.train_loss_ = [self._loss(y, f)]
        for m in range(self.n_rounds):
            if self.task is Task.CLASSIFICATION:
                prob = 1.0 / (1.0 + np.exp(-f))
                resid = y - prob
                hess = np.maximum(prob * (1 - prob), 1e-12)
            else:
                resid = y - f
                hess = np.ones_like(y)
            if self.max_depth == 0:
                stage = ("const", float(resid.sum() / hess.sum()))
                step = np.full_like(f, stage[1])
            else:
                tree = DecisionTreeRegressor(max_depth=self.max_depth, random_state=self.seed + m)
                tree.fit(x, resid)
                leaves = tree.apply(x)
                values = {}
                for leaf in np.unique(leaves):
                    mask = leaves == leaf
                    values[int(leaf)] = float(resid[mask].sum() / hess[mask].sum())
                stage = ("tree", tree, values)
                step = np.array([values[int(v)] for v in leaves])
            f = f + self.learning_rate * step
            self.stages_.append(stage)
            self.train_loss_.append(self._loss(y, f))
        return self

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        f = np.full(x.shape[0], self.init_)
        if x.shape[0] == 0:
            return f
        for stage in self.stages_:
            if stage[0] == "const":
                f += self.learning_rate * stage[1]
            else:
                _, tree, values = stage
                leaves = tree.apply(x)
                f += self.learning_rate * np.array([values[int(v)] for v in leaves])
        return f

    def predict(self, x) -> np.ndarray:
        f = self.decision_function(x)
        if self.task is Task.CLASSIFICATION:
            return 1.0 / (1.0 + np.exp(-f))
        return f

    def describe(self):
        return {"kind": self.kind, "n_rounds": self.n_rounds, "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "seed": self.seed}


def fit_gradient_boosting(x, y, task, n_rounds: int = 100, learning_rate: float = 0.1,
                          max_depth: int = 3, seed: int = 0) -> GradientBoostingPredictor:
    return GradientBoostingPredictor(task, n_rounds, learning_rate, max_depth, seed).fit(x, y)


def row_key(row) -> bytes:
    return np.ascontiguousarray(row, dtype=np.float64).tobytes()


class ExternalTablePredictor(Predictor):
    """Exact-match lookup of predictions made by an outside tool."""

    kind = "external"

    def __init__(self, task, x, yhat):
        self.task = Task.parse(task)
        x = np.asarray(x, dtype=float)
        yhat = np.asarray(yhat, dtype=float)
        if x.shape[0] != yhat.shape[0]:
            raise RowCountMismatch(f"{x.shape[0]} x rows but {yhat.shape[0]} predictions")
        table: dict[bytes, float] = {}
        for i in range(x.shape[0]):
            k = row_key(x[i])
            prev = table.get(k)
            if prev is not None and prev != yhat[i]:
                raise ValidationError(f"row {i} duplicates an earlier x row with a different prediction")
            table[k] = float(yhat[i])
        self._table = table
        self.p = x.shape[1]

    def __len__(self):
        return len(self._table)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            v = self._table.get(row_key(x[i]))
            if v is None:
                raise UnknownQueryPoint(i, x[i])
            out[i] = v
        return out

    def describe(self):
        return {"kind": self.kind, "rows": len(self._table)}


def read_numeric_csv(path):
    """Header plus float matrix; values written with 17 significant digits round-trip exactly."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in r] for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, arr


def write_numeric_csv(path, header, arr) -> None:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in arr:
            w.writerow([repr(float(v)) for v in row])


def import_external_predictions(x_file, yhat_file, task) -> ExternalTablePredictor:
    _, x = read_numeric_csv(x_file)
    _, yhat = read_numeric_csv(yhat_file)
    if yhat.shape[1] != 1:
        raise ValidationError(f"{yhat_file}: expected a single prediction column")
    return ExternalTablePredictor(task, x, yhat[:, 0])


@dataclass
class RecordingPredictor(Predictor):
    """Stand-in that answers every query with a constant and remembers the query rows.

    Running the pipeline once with this predictor enumerates every point an
    external model will be asked about (the queried points never depend on
    the answers).
    """

    task: Task
    value: float = 0.0
    kind: str = "external"
    queries: list = field(default_factory=list)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0]:
            self.queries.append(x.copy())
        return np.full(x.shape[0], self.value)

    def unique_queries(self) -> np.ndarray:
        if not self.queries:
            return np.empty((0, 0))
        seen, rows = set(), []
        for block in self.queries:
            for r in block:
                k = row_key(r)
                if k not in seen:
                    seen.add(k)
                    rows.append(r)
        return np.array(rows)
