"""Metrics, cross-validation, the five-split protocol and coefficient reports."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Task, fold_ids
from .exceptions import LengthMismatch, SingleClass
from .linear import fit_fixed

EXCLUDED = "-"


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise LengthMismatch(f"y has shape {y.shape}, predictions {yhat.shape}")
    if y.size == 0:
        raise LengthMismatch("rmse needs at least one value")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def _midranks(v):
    """1-based ranks with ties sharing their average rank."""
    _, inv, counts = np.unique(v, return_inverse=True, return_counts=True)
    start = np.cumsum(counts) - counts
    return (start + (counts + 1) / 2.0)[inv]


def auc(y, scores) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    y = np.asarray(y, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if y.shape != scores.shape:
        raise LengthMismatch(f"y has shape {y.shape}, scores {scores.shape}")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    u = _midranks(scores)[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def score(task, y, pred) -> float:
    """Headline metric: RMSE for regression, AUC for classification."""
    return auc(y, pred) if Task.parse(task) is Task.CLASSIFICATION else rmse(y, pred)


def higher_is_better(task) -> bool:
    return Task.parse(task) is Task.CLASSIFICATION


def overfit_gap(train_metric: float, test_metric: float, task) -> float:
    """AUC_train - AUC_test, or RMSE_test - RMSE_train."""
    if Task.parse(task) is Task.CLASSIFICATION:
        return train_metric - test_metric
    return test_metric - train_metric


def cross_validate(fit_predict, x, y, task, folds: int = 10, seed: int = 0, metric=None) -> list[float]:
    """Held-out metric per fold; ``fit_predict(x_tr, y_tr, x_te)`` returns predictions for ``x_te``."""
    task = Task.parse(task)
    metric = metric or (lambda yt, p: score(task, yt, p))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fid = fold_ids(len(y), folds, seed, y if task is Task.CLASSIFICATION else None)
    out = []
    for f in range(folds):
        tr, te = fid != f, fid == f
        out.append(float(metric(y[te], fit_predict(x[tr], y[tr], x[te]))))
    return out


@dataclass
class EvalReport:
    """Per-split train/test metrics for one method plus summary statistics."""

    method: str
    metric: str
    task: Task
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)   # per-split lists, e.g. leaf counts

    def add(self, train_metric, test_metric, **extras):
        self.train.append(float(train_metric))
        self.test.append(float(test_metric))
        for k, v in extras.items():
            self.extras.setdefault(k, []).append(v)

    @property
    def mean(self) -> float:
        return float(np.mean(self.test))

    @property
    def sd(self) -> float:
        return float(np.std(self.test, ddof=1)) if len(self.test) > 1 else 0.0

    @property
    def train_mean(self) -> float:
        return float(np.mean(self.train))

    @property
    def gap(self) -> float:
        return overfit_gap(self.train_mean, self.mean, self.task)

    def to_dict(self) -> dict:
        return {"method": self.method, "metric": self.metric, "task": self.task.value,
                "train": self.train, "test": self.test, "mean": self.mean, "sd": self.sd,
                "train_mean": self.train_mean, "gap": self.gap, **self.extras}


def region_rows(model, x) -> tuple[list, np.ndarray]:
    """Regions of a SynthTree or EPIC model (label, LinearModel) and the region index of each row."""
    if hasattr(model, "leaves"):
        leaves = model.leaves()
        index = {nd.id: k for k, nd in enumerate(leaves)}
        reached = model.route(x) if len(x) else np.empty(0, dtype=np.intp)
        regions = [(f"ELC {k + 1}", nd.model) for k, nd in enumerate(leaves)]
        return regions, np.array([index[int(u)] for u in reached], dtype=np.intp)
    regions = [(f"EPIC {k + 1}", m) for k, m in enumerate(model.models)]
    which = model.assign(x) if len(x) else np.empty(0, dtype=np.intp)
    return regions, which


def coefficient_table(model) -> tuple[list, list]:
    """Header and rows (one per region): intercept then each coefficient, ``-`` when excluded."""
    regions, _ = region_rows(model, np.empty((0, 0)))
    names = list(model.column_names) or [f"X{j}" for j in range(regions[0][1].p)]
    rows = []
    for label, m in regions:
        rows.append([label, repr(float(m.intercept))] +
                    [EXCLUDED if c == 0 else repr(float(c)) for c in m.coefficients])
    return ["region", "intercept"] + names, rows


def coefficient_report(model, x, y, *, n_boot: int = 200, seed: int = 0, level: float = 0.95) -> list[dict]:
    """Coefficients per region with bootstrap percentile intervals.

    Each region's original rows are resampled ``n_boot`` times and refitted at
    the region model's penalty. Intercept-only regions report every variable
    as excluded and no interval.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    regions, which = region_rows(model, x)
    names = list(model.column_names) or [f"X{j}" for j in range(x.shape[1])]
    rng = np.random.default_rng(seed)
    lo_q, hi_q = 100 * (1 - level) / 2, 100 * (1 + level) / 2
    out = []
    for r, (label, m) in enumerate(regions):
        rows = np.flatnonzero(which == r)
        boot = None
        if m.n_active > 0 and rows.size >= 2 and math.isfinite(m.lam):
            boot = np.empty((n_boot, m.p))
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                for b in range(n_boot):
                    pick = rows[rng.integers(rows.size, size=rows.size)]
                    boot[b] = fit_fixed(x[pick], y[pick], model.task, m.lam).coefficients
            if caught:
                warnings.warn(f"{label}: {len(caught)} of {n_boot} bootstrap refits hit the sweep cap",
                              RuntimeWarning, stacklevel=2)
        for j, name in enumerate(names):
            c = float(m.coefficients[j])
            lo = hi = float("nan")
            if boot is not None:
                lo, hi = (float(v) for v in np.percentile(boot[:, j], [lo_q, hi_q]))
            out.append({"region": label, "variable": name, "coefficient": c, "excluded": c == 0.0,
                        "ci_low": lo, "ci_high": hi, "n_rows": int(rows.size)})
    return out


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_coefficient_report(path, report: list[dict]) -> None:
    header = ["region", "variable", "coefficient", "excluded", "ci_low", "ci_high", "n_rows"]
    rows = [[r["region"], r["variable"], repr(r["coefficient"]), int(r["excluded"]),
             repr(r["ci_low"]), repr(r["ci_high"]), r["n_rows"]] for r in report]
    write_rows_csv(path, header, rows)
