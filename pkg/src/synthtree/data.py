"""Tabular data loading, dummy encoding, splitting and scaling.

Everything downstream works on a purely numeric matrix. Nominal columns are
kept as strings by :func:`load_csv` and expanded by :func:`dummy_encode`.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .exceptions import (DegenerateSplit, EmptyDataset, MissingTarget,
                         RaggedRows, TooManyLevels, ValidationError)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


class Task(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        v = str(value).strip().lower()
        if v in ("regression", "reg"):
            return cls.REGRESSION
        if v in ("classification", "binary", "clf"):
            return cls.CLASSIFICATION
        raise ValidationError(f"unknown task {value!r}")


@dataclass(frozen=True)
class ColumnKind:
    """Provenance of an encoded column; ``level`` is None for numeric columns."""

    origin: str
    level: str | None = None

    @property
    def is_dummy(self) -> bool:
        return self.level is not None


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    task: Task
    column_names: tuple
    column_kinds: tuple
    # nominal columns awaiting encoding, name -> array of strings
    nominal: dict = field(default_factory=dict)
    # original column order (numeric and nominal), used by dummy_encode
    source_columns: tuple = ()
    n_dropped: int = 0
    medians: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        nominal = {k: v[rows] for k, v in self.nominal.items()}
        return replace(self, x=self.x[rows], y=self.y[rows], nominal=nominal)

    def dummy_blocks(self) -> list[np.ndarray]:
        """Column index arrays of each one-hot block."""
        blocks: dict[str, list[int]] = {}
        for j, kind in enumerate(self.column_kinds):
            if kind.is_dummy:
                blocks.setdefault(kind.origin, []).append(j)
        return [np.array(v, dtype=np.intp) for v in blocks.values()]

    def levels(self) -> dict:
        out: dict[str, list[str]] = {}
        for kind in self.column_kinds:
            if kind.is_dummy:
                out.setdefault(kind.origin, []).append(kind.level)
        return out


def _parse_float(token: str) -> float | None:
    t = token.strip()
    if t.lower() in MISSING_TOKENS:
        return None
    try:
        v = float(t)
    except ValueError:
        return None
    if not math.isfinite(v):
        return None
    return v


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: file has no header row") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RaggedRows(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(row)
    return header, rows


def load_csv(path, target_column: str | None, task, *, medians: dict | None = None,
             numeric_columns=None, nominal_columns=None, ignore_columns=()) -> Dataset:
    """Read a CSV file into a :class:`Dataset`.

    Rows whose target is missing or unparseable are dropped and counted in
    ``n_dropped``. A predictor column is numeric when every non-missing value
    parses as a float; otherwise it is kept as a nominal string column.
    Missing numeric values are filled with ``medians`` (from a training set)
    or, when not given, with the column median of this file.

    ``target_column=None`` loads a file without a response (prediction input);
    ``y`` is then all-NaN. Columns in ``ignore_columns`` are skipped.
    """
    task = Task.parse(task)
    header, rows = _read_rows(path)
    if target_column is not None and target_column not in header:
        raise MissingTarget(f"target column {target_column!r} not in {header}")
    t_idx = header.index(target_column) if target_column is not None else None

    keep, y = [], []
    for row in rows:
        if t_idx is None:
            keep.append(row)
            continue
        v = _parse_float(row[t_idx])
        if v is None:
            continue
        if task is Task.CLASSIFICATION and v not in (0.0, 1.0):
            raise ValidationError(f"classification target must be 0/1, got {row[t_idx]!r}")
        keep.append(row)
        y.append(v)
    n_dropped = len(rows) - len(keep)
    if not keep:
        raise EmptyDataset(f"{path}: no usable rows")

    skip = set(ignore_columns)
    pred_cols = [c for i, c in enumerate(header) if i != t_idx and c not in skip]
    numeric, nominal = {}, {}
    medians = dict(medians or {})
    forced_numeric = set(numeric_columns or ())
    forced_nominal = set(nominal_columns or ())
    for c in pred_cols:
        i = header.index(c)
        raw = [r[i] for r in keep]
        vals = [_parse_float(t) for t in raw]
        parsed_all = all(v is not None or t.strip().lower() in MISSING_TOKENS
                         for v, t in zip(vals, raw))
        is_numeric = (c in forced_numeric) or (parsed_all and c not in forced_nominal)
        if is_numeric:
            arr = np.array([np.nan if v is None else v for v in vals], dtype=float)
            if c not in medians:
                finite = arr[~np.isnan(arr)]
                medians[c] = float(np.median(finite)) if finite.size else 0.0
            arr[np.isnan(arr)] = medians[c]
            numeric[c] = arr
        else:
            nominal[c] = np.array([t.strip() for t in raw], dtype=object)

    num_names = [c for c in pred_cols if c in numeric]
    n = len(keep)
    x = np.column_stack([numeric[c] for c in num_names]) if num_names else np.empty((n, 0))
    y_arr = np.asarray(y, dtype=float) if t_idx is not None else np.full(n, np.nan)
    ds = Dataset(x=x, y=y_arr, task=task, column_names=tuple(num_names),
                 column_kinds=tuple(ColumnKind(c) for c in num_names), nominal=nominal,
                 source_columns=tuple(pred_cols), n_dropped=n_dropped,
                 medians={c: medians[c] for c in num_names})
    if ds.p + len(nominal) < 1:
        raise EmptyDataset(f"{path}: no predictor columns")
    return ds


def dummy_encode(dataset: Dataset, *, levels: dict | None = None, max_levels: int = 64) -> Dataset:
    """Expand nominal columns into full one-hot blocks (m columns for m levels).

    ``levels`` pins the level list per column (use the training set's levels
    when encoding test data); unseen levels encode as an all-zero block.
    """
    if not dataset.nominal:
        return dataset
    levels = dict(levels or {})
    num_idx = {c: j for j, c in enumerate(dataset.column_names)}
    cols, names, kinds = [], [], []
    for c in dataset.source_columns:
        if c in dataset.nominal:
            values = dataset.nominal[c]
            lv = levels.get(c)
            if lv is None:
                lv = sorted(set(values.tolist()))
            if len(lv) > max_levels:
                raise TooManyLevels(f"column {c!r} has {len(lv)} levels (cap {max_levels})")
            for level in lv:
                cols.append((values == level).astype(float))
                names.append(f"{c}={level}")
                kinds.append(ColumnKind(c, level))
        elif c in num_idx:
            cols.append(dataset.x[:, num_idx[c]])
            names.append(c)
            kinds.append(ColumnKind(c))
    x = np.column_stack(cols) if cols else np.empty((dataset.n, 0))
    return replace(dataset, x=x, column_names=tuple(names), column_kinds=tuple(kinds),
                   nominal={})


def split_indices(y, task, test_fraction: float, seed: int):
    """Index arrays ``(train, test)``; stratified by class for classification."""
    task = Task.parse(task)
    y = np.asarray(y)
    n = y.shape[0]
    if not 0.0 < test_fraction < 1.0:
        raise DegenerateSplit(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if n * test_fraction < 1:
        raise DegenerateSplit(f"n={n} with test_fraction={test_fraction} leaves an empty test set")
    rng = np.random.default_rng(seed)
    if task is Task.CLASSIFICATION:
        test = []
        for cls in (0.0, 1.0):
            idx = np.flatnonzero(y == cls)
            idx = idx[rng.permutation(idx.size)]
            test.append(idx[: int(round(idx.size * test_fraction))])
        test = np.sort(np.concatenate(test))
    else:
        perm = rng.permutation(n)
        test = np.sort(perm[: max(1, int(round(n * test_fraction)))])
    mask = np.zeros(n, dtype=bool)
    mask[test] = True
    train = np.flatnonzero(~mask)
    if train.size == 0 or test.size == 0:
        raise DegenerateSplit("split leaves one side empty")
    if task is Task.CLASSIFICATION and np.unique(y[train]).size < 2:
        raise DegenerateSplit("training side is single-class")
    return train, test


def train_test_split(dataset: Dataset, test_fraction: float, seed: int):
    train, test = split_indices(dataset.y, dataset.task, test_fraction, seed)
    return dataset.subset(train), dataset.subset(test)


@dataclass(frozen=True)
class ScalingParams:
    means: np.ndarray
    stddevs: np.ndarray

    @classmethod
    def fit(cls, x) -> "ScalingParams":
        x = np.asarray(x, dtype=float)
        means = x.mean(axis=0)
        if x.shape[0] > 1:
            sd = x.std(axis=0, ddof=1)
        else:
            sd = np.zeros(x.shape[1])
        sd = np.where(sd > 0, sd, 1.0)
        return cls(means=means, stddevs=sd)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.means) / self.stddevs

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.stddevs + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stddevs": self.stddevs.tolist()}

    @classmethod
    def from_dict(cls, d) -> "ScalingParams":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["stddevs"], dtype=float))


def standardize(dataset: Dataset):
    params = ScalingParams.fit(dataset.x)
    return replace(dataset, x=params.apply(dataset.x)), params


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, entries: dict) -> None:
    """Plain-text ``key = value`` manifest; keys written in sorted order."""
    lines = [f"{k} = {entries[k]}" for k in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def fold_ids(n: int, folds: int, seed: int, y=None) -> np.ndarray:
    """Fold label in ``0..folds-1`` for each row; class-stratified when ``y`` is given."""
    if folds < 2:
        raise ValidationError(f"folds must be >= 2, got {folds}")
    if n < folds:
        raise ValidationError(f"cannot make {folds} folds from {n} rows")
    rng = np.random.default_rng(seed)
    out = np.empty(n, dtype=np.intp)
    if y is None:
        perm = rng.permutation(n)
        out[perm] = np.arange(n) % folds
        return out
    y = np.asarray(y)
    offset = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        out[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return out
