"""MLM-EPIC: cell models merged into regions by average-linkage clustering.

Regions (EPICs) are unions of cells. A query point goes to its nearest cell
centroid in standardised space and is predicted by that cell's region model.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .cosupervision import CoSupervised, nearest_cell
from .data import ScalingParams, Task, fold_ids
from .exceptions import DimensionMismatch
from .linear import LinearModel
from .pruning import first_min, loss_per_row
from .tree import capped, fit_node_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Merge:
    a: tuple
    b: tuple
    height: float


def average_linkage(D) -> list[Merge]:
    """Full merge history under average linkage; ties merge the lowest index pair.

    Clusters are ordered by their smallest cell id. Heights never decrease.
    """
    Dc = capped(D)
    clusters = [(i,) for i in range(Dc.shape[0])]
    link = Dc.copy()
    np.fill_diagonal(link, np.inf)
    merges = []
    while len(clusters) > 1:
        m = len(clusters)
        i, j = divmod(int(np.argmin(link[:m, :m])), m)  # row-major: lowest (i, j) among ties
        i, j = min(i, j), max(i, j)
        h = float(link[i, j])
        if merges:
            assert h >= merges[-1].height * (1 - 1e-9) - 1e-12, "average-linkage heights decreased"
        a, b = clusters[i], clusters[j]
        merges.append(Merge(a, b, h))
        na, nb = len(a), len(b)
        row = (na * link[i, :m] + nb * link[j, :m]) / (na + nb)
        link[i, :m] = row
        link[:m, i] = row
        link[i, i] = np.inf
        link = np.delete(np.delete(link, j, axis=0), j, axis=1)
        clusters[i] = tuple(sorted(a + b))
        del clusters[j]
        order = sorted(range(len(clusters)), key=lambda k: clusters[k][0])
        clusters = [clusters[k] for k in order]
        link = link[np.ix_(order, order)]
    return merges


def clusters_at(merges: list[Merge], n_cells: int, k: int) -> list[tuple]:
    """Clusters left after the first ``n_cells - k`` merges, ordered by smallest id."""
    if not 1 <= k <= n_cells:
        raise ValueError(f"need 1 <= k <= {n_cells}, got {k}")
    clusters = {(i,) for i in range(n_cells)}
    for mg in merges[: n_cells - k]:
        clusters.discard(mg.a)
        clusters.discard(mg.b)
        clusters.add(tuple(sorted(mg.a + mg.b)))
    return sorted(clusters, key=lambda c: c[0])


def agglomerate_epics(D, k_epics: int) -> list[tuple]:
    """Cell ids of each EPIC when merging stops at ``k_epics`` clusters."""
    return clusters_at(average_linkage(D), np.asarray(D).shape[0], k_epics)


@dataclass
class EpicModel:
    epics: list            # tuple of cell ids per EPIC
    models: list           # LinearModel per EPIC
    cell_centroids: np.ndarray
    scaling: ScalingParams
    task: Task
    column_names: tuple = ()

    @property
    def n_epics(self) -> int:
        return len(self.epics)

    @property
    def cell_to_epic(self) -> np.ndarray:
        out = np.empty(self.cell_centroids.shape[0], dtype=np.intp)
        for e, cells in enumerate(self.epics):
            out[list(cells)] = e
        return out

    def assign(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or (x.shape[0] and x.shape[1] != self.cell_centroids.shape[1]):
            raise DimensionMismatch(f"model expects {self.cell_centroids.shape[1]} columns, got {x.shape}")
        return self.cell_to_epic[nearest_cell(x, self.cell_centroids, self.scaling)]

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        which = self.assign(x)
        out = np.empty(x.shape[0])
        for e in np.unique(which):
            m = which == e
            out[m] = self.models[e].predict(x[m])
        return out

    def to_dict(self) -> dict:
        return {"kind": "mlm-epic", "task": self.task.value, "column_names": list(self.column_names),
                "epics": [list(c) for c in self.epics], "models": [m.to_dict() for m in self.models],
                "cell_centroids": self.cell_centroids.tolist(), "scaling": self.scaling.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "EpicModel":
        return cls([tuple(c) for c in d["epics"]], [LinearModel.from_dict(m) for m in d["models"]],
                   np.asarray(d["cell_centroids"], dtype=float), ScalingParams.from_dict(d["scaling"]),
                   Task.parse(d["task"]), tuple(d.get("column_names", ())))

    def write_report(self, path) -> None:
        """One row per cell: cell id, EPIC id and centroid coordinates."""
        names = list(self.column_names) or [f"X{j}" for j in range(self.cell_centroids.shape[1])]
        c2e = self.cell_to_epic
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "epic"] + names)
            for j, c in enumerate(self.cell_centroids):
                w.writerow([j, int(c2e[j])] + [repr(float(v)) for v in c])


def _pool(cs: CoSupervised, cells, rows_mask=None):
    xs, ys = [], []
    for j in cells:
        c = cs.cells[j]
        rows = c.member_rows if rows_mask is None else c.member_rows[rows_mask[c.member_rows]]
        xs.append(cs.x[rows])
        ys.append(cs.y[rows])
        if c.augmented_x is not None and c.augmented_x.shape[0]:
            xs.append(c.augmented_x)
            ys.append(c.augmented_y)
    return np.vstack(xs), np.concatenate(ys)


def fit_epic_models(epics, cs: CoSupervised, *, folds: int = 5, seed: int = 0) -> EpicModel:
    """Fit one model per EPIC on the pooled original and augmented points of its cells."""
    names = cs.column_names or None
    models = []
    for cells in epics:
        px, py = _pool(cs, cells)
        models.append(fit_node_model(px, py, cs.task, folds=folds, seed=seed, column_names=names))
    centroids = np.array([c.centroid for c in cs.cells])
    return EpicModel(list(epics), models, centroids, cs.scaling, cs.task, cs.column_names)


def predict_epic(model: EpicModel, x) -> np.ndarray:
    return model.predict(x)


@dataclass(frozen=True)
class EpicCountSelection:
    k: int
    candidates: tuple
    cv_errors: tuple


def choose_epic_count(cs: CoSupervised, D, candidates, *, folds: int = 10, seed: int = 0,
                      lasso_folds: int = 5, fold_cs=None) -> EpicCountSelection:
    """Region count with the lowest cross-validated error; ties go to the smaller count.

    The merge tree is computed once. In each fold the region models are
    refitted on the fold's training rows plus all augmented points, and
    held-out rows are routed through their nearest centroid.
    ``fold_cs(train_rows)``, when given, returns the co-supervised data whose
    augmented labels that fold should use.
    """
    J = len(cs.cells)
    kept = []
    for k in sorted(set(int(k) for k in candidates)):
        if 1 <= k <= J:
            kept.append(k)
        else:
            log.warning("EPIC count %d skipped (have %d cells)", k, J)
    if not kept:
        raise ValueError("no usable EPIC count candidates")
    if len(kept) == 1:
        return EpicCountSelection(kept[0], tuple(kept), (float("nan"),))
    merges = average_linkage(D)
    task = cs.task
    centroids = np.array([c.centroid for c in cs.cells])
    n = cs.x.shape[0]
    fid = fold_ids(n, folds, seed, cs.y if task is Task.CLASSIFICATION else None)
    errors = np.zeros((folds, len(kept)))
    for f in range(folds):
        train = fid != f
        hold = np.flatnonzero(~train)
        cell_of = nearest_cell(cs.x[hold], centroids, cs.scaling)
        fcs = cs if fold_cs is None else fold_cs(np.flatnonzero(train))
        for ki, k in enumerate(kept):
            epics = clusters_at(merges, J, k)
            pred = np.empty(hold.size)
            for cells in epics:
                m = np.isin(cell_of, cells)
                if not m.any():
                    continue
                px, py = _pool(fcs, cells, train)
                model = fit_node_model(px, py, task, folds=lasso_folds, seed=seed)
                pred[m] = model.predict(cs.x[hold[m]])
            errors[f, ki] = np.mean(loss_per_row(task, cs.y[hold], pred))
    mean = errors.mean(axis=0)
    best = first_min(mean)
    return EpicCountSelection(kept[best], tuple(kept), tuple(float(e) for e in mean))
