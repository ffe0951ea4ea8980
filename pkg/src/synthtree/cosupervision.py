"""Cells, black-box co-supervision and the initial mixture of cell models.

Training rows are clustered by k-means on standardised features. Each cell
is augmented with Gaussian draws around its centroid, labelled by the
black box that is most accurate on the cell, and gets its own L1 model.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .blackbox import to_labels
from .data import ScalingParams, Task
from .linear import LinearModel, fit_cv

VARIANCE_FLOOR = 1e-6
N_SIM = 100
KMEANS_RESTARTS = 25


# ---------------------------------------------------------------------------
# k-means


def _sq_dists(z, centers):
    d = (z * z).sum(1)[:, None] - 2.0 * z @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(z, k, rng):
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    first = int(rng.integers(n))
    centers[0] = z[first]
    chosen = {first}
    closest = ((z - z[first]) ** 2).sum(1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen center
            rest = np.array([i for i in range(n) if i not in chosen])
            idx = int(rng.choice(rest))
        chosen.add(idx)
        centers[c] = z[idx]
        closest = np.minimum(closest, ((z - z[idx]) ** 2).sum(1))
    return centers


def _repair_empty(z, labels, centers, k):
    """Give each empty cluster the point farthest from its center in the largest cluster."""
    counts = np.bincount(labels, minlength=k)
    for e in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(((z[members] - centers[big]) ** 2).sum(1)))]
        labels[far] = e
        counts[big] -= 1
        counts[e] += 1
    return labels


def _centers_of(z, labels, k):
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, z.shape[1]))
    np.add.at(sums, labels, z)
    return sums / counts[:, None]


def _objective(z, labels, centers):
    return float(((z - centers[labels]) ** 2).sum())


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    history: list


def lloyd(z, centers, max_iter: int = 300, check: bool = True) -> KMeansResult:
    """Lloyd iterations from the given centers; asserts a non-increasing objective."""
    k = centers.shape[0]
    labels = np.argmin(_sq_dists(z, centers), axis=1)
    labels = _repair_empty(z, labels, centers, k)
    centers = _centers_of(z, labels, k)
    history = [_objective(z, labels, centers)]
    for _ in range(max_iter):
        d = _sq_dists(z, centers)
        new = np.argmin(d, axis=1)
        # keep the current label when it is tied for nearest
        rows = np.arange(z.shape[0])
        new = np.where(d[rows, labels] <= d[rows, new], labels, new)
        new = _repair_empty(z, new, centers, k)
        if np.array_equal(new, labels):
            break
        labels = new
        centers = _centers_of(z, labels, k)
        obj = _objective(z, labels, centers)
        if check:
            assert obj <= history[-1] * (1 + 1e-9) + 1e-12, "k-means objective increased"
        history.append(obj)
    return KMeansResult(labels, centers, history[-1], history)


def kmeans(z, k: int, seed: int = 0, n_init: int = KMEANS_RESTARTS, max_iter: int = 300) -> KMeansResult:
    """Best of ``n_init`` k-means++ seeded Lloyd runs."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init if k > 1 else 1):
        res = lloyd(z, kmeans_pp_init(z, k, rng), max_iter)
        if best is None or res.objective < best.objective:
            best = res
    return best


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class Cell:
    id: int
    member_rows: np.ndarray
    centroid: np.ndarray
    variances: np.ndarray
    chosen_predictor: int | None = None
    augmented_x: np.ndarray | None = None
    augmented_y: np.ndarray | None = None
    local_model: LinearModel | None = None

    @property
    def n_members(self) -> int:
        return int(self.member_rows.size)

    def pooled(self, x, y):
        """Member rows followed by augmented rows."""
        xs = [x[self.member_rows]]
        ys = [y[self.member_rows]]
        if self.augmented_x is not None and self.augmented_x.shape[0]:
            xs.append(self.augmented_x)
            ys.append(self.augmented_y)
        return np.vstack(xs), np.concatenate(ys)


def make_cells(x, labels, k: int) -> list[Cell]:
    cells = []
    for j in range(k):
        rows = np.flatnonzero(labels == j)
        pts = x[rows]
        var = pts.var(axis=0, ddof=1) if rows.size > 1 else np.zeros(x.shape[1])
        cells.append(Cell(j, rows, pts.mean(axis=0), var))
    return cells


def kmeans_cells(x, j_cells: int, seed: int = 0, scaling: ScalingParams | None = None,
                 n_init: int = KMEANS_RESTARTS) -> list[Cell]:
    """Cluster rows of ``x`` (input units) into cells using standardised distances."""
    x = np.asarray(x, dtype=float)
    scaling = scaling or ScalingParams.fit(x)
    res = kmeans(scaling.apply(x), j_cells, seed, n_init)
    return make_cells(x, res.labels, j_cells)


def predictor_scores(task, y, preds) -> np.ndarray:
    """Per-row score (higher is better): negative squared error or 0/1 correctness."""
    if task is Task.CLASSIFICATION:
        return (to_labels(preds) == y).astype(float)
    return -((y - preds) ** 2)


def select_best_predictor_per_cell(cells, predictors, x, y, task, predictions=None) -> list[Cell]:
    """Pick, for each cell, the predictor most accurate on the cell's rows.

    Exact ties go to the predictor with the better whole-training score, then
    to the lowest index.
    """
    task = Task.parse(task)
    if predictions is None:
        predictions = [p.predict(x) for p in predictors]
    scores = np.array([predictor_scores(task, y, pr) for pr in predictions])
    global_score = scores.mean(axis=1)
    out = []
    for cell in cells:
        cell_score = scores[:, cell.member_rows].mean(axis=1)
        order = sorted(range(len(predictors)), key=lambda l: (-cell_score[l], -global_score[l], l))
        out.append(replace(cell, chosen_predictor=order[0]))
    return out


def sample_cell_points(cell: Cell, n_sim: int, seed: int, scaling: ScalingParams,
                       dummy_blocks=(), floor: float = VARIANCE_FLOOR) -> np.ndarray:
    """Gaussian draws around the centroid with the cell's per-dimension variances.

    Variances are floored at ``floor`` in standardised units; one-hot blocks
    are snapped to the nearest valid pattern.
    """
    p = cell.centroid.shape[0]
    if n_sim <= 0:
        return np.empty((0, p))
    rng = np.random.default_rng([seed, cell.id])
    sd = np.sqrt(np.maximum(cell.variances, floor * scaling.stddevs ** 2))
    pts = cell.centroid + rng.standard_normal((n_sim, p)) * sd
    for block in dummy_blocks:
        hot = block[np.argmax(pts[:, block], axis=1)]
        pts[:, block] = 0.0
        pts[np.arange(n_sim), hot] = 1.0
    return pts


def augment_cell(cell: Cell, n_sim: int, predictor, seed: int, scaling: ScalingParams,
                 dummy_blocks=(), task=Task.REGRESSION) -> Cell:
    if n_sim <= 0:
        return cell
    pts = sample_cell_points(cell, n_sim, seed, scaling, dummy_blocks)
    yhat = np.asarray(predictor.predict(pts), dtype=float)
    if Task.parse(task) is Task.CLASSIFICATION:
        yhat = to_labels(yhat)
    return replace(cell, augmented_x=pts, augmented_y=yhat)


def relabel_augmented(cells, predictors, task) -> list[Cell]:
    """Same augmented points, labelled again by each cell's chosen predictor from ``predictors``.

    Cross-validation uses this with black boxes refitted on the fold's
    training rows, so held-out targets never reach the augmented labels.
    """
    out = []
    for c in cells:
        if c.augmented_x is None or not c.augmented_x.shape[0]:
            out.append(c)
            continue
        yhat = np.asarray(predictors[c.chosen_predictor].predict(c.augmented_x), dtype=float)
        if Task.parse(task) is Task.CLASSIFICATION:
            yhat = to_labels(yhat)
        out.append(replace(c, augmented_y=yhat))
    return out


def fit_cell_models(cells, x, y, task, *, folds: int = 5, seed: int = 0, column_names=None) -> list[Cell]:
    out = []
    for cell in cells:
        px, py = cell.pooled(x, y)
        model = fit_cv(px, py, task, folds=folds, seed=seed, column_names=column_names)
        out.append(replace(cell, local_model=model))
    return out


def nearest_cell(x, centroids, scaling: ScalingParams) -> np.ndarray:
    """Index of the nearest centroid in standardised space; ties go to the lower index."""
    z = scaling.apply(np.asarray(x, dtype=float))
    c = scaling.apply(centroids)
    return np.argmin(_sq_dists(z, c), axis=1)


@dataclass(frozen=True)
class InitialMlm:
    cells: tuple
    scaling: ScalingParams
    task: Task

    @property
    def centroids(self) -> np.ndarray:
        return np.array([c.centroid for c in self.cells])

    def assign(self, x) -> np.ndarray:
        return nearest_cell(x, self.centroids, self.scaling)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        which = self.assign(x)
        out = np.empty(x.shape[0])
        for j in np.unique(which):
            m = which == j
            out[m] = self.cells[j].local_model.predict(x[m])
        return out


@dataclass
class CoSupervised:
    """Everything the region-forming step needs: fitted cells plus the training data."""

    x: np.ndarray
    y: np.ndarray
    task: Task
    cells: list
    scaling: ScalingParams
    column_names: tuple
    dummy_blocks: list

    @property
    def initial_mlm(self) -> InitialMlm:
        return InitialMlm(tuple(self.cells), self.scaling, self.task)

    def pooled_all(self):
        """All original rows then every cell's augmented rows; also returns the cell of each augmented row."""
        xs, ys, owner = [self.x], [self.y], [np.full(self.x.shape[0], -1)]
        for c in self.cells:
            if c.augmented_x is not None and c.augmented_x.shape[0]:
                xs.append(c.augmented_x)
                ys.append(c.augmented_y)
                owner.append(np.full(c.augmented_x.shape[0], c.id))
        return np.vstack(xs), np.concatenate(ys), np.concatenate(owner)


def cosupervise(x, y, task, predictors, j_cells: int, *, n_sim: int = N_SIM, seed: int = 0,
                dummy_blocks=(), column_names=None, scaling=None, predictions=None,
                lasso_folds: int = 5, n_init: int = KMEANS_RESTARTS) -> CoSupervised:
    """Cells -> best predictor per cell -> augmentation -> cell models."""
    task = Task.parse(task)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scaling = scaling or ScalingParams.fit(x)
    cells = kmeans_cells(x, j_cells, seed, scaling, n_init)
    cells = select_best_predictor_per_cell(cells, predictors, x, y, task, predictions)
    cells = [augment_cell(c, n_sim, predictors[c.chosen_predictor], seed, scaling, dummy_blocks, task)
             for c in cells]
    cells = fit_cell_models(cells, x, y, task, folds=lasso_folds, seed=seed, column_names=column_names)
    return CoSupervised(x, y, task, cells, scaling, tuple(column_names or ()), list(dummy_blocks))
