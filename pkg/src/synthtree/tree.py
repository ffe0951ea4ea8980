"""SynthTree: a decision tree grown over cell models instead of data points.

A node holds the cells whose centroids fall in it. Its impurity is the mean
pairwise distance between those cells' models; splits are single-variable
thresholds at midpoints between consecutive distinct centroid coordinates,
chosen greedily by impurity decrease. Leaves get a model fitted on every
original and augmented point routed to them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .blackbox import to_labels
from .data import Task
from .exceptions import DegenerateSplit, DimensionMismatch, EmptyPool
from .linear import LinearModel, fit_cv, intercept_only

log = logging.getLogger(__name__)

INF_CAP = 1e9
GOODNESS_TOL = 1e-12


# ---------------------------------------------------------------------------
# model distances


def model_distance_regression(g1: LinearModel, g2: LinearModel, pooled_x) -> float:
    """Mean squared gap between the two models' predictions over the pooled points."""
    pooled_x = np.asarray(pooled_x, dtype=float)
    if pooled_x.shape[0] == 0:
        raise EmptyPool("no points to compare models on")
    diff = g1.predict(pooled_x) - g2.predict(pooled_x)
    return float(np.mean(diff * diff))


def agreement_counts(labels1, labels2):
    a = np.asarray(labels1, dtype=bool)
    b = np.asarray(labels2, dtype=bool)
    return int(np.sum(a & b)), int(np.sum(a & ~b)), int(np.sum(~a & b))


def f1_disparity(tp: int, fp: int, fn: int) -> float:
    """``(fp + fn) / (2 tp)``; infinite when there are disagreements but no joint positives."""
    if tp > 0:
        return (fp + fn) / (2.0 * tp)
    return np.inf if fp + fn > 0 else 0.0


def model_distance_classification(g1: LinearModel, g2: LinearModel, pooled_x) -> float:
    pooled_x = np.asarray(pooled_x, dtype=float)
    if pooled_x.shape[0] == 0:
        raise EmptyPool("no points to compare models on")
    return f1_disparity(*agreement_counts(to_labels(g1.predict(pooled_x)),
                                          to_labels(g2.predict(pooled_x))))


def distance_matrix(models, pools, task) -> np.ndarray:
    """Pairwise model distances; ``pools[i]`` are the points model ``i`` was fitted on.

    Pair ``(i, j)`` is evaluated on the union of ``pools[i]`` and ``pools[j]``.
    Infinite classification distances are kept (capped later).
    """
    task = Task.parse(task)
    J = len(models)
    sizes = np.array([p.shape[0] for p in pools])
    if J == 0:
        return np.zeros((0, 0))
    X = np.vstack(pools)
    owner = np.repeat(np.arange(J), sizes)
    A = np.array([m.intercept for m in models])
    B = np.array([m.coefficients for m in models])
    eta = A[:, None] + B @ X.T
    if task is Task.REGRESSION:
        S = np.empty((J, J))
        for i in range(J):
            cols = owner == i
            diff = eta[:, cols] - eta[i, cols]
            S[i] = np.sum(diff * diff, axis=1)
        D = (S + S.T) / (sizes[:, None] + sizes[None, :])
    else:
        lab = np.vstack([to_labels(models[i].predict(X)) for i in range(J)])
        both = np.empty((J, J))
        ones = np.empty((J, J))
        for k in range(J):
            cols = owner == k
            Lk = lab[:, cols]
            both[k] = Lk @ lab[k, cols]
            ones[k] = Lk.sum(axis=1)
        tp = both + both.T
        diag = np.diag(ones)
        # disagreements from pool i plus from pool j
        dis = (diag[:, None] + ones - 2 * both) + (ones.T + diag[None, :] - 2 * both.T)
        with np.errstate(divide="ignore", invalid="ignore"):
            D = np.where(tp > 0, dis / (2 * np.maximum(tp, 1)), np.where(dis > 0, np.inf, 0.0))
    np.fill_diagonal(D, 0.0)
    return D


def capped(D) -> np.ndarray:
    return np.minimum(np.asarray(D, dtype=float), INF_CAP)


def node_impurity(D, ids) -> float:
    """Mean pairwise distance among the models in ``ids`` (0 for fewer than two)."""
    ids = np.asarray(ids, dtype=np.intp)
    m = ids.size
    if m < 2:
        return 0.0
    sub = capped(D)[np.ix_(ids, ids)]
    return float(np.sum(np.triu(sub, 1)) / (m * (m - 1) / 2))


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitCandidate:
    var: int
    threshold: float


def _midpoint(a, b):
    t = a + (b - a) / 2.0
    return a if t >= b else t


def enumerate_split_candidates(centroids) -> list[SplitCandidate]:
    """Midpoints between consecutive distinct centroid coordinates, per dimension."""
    centroids = np.asarray(centroids, dtype=float)
    out = []
    if centroids.shape[0] < 2:
        return out
    for j in range(centroids.shape[1]):
        vals = np.unique(centroids[:, j])
        out.extend(SplitCandidate(j, _midpoint(a, b)) for a, b in zip(vals[:-1], vals[1:]))
    return out


def split_cells(centroids, ids, candidate: SplitCandidate):
    ids = np.asarray(ids, dtype=np.intp)
    go_left = centroids[ids, candidate.var] <= candidate.threshold
    return ids[go_left], ids[~go_left]


def goodness_of_split(D, centroids, ids, candidate: SplitCandidate) -> float:
    """Impurity decrease ``D(t) - pL D(tL) - pR D(tR)`` with model-count proportions."""
    ids = np.asarray(ids, dtype=np.intp)
    left, right = split_cells(np.asarray(centroids, dtype=float), ids, candidate)
    if left.size == 0 or right.size == 0:
        raise DegenerateSplit(f"split {candidate} leaves one side empty")
    m = ids.size
    return (node_impurity(D, ids) - left.size / m * node_impurity(D, left)
            - right.size / m * node_impurity(D, right))


def _scored_candidates(Dc, centroids, ids):
    """All candidates of a node with their goodness, using prefix sums per dimension."""
    m = ids.size
    sub = Dc[np.ix_(ids, ids)]
    total_pairs = m * (m - 1) / 2
    d_parent = np.sum(np.triu(sub, 1)) / total_pairs
    out = []
    for j in range(centroids.shape[1]):
        vals = centroids[ids, j]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        cut = np.flatnonzero(sv[1:] > sv[:-1]) + 1  # left sizes with a distinct boundary
        if cut.size == 0:
            continue
        S = sub[np.ix_(order, order)]
        C = S.cumsum(0).cumsum(1)
        total = C[-1, -1]
        k = cut
        left_sum = C[k - 1, k - 1]
        right_sum = total + left_sum - 2 * C[k - 1, -1]
        lp = k * (k - 1) / 2.0
        rp = (m - k) * (m - k - 1) / 2.0
        d_left = np.where(lp > 0, left_sum / 2.0 / np.maximum(lp, 1), 0.0)
        d_right = np.where(rp > 0, right_sum / 2.0 / np.maximum(rp, 1), 0.0)
        g = d_parent - k / m * d_left - (m - k) / m * d_right
        for kk, gg in zip(k, g):
            out.append((float(gg), j, _midpoint(sv[kk - 1], sv[kk])))
    return d_parent, out


def best_split(D, centroids, ids):
    """Highest-goodness candidate; ties go to the lower variable, then lower threshold.

    Returns ``(candidate, goodness)`` or ``(None, 0.0)`` when there are no candidates.
    """
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size < 2:
        return None, 0.0
    _, scored = _scored_candidates(capped(D), np.asarray(centroids, dtype=float), ids)
    if not scored:
        return None, 0.0
    top = max(s[0] for s in scored)
    tol = GOODNESS_TOL * max(1.0, abs(top))
    g, j, t = min((s for s in scored if s[0] >= top - tol), key=lambda s: (s[1], s[2]))
    return SplitCandidate(j, t), g


# ---------------------------------------------------------------------------
# tree structure


@dataclass
class Node:
    id: int
    depth: int
    parent: int | None
    cell_ids: tuple
    split_var: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    goodness: float | None = None
    impurity: float = 0.0
    model: LinearModel | None = None
    n_fit: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class SynthTreeModel:
    nodes: list
    task: Task
    column_names: tuple = ()
    n_features: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def p(self) -> int:
        return self.n_features

    def leaves(self) -> list[Node]:
        return [nd for nd in self.nodes if nd.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.leaves())

    def internal(self) -> list[Node]:
        return [nd for nd in self.nodes if not nd.is_leaf]

    def children(self, t: int):
        nd = self.nodes[t]
        return () if nd.is_leaf else (nd.left, nd.right)

    def subtree(self, t: int) -> list[int]:
        out, stack = [], [t]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.children(u))
        return sorted(out)

    def subtree_leaves(self, t: int) -> list[int]:
        return [u for u in self.subtree(t) if self.nodes[u].is_leaf]

    def ancestors(self, t: int) -> list[int]:
        out = []
        u = self.nodes[t].parent
        while u is not None:
            out.append(u)
            u = self.nodes[u].parent
        return out

    def route(self, x, stop=None) -> np.ndarray:
        """Node reached by each row (go left iff ``x[var] <= threshold``).

        ``stop`` is a set of node ids treated as leaves.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or (x.shape[0] and x.shape[1] != self.p):
            raise DimensionMismatch(f"tree expects {self.p} columns, got shape {x.shape}")
        stop = stop or ()
        pos = np.zeros(x.shape[0], dtype=np.intp)
        for nd in self.nodes:  # parents precede children
            if nd.is_leaf or nd.id in stop:
                continue
            m = pos == nd.id
            if not m.any():
                continue
            go_left = x[m, nd.split_var] <= nd.threshold
            pos[m] = np.where(go_left, nd.left, nd.right)
        return pos

    def node_rows(self, x, stop=None) -> dict:
        """Row indices passing through each node."""
        reached = self.route(x, stop)
        rows = {nd.id: [] for nd in self.nodes}
        for leaf in np.unique(reached):
            idx = np.flatnonzero(reached == leaf)
            for u in [int(leaf)] + self.ancestors(int(leaf)):
                rows[u].append(idx)
        return {u: (np.sort(np.concatenate(v)) if v else np.empty(0, dtype=np.intp))
                for u, v in rows.items()}

    def model_at(self, t: int) -> LinearModel:
        """Model of node ``t``, or of its nearest ancestor that has one."""
        for u in [t] + self.ancestors(t):
            if self.nodes[u].model is not None:
                return self.nodes[u].model
        raise ValueError(f"no model on node {t} or its ancestors")

    def predict(self, x, stop=None) -> np.ndarray:
        """Leaf-model prediction; ``stop`` prunes the tree at the given nodes on the fly."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        reached = self.route(x, stop)
        out = np.empty(x.shape[0])
        for leaf in np.unique(reached):
            m = reached == leaf
            out[m] = self.model_at(int(leaf)).predict(x[m])
        return out

    def collapse(self, stop) -> "SynthTreeModel":
        """Copy with every node in ``stop`` turned into a leaf; ids are renumbered."""
        stop = set(stop)
        keep, queue = [], [0]
        while queue:
            u = queue.pop(0)
            keep.append(u)
            if u not in stop:
                queue.extend(self.children(u))
        keep.sort()
        new_id = {u: i for i, u in enumerate(keep)}
        nodes = []
        for u in keep:
            nd = self.nodes[u]
            leaf = nd.is_leaf or u in stop
            nodes.append(replace(
                nd, id=new_id[u], parent=None if nd.parent is None else new_id[nd.parent],
                split_var=None if leaf else nd.split_var, threshold=None if leaf else nd.threshold,
                left=None if leaf else new_id[nd.left], right=None if leaf else new_id[nd.right],
                goodness=None if leaf else nd.goodness))
        return SynthTreeModel(nodes, self.task, self.column_names, self.n_features, dict(self.meta))

    def truncate(self, depth: int) -> "SynthTreeModel":
        return self.collapse(nd.id for nd in self.nodes if nd.depth >= depth and not nd.is_leaf)

    # -- export ------------------------------------------------------------

    def _var_name(self, j):
        return self.column_names[j] if j < len(self.column_names) else f"X{j}"

    def to_dict(self) -> dict:
        nodes = []
        for nd in self.nodes:
            d = {"id": nd.id, "depth": nd.depth, "parent": nd.parent, "cells": list(nd.cell_ids)}
            if nd.is_leaf:
                d["model"] = nd.model.to_dict() if nd.model is not None else None
                d["n_fit"] = nd.n_fit
            else:
                d.update(split_var=nd.split_var, split_name=self._var_name(nd.split_var),
                         threshold=float(nd.threshold), left=nd.left, right=nd.right,
                         goodness=float(nd.goodness) if nd.goodness is not None else None)
            nodes.append(d)
        return {"kind": "synthtree", "task": self.task.value, "column_names": list(self.column_names),
                "n_features": self.n_features,
                "n_leaves": self.n_leaves, "depth": self.depth, "nodes": nodes}

    @classmethod
    def from_dict(cls, d) -> "SynthTreeModel":
        nodes = []
        for nd in d["nodes"]:
            model = nd.get("model")
            nodes.append(Node(id=nd["id"], depth=nd["depth"], parent=nd["parent"],
                              cell_ids=tuple(nd.get("cells", ())), split_var=nd.get("split_var"),
                              threshold=nd.get("threshold"), left=nd.get("left"), right=nd.get("right"),
                              goodness=nd.get("goodness"),
                              model=LinearModel.from_dict(model) if model else None,
                              n_fit=nd.get("n_fit", 0)))
        return cls(nodes, Task.parse(d["task"]), tuple(d.get("column_names", ())), int(d["n_features"]))

    def to_dot(self, x_eval=None, y_eval=None) -> str:
        """Graphviz source: split nodes show ``var ≤ threshold``; leaves show routed test accuracy when given."""
        stats = {}
        if x_eval is not None and y_eval is not None and len(y_eval):
            x_eval = np.asarray(x_eval, dtype=float)
            y_eval = np.asarray(y_eval, dtype=float)
            reached = self.route(x_eval)
            pred = self.predict(x_eval)
            for leaf in self.leaves():
                m = reached == leaf.id
                if not m.any():
                    continue
                if self.task is Task.CLASSIFICATION:
                    stats[leaf.id] = f"acc={np.mean(to_labels(pred[m]) == y_eval[m]):.3f} (n={m.sum()})"
                else:
                    stats[leaf.id] = f"rmse={np.sqrt(np.mean((pred[m] - y_eval[m]) ** 2)):.3f} (n={m.sum()})"
        lines = ["digraph SynthTree {", '  node [shape=box, fontname="Helvetica"];']
        leaf_no = {nd.id: k + 1 for k, nd in enumerate(self.leaves())}
        for nd in self.nodes:
            if nd.is_leaf:
                label = f"ELC {leaf_no[nd.id]}"
                if nd.id in stats:
                    label += "\\n" + stats[nd.id]
                lines.append(f'  n{nd.id} [label="{label}", style=rounded];')
            else:
                label = f"{self._var_name(nd.split_var)} ≤ {nd.threshold:.6g}"
                lines.append(f'  n{nd.id} [label="{label}"];')
        for nd in self.nodes:
            if not nd.is_leaf:
                lines.append(f'  n{nd.id} -> n{nd.left} [label="yes"];')
                lines.append(f'  n{nd.id} -> n{nd.right} [label="no"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def predict_tree(tree: SynthTreeModel, x) -> np.ndarray:
    return tree.predict(x)


# ---------------------------------------------------------------------------
# growth and fitting


def grow_tree(D, centroids, task, column_names=()) -> SynthTreeModel:
    """Greedy growth to maximum depth over cells with distance matrix ``D``.

    A node stops when it holds one model, has no candidate split, or no
    candidate has positive goodness. Leaves are left without models.
    """
    centroids = np.asarray(centroids, dtype=float)
    J = centroids.shape[0]
    if J < 1:
        raise ValueError("need at least one cell")
    Dc = capped(D)
    nodes = [Node(0, 0, None, tuple(range(J)))]
    queue = [0]
    while queue:
        t = queue.pop(0)
        nd = nodes[t]
        ids = np.array(nd.cell_ids, dtype=np.intp)
        nd.impurity = node_impurity(Dc, ids)
        cand, g = best_split(Dc, centroids, ids)
        if cand is None or g <= GOODNESS_TOL * max(1.0, nd.impurity):
            continue
        left, right = split_cells(centroids, ids, cand)
        nd.split_var, nd.threshold, nd.goodness = cand.var, float(cand.threshold), float(g)
        for side, cells_side in (("left", left), ("right", right)):
            child = Node(len(nodes), nd.depth + 1, t, tuple(int(c) for c in cells_side))
            nodes.append(child)
            setattr(nd, side, child.id)
            queue.append(child.id)
    return SynthTreeModel(nodes, Task.parse(task), tuple(column_names), centroids.shape[1])


def fit_node_model(x, y, task, *, folds=5, seed=0, column_names=None) -> LinearModel | None:
    """CV-penalised fit with the starved-site fallback; None when there are no points.

    A site with fewer than ``active + 2`` points (active = nonzero coefficients
    of the CV fit) falls back to the intercept-only model.
    """
    n = x.shape[0]
    if n == 0:
        return None
    if n < 2:
        return intercept_only(y, task, x.shape[1], column_names)
    model = fit_cv(x, y, task, folds=folds, seed=seed, column_names=column_names)
    if n < model.n_active + 2:
        log.info("site with %d points falls back to intercept-only", n)
        return intercept_only(y, task, x.shape[1], column_names)
    return model


def fit_all_node_models(tree: SynthTreeModel, x, y, *, folds=5, seed=0, nodes=None) -> dict:
    """Model per node fitted on the rows routed through it (None for empty nodes)."""
    rows = tree.node_rows(x)
    names = tree.column_names or None
    out = {}
    for u in (nodes if nodes is not None else range(len(tree.nodes))):
        r = rows[u]
        out[u] = (fit_node_model(x[r], y[r], tree.task, folds=folds, seed=seed, column_names=names), r.size)
    return out


def fit_leaf_models(tree: SynthTreeModel, x, y, *, folds=5, seed=0) -> SynthTreeModel:
    """Fit every leaf on the points routed to it by their own coordinates.

    A leaf that receives no points inherits the model of its nearest ancestor
    that does.
    """
    rows = tree.node_rows(x)
    names = tree.column_names or None
    fitted: dict[int, LinearModel | None] = {}

    def model_at(u):
        if u not in fitted:
            r = rows[u]
            fitted[u] = fit_node_model(x[r], y[r], tree.task, folds=folds, seed=seed, column_names=names)
        return fitted[u]

    nodes = []
    for nd in tree.nodes:
        if not nd.is_leaf:
            nodes.append(replace(nd, model=None, n_fit=int(rows[nd.id].size)))
            continue
        model = model_at(nd.id)
        if model is None:
            for a in tree.ancestors(nd.id):
                model = model_at(a)
                if model is not None:
                    log.info("leaf %d got no points; inheriting model of node %d", nd.id, a)
                    break
        nodes.append(replace(nd, model=model, n_fit=int(rows[nd.id].size)))
    return SynthTreeModel(nodes, tree.task, tree.column_names, tree.n_features, dict(tree.meta))


def with_models(tree: SynthTreeModel, models: dict) -> SynthTreeModel:
    """Copy of ``tree`` whose nodes carry ``models[id]`` (inheriting from ancestors when None)."""
    nodes = []
    for nd in tree.nodes:
        m, n_fit = models.get(nd.id, (None, 0))
        if m is None and nd.is_leaf:
            for a in tree.ancestors(nd.id):
                if models.get(a, (None, 0))[0] is not None:
                    m = models[a][0]
                    break
        nodes.append(replace(nd, model=m, n_fit=int(n_fit)))
    return SynthTreeModel(nodes, tree.task, tree.column_names, tree.n_features, dict(tree.meta))
