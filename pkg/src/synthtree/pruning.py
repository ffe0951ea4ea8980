"""Right-sizing a grown SynthTree.

Two schemes are available. Leveled trimming picks a depth by
cross-validation. Cost-complexity pruning runs a weakest-link sequence whose
critical values are forced to be non-decreasing and then selects the
complexity parameter by cross-validation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .blackbox import to_labels
from .data import Task, fold_ids
from .tree import SynthTreeModel, fit_all_node_models

log = logging.getLogger(__name__)

TIE_TOL = 1e-12  # relative; CV errors this close count as ties


def first_min(errors) -> int:
    errors = np.asarray(errors, dtype=float)
    return int(np.flatnonzero(errors <= errors.min() + TIE_TOL * max(1.0, abs(errors.min())))[0])


class Scheme(str, Enum):
    LTRIM = "ltrim"
    CCPRUNE = "ccprune"


def loss_per_row(task, y, pred) -> np.ndarray:
    """Squared error, or 0/1 misclassification at threshold 0.5."""
    if Task.parse(task) is Task.CLASSIFICATION:
        return (to_labels(pred) != y).astype(float)
    return (np.asarray(y, dtype=float) - pred) ** 2


def resubstitution_error(model, x, y, task) -> float:
    """Total squared error (regression) or misclassification count of ``model`` on the rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0 or model is None:
        return 0.0
    return float(np.sum(loss_per_row(task, y, model.predict(x))))


def node_errors(tree: SynthTreeModel, x, y, *, folds: int = 5, seed: int = 0) -> dict:
    """R(t) for every node, each from its own refit on the original rows routed to it."""
    fits = fit_all_node_models(tree, x, y, folds=folds, seed=seed)
    rows = tree.node_rows(x)
    return {u: resubstitution_error(fits[u][0], x[rows[u]], y[rows[u]], tree.task) for u in fits}


@dataclass(frozen=True)
class NodeError:
    node: int
    r_node: float
    r_branch: float
    n_leaves: int


def _present(tree, pruned):
    """Nodes of the subtree left after cutting every branch below the ``pruned`` nodes."""
    out, stack = [], [0]
    while stack:
        u = stack.pop()
        out.append(u)
        if u not in pruned:
            stack.extend(tree.children(u))
    return sorted(out)


def branch_errors(tree: SynthTreeModel, R: dict, pruned=frozenset()) -> dict:
    """NodeError of every node in the current subtree (pruned nodes act as leaves)."""
    out = {}
    for u in sorted(_present(tree, pruned), reverse=True):  # children first
        kids = () if u in pruned else tree.children(u)
        if not kids:
            out[u] = NodeError(u, R[u], R[u], 1)
        else:
            a, b = out[kids[0]], out[kids[1]]
            out[u] = NodeError(u, R[u], a.r_branch + b.r_branch, a.n_leaves + b.n_leaves)
    return out


def weakest_link_values(tree: SynthTreeModel, R: dict, pruned=frozenset()) -> dict:
    """``h(t) = (R(t) - R(T_t)) / (|leaves of T_t| - 1)`` for internal nodes; inf for leaves."""
    out = {}
    for u, e in branch_errors(tree, R, pruned).items():
        out[u] = math.inf if e.n_leaves == 1 else (e.r_node - e.r_branch) / (e.n_leaves - 1)
    return out


@dataclass(frozen=True)
class PruneStep:
    alpha: float
    pruned: frozenset  # every node whose branch is cut, cumulative
    n_leaves: int


@dataclass(frozen=True)
class PruneSequence:
    steps: tuple

    def __len__(self):
        return len(self.steps)

    @property
    def alphas(self) -> list[float]:
        return [s.alpha for s in self.steps]

    def index_for(self, alpha: float) -> int:
        """Position ``k`` with ``alpha_k <= alpha < alpha_{k+1}``."""
        k = 0
        for i, s in enumerate(self.steps):
            if s.alpha <= alpha:
                k = i
        return k

    def pruned_at(self, alpha: float) -> frozenset:
        return self.steps[self.index_for(alpha)].pruned

    def candidate_alphas(self) -> list[float]:
        """Geometric means of consecutive critical values, plus the last one."""
        a = self.alphas
        out = [math.sqrt(max(a[k], 0.0) * max(a[k + 1], 0.0)) for k in range(len(a) - 1)]
        out.append(a[-1])
        return out


def cc_prune_sequence(tree: SynthTreeModel, R: dict) -> PruneSequence:
    """Weakest-link cutting with a non-decreasing schedule.

    Each round takes ``a = min{h(t) : h(t) >= alpha_k}`` over the current
    internal nodes and cuts every node with ``h(t) <= a``. When no value
    reaches ``alpha_k``, ``a = alpha_k`` and every internal node is cut.
    """
    pruned: frozenset = frozenset()
    alpha = 0.0
    steps = [PruneStep(0.0, pruned, len([u for u in _present(tree, pruned) if not tree.children(u)]))]
    while True:
        h = {u: v for u, v in weakest_link_values(tree, R, pruned).items() if v != math.inf}
        if not h:
            break
        above = [v for v in h.values() if v >= alpha]
        a = min(above) if above else alpha
        cut = {u for u, v in h.items() if v <= a}
        pruned = pruned | cut
        alpha = a
        present = _present(tree, pruned)
        n_leaves = sum(1 for u in present if u in pruned or not tree.children(u))
        assert n_leaves < steps[-1].n_leaves
        steps.append(PruneStep(alpha, pruned, n_leaves))
    seq = PruneSequence(tuple(steps))
    assert all(s.alpha <= t.alpha for s, t in zip(seq.steps, seq.steps[1:]))
    return seq


@dataclass
class PrunableTree:
    """A grown tree whose every node carries a model, with its prune sequence."""

    tree: SynthTreeModel
    sequence: PruneSequence

    def predict(self, alpha: float, x) -> np.ndarray:
        return self.tree.predict(x, stop=self.sequence.pruned_at(alpha))


@dataclass(frozen=True)
class AlphaSelection:
    alpha: float
    candidates: tuple
    cv_errors: tuple
    n_folds_used: int


def select_alpha_cv(build, x, y, task, candidates, *, folds: int = 10, seed: int = 0) -> AlphaSelection:
    """Pick the candidate with the lowest mean held-out error; ties go to the larger value.

    ``build(train_rows)`` grows and prunes a tree on those rows and returns a
    :class:`PrunableTree`. Failed folds are dropped when at least half remain.
    """
    task = Task.parse(task)
    candidates = list(candidates)
    if len(candidates) == 1:
        return AlphaSelection(candidates[0], tuple(candidates), (float("nan"),), 0)
    fid = fold_ids(len(y), folds, seed, y if task is Task.CLASSIFICATION else None)
    per_fold = []
    for f in range(folds):
        train = np.flatnonzero(fid != f)
        hold = np.flatnonzero(fid == f)
        try:
            pt = build(train)
        except Exception as exc:  # noqa: BLE001 - reported and counted below
            log.warning("fold %d failed: %s", f, exc)
            continue
        per_fold.append([float(np.mean(loss_per_row(task, y[hold], pt.predict(a, x[hold]))))
                         for a in candidates])
    if len(per_fold) < folds / 2:
        raise RuntimeError(f"only {len(per_fold)} of {folds} folds succeeded")
    errs = np.mean(per_fold, axis=0)
    tied = np.flatnonzero(errs <= errs.min() + TIE_TOL * max(1.0, abs(errs.min())))
    best = max(tied, key=lambda i: candidates[i])
    return AlphaSelection(candidates[best], tuple(candidates), tuple(float(e) for e in errs), len(per_fold))


@dataclass(frozen=True)
class LTrimResult:
    depth: int
    depths: tuple
    cv_errors: tuple


def _ancestor_at_depth(tree: SynthTreeModel, u: int, d: int) -> int:
    while tree.nodes[u].depth > d:
        u = tree.nodes[u].parent
    return u


def l_trim(tree: SynthTreeModel, x, y, aug_x=None, aug_y=None, *, folds: int = 10, seed: int = 0,
           lasso_folds: int = 5, fold_aug_y=None) -> LTrimResult:
    """Depth in ``1..depth(tree)`` with the best cross-validated error; ties go to the shallower.

    The grown structure is kept fixed. In each fold, every node is refitted on
    the fold's training rows plus all augmented rows, and held-out rows are
    scored at each truncation depth. ``fold_aug_y(train_rows)``, when given,
    supplies the augmented labels to use in that fold.
    """
    gamma = tree.depth
    if gamma <= 1:
        return LTrimResult(gamma, (gamma,), (float("nan"),))
    task = tree.task
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if aug_x is None:
        aug_x, aug_y = np.empty((0, x.shape[1])), np.empty(0)
    depths = list(range(1, gamma + 1))
    fid = fold_ids(len(y), folds, seed, y if task is Task.CLASSIFICATION else None)
    errors = np.zeros((folds, gamma))
    for f in range(folds):
        train = fid != f
        hold = np.flatnonzero(~train)
        fx = np.vstack([x[train], aug_x])
        fy = np.concatenate([y[train], aug_y if fold_aug_y is None else fold_aug_y(np.flatnonzero(train))])
        fits = fit_all_node_models(tree, fx, fy, folds=lasso_folds, seed=seed)
        leaf = tree.route(x[hold])
        for di, d in enumerate(depths):
            pred = np.empty(hold.size)
            at = np.array([_ancestor_at_depth(tree, int(u), d) for u in leaf])
            for u in np.unique(at):
                m = at == u
                model = None
                for a in [int(u)] + tree.ancestors(int(u)):
                    model = fits[a][0]
                    if model is not None:
                        break
                pred[m] = model.predict(x[hold[m]])
            errors[f, di] = np.mean(loss_per_row(task, y[hold], pred))
    mean = errors.mean(axis=0)
    best = first_min(mean)
    return LTrimResult(depths[best], tuple(depths), tuple(float(e) for e in mean))


def default_scheme(task) -> Scheme:
    return Scheme.CCPRUNE if Task.parse(task) is Task.CLASSIFICATION else Scheme.LTRIM


def choose_pruning_scheme(task, mode: str = "default", train_losses: dict | None = None) -> Scheme:
    """Scheme to use.

    ``mode`` is ``default`` (per task), ``ltrim``/``ccprune`` (forced) or
    ``compare``, where ``train_losses`` maps each scheme to a training loss
    (lower is better) and ties keep the task default.
    """
    mode = str(mode).lower()
    if mode in (Scheme.LTRIM.value, Scheme.CCPRUNE.value):
        return Scheme(mode)
    if mode == "default":
        return default_scheme(task)
    if mode != "compare":
        raise ValueError(f"unknown pruning mode {mode!r}")
    if not train_losses:
        raise ValueError("compare mode needs training losses for both schemes")
    fallback = default_scheme(task)
    losses = {Scheme(k): v for k, v in train_losses.items()}
    return min(losses, key=lambda s: (losses[s], s is not fallback))
