"""End-to-end fitting: black boxes, cells, tree or EPIC regions, right-sizing.

Also holds the run configuration, the preprocessing that travels with a
saved model, the five-split evaluation protocol and the query plan used by
the external-prediction exchange.
"""
from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

from . import __version__
from .blackbox import (GradientBoostingPredictor, RandomForestPredictor, RecordingPredictor,
                       import_external_predictions)
from .cosupervision import CoSupervised, cosupervise, relabel_augmented
from .data import Dataset, Task, dummy_encode, fold_ids, load_csv, split_indices
from .epic import EpicModel, agglomerate_epics, choose_epic_count, fit_epic_models
from .evaluation import EvalReport, auc, rmse, score
from .exceptions import ColumnMismatch, StageError, ValidationError
from .linear import fit_fixed
from .pruning import (PrunableTree, Scheme, cc_prune_sequence, choose_pruning_scheme, l_trim,
                      node_errors, select_alpha_cv)
from .tree import SynthTreeModel, distance_matrix, fit_all_node_models, fit_leaf_models, grow_tree, with_models

log = logging.getLogger(__name__)

METHODS = ("synthtree", "mlm-epic")
BLACKBOXES = ("rf", "gb", "external")
PRUNING_MODES = ("default", "ltrim", "ccprune", "compare")
DEFAULT_J_GRID = (16, 32, 64, 128)


@dataclass
class RunConfig:
    data: str | None = None
    target: str | None = None
    task: str = "regression"
    method: str = "synthtree"
    blackbox: tuple = ("rf",)
    external_x: str | None = None
    external_yhat: str | None = None
    j_cells: int | None = None
    j_grid: tuple = DEFAULT_J_GRID
    epic_grid: tuple | None = None
    n_sim: int = 100
    pruning: str = "default"
    folds: int = 10
    lasso_folds: int = 5
    seed: int = 0
    n_trees: int = 100
    gb_rounds: int = 100
    gb_learning_rate: float = 0.1
    gb_depth: int = 3
    n_splits: int = 5
    test_fraction: float = 0.2
    n_boot: int = 200
    kmeans_restarts: int = 25

    def validate(self, check_external: bool = True) -> "RunConfig":
        """Raise ValidationError on bad settings; ``check_external=False`` skips the prediction files."""
        Task.parse(self.task)
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        bb = tuple(self.blackbox)
        if not bb or any(b not in BLACKBOXES for b in bb) or len(set(bb)) != len(bb):
            raise ValidationError(f"blackbox must be distinct entries of {BLACKBOXES}, got {bb}")
        if "external" in bb and check_external:
            for name in ("external_x", "external_yhat"):
                path = getattr(self, name)
                if not path or not Path(path).is_file():
                    raise ValidationError(f"stage 'blackbox': external predictions need --{name.replace('_', '-')} "
                                          f"pointing at an existing file (got {path!r})")
        if self.j_cells is not None and self.j_cells < 1:
            raise ValidationError("j_cells must be >= 1")
        if not self.j_grid or any(int(j) < 1 for j in self.j_grid):
            raise ValidationError("j_grid must hold positive integers")
        if self.epic_grid is not None and any(int(k) < 1 for k in self.epic_grid):
            raise ValidationError("epic_grid must hold positive integers")
        if self.n_sim < 0:
            raise ValidationError("n_sim must be >= 0")
        if self.pruning not in PRUNING_MODES:
            raise ValidationError(f"pruning must be one of {PRUNING_MODES}")
        if self.folds < 2 or self.lasso_folds < 2:
            raise ValidationError("folds must be >= 2")
        if self.n_splits < 1 or not 0 < self.test_fraction < 1:
            raise ValidationError("need n_splits >= 1 and test_fraction in (0, 1)")
        if self.n_trees < 1 or self.gb_rounds < 1 or self.gb_depth < 0 or self.kmeans_restarts < 1:
            raise ValidationError("black-box and k-means settings must be positive")
        return self

    @property
    def task_kind(self) -> Task:
        return Task.parse(self.task)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in names}
        return cls(**kw)


# ---------------------------------------------------------------------------
# black boxes


def make_predictors(x, y, cfg: RunConfig, external=None, seed=None) -> list:
    """Fitted predictors in the order listed by ``cfg.blackbox``."""
    task = cfg.task_kind
    seed = cfg.seed if seed is None else seed
    out = []
    for kind in cfg.blackbox:
        if kind == "rf":
            out.append(RandomForestPredictor(task, cfg.n_trees, seed=seed).fit(x, y))
        elif kind == "gb":
            out.append(GradientBoostingPredictor(task, cfg.gb_rounds, cfg.gb_learning_rate,
                                                 cfg.gb_depth, seed).fit(x, y))
        else:
            if external is None:
                external = import_external_predictions(cfg.external_x, cfg.external_yhat, task)
            out.append(external)
    return out


class FoldBlackBoxes:
    """Black boxes refitted on CV training rows, cached by row set.

    Cross-validation inside the pipeline must not label augmented points with
    a model that saw the held-out rows. Trainable black boxes are refitted on
    each fold's rows; an external table cannot be, so it is reused as is.
    """

    def __init__(self, x, y, cfg: RunConfig, predictors):
        self.x, self.y, self.cfg = x, y, cfg
        self.predictors = list(predictors)
        self._cache: dict[bytes, list] = {}

    @property
    def refits(self) -> bool:
        return any(p.kind in ("rf", "gb") for p in self.predictors)

    def __call__(self, rows) -> list:
        rows = np.asarray(rows, dtype=np.intp)
        if not self.refits:
            return self.predictors
        key = rows.tobytes()
        if key not in self._cache:
            fitted = make_predictors(self.x[rows], self.y[rows], self.cfg,
                                     external=next((p for p in self.predictors if p.kind == "external"), None))
            self._cache[key] = fitted
        return self._cache[key]


# ---------------------------------------------------------------------------
# fitting


@dataclass
class MlmFit:
    """A fitted SynthTree or MLM-EPIC plus what was chosen along the way."""

    method: str
    task: Task
    model: SynthTreeModel | EpicModel
    j_cells: int
    cosupervised: CoSupervised
    details: dict = field(default_factory=dict)
    report_lines: list = field(default_factory=list)

    def predict(self, x) -> np.ndarray:
        return self.model.predict(x)

    @property
    def n_regions(self) -> int:
        m = self.model
        return m.n_leaves if isinstance(m, SynthTreeModel) else m.n_epics


def _cosupervise(x, y, task, predictors, j, cfg, dummy_blocks, column_names, predictions):
    return cosupervise(x, y, task, predictors, j, n_sim=cfg.n_sim, seed=cfg.seed, dummy_blocks=dummy_blocks,
                       column_names=column_names, predictions=predictions, lasso_folds=cfg.lasso_folds,
                       n_init=cfg.kmeans_restarts)


def _model_space(cs: CoSupervised):
    pools = [c.pooled(cs.x, cs.y)[0] for c in cs.cells]
    return distance_matrix([c.local_model for c in cs.cells], pools, cs.task)


def _grow(x, y, task, predictors, j, cfg, dummy_blocks, column_names, predictions):
    cs = _cosupervise(x, y, task, predictors, j, cfg, dummy_blocks, column_names, predictions)
    D = _model_space(cs)
    grown = grow_tree(D, np.array([c.centroid for c in cs.cells]), task, column_names)
    return cs, D, grown


def _training_loss(task, y, pred) -> float:
    """Lower is better: RMSE, or 1 - AUC for classification."""
    if task is Task.CLASSIFICATION:
        try:
            return 1.0 - auc(y, pred)
        except ValidationError:
            return float(np.mean((pred > 0.5) != y))
    return rmse(y, pred)


def fit_synthtree(x, y, task, predictors, j_cells: int, cfg: RunConfig, *, dummy_blocks=(),
                  column_names=(), predictions=None, fold_predictors=None) -> MlmFit:
    """Grow, prune and fit a SynthTree for one cell count.

    ``fold_predictors(train_rows)`` gives the black boxes each CV fold should
    use; by default they are refitted on the fold rows (see FoldBlackBoxes).
    """
    task = Task.parse(task)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if predictions is None:
        predictions = [p.predict(x) for p in predictors]
    if fold_predictors is None:
        fold_predictors = FoldBlackBoxes(x, y, cfg, predictors)
    cs, D, grown = _grow(x, y, task, predictors, j_cells, cfg, dummy_blocks, column_names, predictions)
    px, py, owner = cs.pooled_all()
    aug = owner >= 0
    details = {"grown_leaves": grown.n_leaves, "grown_depth": grown.depth}
    lines = []
    wanted = ([Scheme.LTRIM, Scheme.CCPRUNE] if cfg.pruning == "compare"
              else [choose_pruning_scheme(task, cfg.pruning)])
    finals = {}

    if Scheme.LTRIM in wanted:
        def fold_aug_y(rows):
            cells = relabel_augmented(cs.cells, fold_predictors(rows), task)
            return np.concatenate([np.empty(0)] + [c.augmented_y for c in cells if c.augmented_x is not None
                                                   and c.augmented_x.shape[0]])

        res = l_trim(grown, x, y, px[aug], py[aug], folds=cfg.folds, seed=cfg.seed, lasso_folds=cfg.lasso_folds,
                     fold_aug_y=fold_aug_y)
        finals[Scheme.LTRIM] = fit_leaf_models(grown.truncate(res.depth), px, py,
                                               folds=cfg.lasso_folds, seed=cfg.seed)
        details["ltrim"] = {"depth": res.depth, "depths": list(res.depths), "cv_errors": list(res.cv_errors)}
        lines.append("L-trim (depth, leaves, cv_error)")
        for d, e in zip(res.depths, res.cv_errors):
            lines.append(f"{d:>5d} {grown.truncate(d).n_leaves:>6d} {e:.6g}")

    if Scheme.CCPRUNE in wanted:
        R = node_errors(grown, x, y, folds=cfg.lasso_folds, seed=cfg.seed)
        seq = cc_prune_sequence(grown, R)

        def build(rows):
            preds_l = fold_predictors(rows)
            if preds_l is predictors:
                known = [p[rows] for p in predictions]
            else:
                known = [p.predict(x[rows]) for p in preds_l]
            cs_l, _, g_l = _grow(x[rows], y[rows], task, preds_l, j_cells, cfg, dummy_blocks, column_names,
                                 known)
            seq_l = cc_prune_sequence(g_l, node_errors(g_l, x[rows], y[rows], folds=cfg.lasso_folds,
                                                       seed=cfg.seed))
            fx, fy, _ = cs_l.pooled_all()
            return PrunableTree(with_models(g_l, fit_all_node_models(g_l, fx, fy, folds=cfg.lasso_folds,
                                                                     seed=cfg.seed)), seq_l)

        cands = seq.candidate_alphas()
        sel = select_alpha_cv(build, x, y, task, cands, folds=cfg.folds, seed=cfg.seed)
        finals[Scheme.CCPRUNE] = fit_leaf_models(grown.collapse(seq.pruned_at(sel.alpha)), px, py,
                                                 folds=cfg.lasso_folds, seed=cfg.seed)
        details["ccprune"] = {"alpha": sel.alpha, "alphas": seq.alphas, "candidates": list(sel.candidates),
                              "cv_errors": list(sel.cv_errors), "leaf_counts": [s.n_leaves for s in seq.steps]}
        lines.append("CC-prune (alpha_k, leaves, train_error, cv_error at candidate)")
        for k, st in enumerate(seq.steps):
            present = grown.collapse(st.pruned)
            train_err = sum(R[u] for u in _leaf_ids_in_original(grown, st.pruned))
            cv = sel.cv_errors[k] if k < len(sel.cv_errors) else float("nan")
            lines.append(f"{st.alpha:>14.6g} {present.n_leaves:>6d} {train_err:>14.6g} {cv:.6g}")
        lines.append(f"selected alpha = {sel.alpha:.6g}")

    losses = {s.value: _training_loss(task, y, t.predict(x)) for s, t in finals.items()}
    scheme = choose_pruning_scheme(task, "compare", losses) if len(finals) > 1 else next(iter(finals))
    details["scheme"] = scheme.value
    details["train_losses"] = losses
    tree = finals[scheme]
    lines.append(f"scheme = {scheme.value}; leaves = {tree.n_leaves}; depth = {tree.depth}")
    return MlmFit("synthtree", task, tree, j_cells, cs, details, lines)


def _leaf_ids_in_original(tree: SynthTreeModel, pruned) -> list[int]:
    """Ids (in ``tree``) of the leaves of the subtree obtained by cutting at ``pruned``."""
    out, stack = [], [0]
    while stack:
        u = stack.pop()
        kids = () if u in pruned else tree.children(u)
        if kids:
            stack.extend(kids)
        else:
            out.append(u)
    return out


def default_epic_grid(j: int) -> list[int]:
    grid = [k for k in (1, 2, 4, 8, 16, 32, 64) if k <= j]
    return grid


def fit_mlm_epic(x, y, task, predictors, j_cells: int, cfg: RunConfig, *, dummy_blocks=(),
                 column_names=(), predictions=None, fold_predictors=None) -> MlmFit:
    task = Task.parse(task)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if predictions is None:
        predictions = [p.predict(x) for p in predictors]
    if fold_predictors is None:
        fold_predictors = FoldBlackBoxes(x, y, cfg, predictors)
    cs = _cosupervise(x, y, task, predictors, j_cells, cfg, dummy_blocks, column_names, predictions)
    D = _model_space(cs)
    grid = list(cfg.epic_grid) if cfg.epic_grid else default_epic_grid(j_cells)

    def fold_cs(rows):
        return replace(cs, cells=relabel_augmented(cs.cells, fold_predictors(rows), task))

    sel = choose_epic_count(cs, D, grid, folds=cfg.folds, seed=cfg.seed, lasso_folds=cfg.lasso_folds,
                            fold_cs=fold_cs)
    model = fit_epic_models(agglomerate_epics(D, sel.k), cs, folds=cfg.lasso_folds, seed=cfg.seed)
    lines = ["EPIC count (k, cv_error)"]
    lines += [f"{k:>5d} {e:.6g}" for k, e in zip(sel.candidates, sel.cv_errors)]
    lines.append(f"selected k = {sel.k}")
    details = {"epic_count": sel.k, "candidates": list(sel.candidates), "cv_errors": list(sel.cv_errors)}
    return MlmFit("mlm-epic", task, model, j_cells, cs, details, lines)


def cell_candidates(cfg: RunConfig, n: int) -> list[int]:
    if cfg.j_cells is not None:
        return [int(cfg.j_cells)]
    grid = sorted({int(j) for j in cfg.j_grid if 1 <= j <= n / 5})
    return grid or [max(1, n // 5)]


def choose_cell_count(candidates, fit_one, x, y, task):
    """Fit each candidate cell count and keep the best training score; ties go to fewer cells.

    ``fit_one(j)`` returns an :class:`MlmFit`. Failed candidates are skipped.
    """
    task = Task.parse(task)
    best, scores = None, {}
    for j in sorted(set(int(j) for j in candidates)):
        try:
            fit = fit_one(j)
        except Exception as exc:  # noqa: BLE001 - skipped with a warning, as documented
            warnings.warn(f"cell count {j} failed and is skipped: {exc}", RuntimeWarning, stacklevel=2)
            continue
        loss = _training_loss(task, y, fit.predict(x))
        scores[j] = loss
        if best is None or loss < scores[best.j_cells]:
            best = fit
    if best is None:
        raise RuntimeError("every cell-count candidate failed")
    best.details["j_candidates"] = {str(k): v for k, v in scores.items()}
    return best


def fit_pipeline(x, y, cfg: RunConfig, *, dummy_blocks=(), column_names=(), external=None,
                 seed=None) -> MlmFit:
    """Black boxes, then the chosen method for every candidate cell count."""
    task = cfg.task_kind
    if seed is not None and seed != cfg.seed:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "seed": seed})
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    try:
        predictors = make_predictors(x, y, cfg, external)
        predictions = [p.predict(x) for p in predictors]
    except ValidationError:
        raise
    except Exception as exc:
        raise StageError("blackbox", exc) from exc
    fit = fit_synthtree if cfg.method == "synthtree" else fit_mlm_epic
    fold_predictors = FoldBlackBoxes(x, y, cfg, predictors)  # shared by every cell count

    def fit_one(j):
        return fit(x, y, task, predictors, j, cfg, dummy_blocks=dummy_blocks, column_names=column_names,
                   predictions=predictions, fold_predictors=fold_predictors)

    try:
        result = choose_cell_count(cell_candidates(cfg, x.shape[0]), fit_one, x, y, task)
    except ValidationError:
        raise
    except Exception as exc:
        raise StageError(cfg.method, exc) from exc
    result.details["blackboxes"] = [p.describe() for p in predictors]
    result.details["chosen_predictor_per_cell"] = [c.chosen_predictor for c in result.cosupervised.cells]
    return result


# ---------------------------------------------------------------------------
# preprocessing and saved models


@dataclass
class Preprocessor:
    """Column handling learned from a training file and replayed on new files."""

    target: str
    task: Task
    source_columns: tuple
    numeric_columns: tuple
    levels: dict
    medians: dict
    column_names: tuple

    @classmethod
    def from_datasets(cls, raw: Dataset, encoded: Dataset, target: str) -> "Preprocessor":
        return cls(target, raw.task, tuple(raw.source_columns), tuple(raw.column_names), encoded.levels(),
                   dict(raw.medians), tuple(encoded.column_names))

    def to_dict(self) -> dict:
        return {"target": self.target, "task": self.task.value, "source_columns": list(self.source_columns),
                "numeric_columns": list(self.numeric_columns), "levels": self.levels,
                "medians": self.medians, "column_names": list(self.column_names)}

    @classmethod
    def from_dict(cls, d) -> "Preprocessor":
        return cls(d["target"], Task.parse(d["task"]), tuple(d["source_columns"]), tuple(d["numeric_columns"]),
                   {k: list(v) for k, v in d["levels"].items()}, dict(d["medians"]), tuple(d["column_names"]))

    def check_header(self, header) -> None:
        expected = set(self.source_columns)
        got = set(header)
        missing = [c for c in self.source_columns if c not in got]
        extra = [c for c in header if c not in expected and c != self.target]
        if missing or extra:
            raise ColumnMismatch(missing, extra)

    def transform_file(self, path) -> np.ndarray:
        """Encoded feature matrix of a CSV (the target column, if present, is ignored)."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            has_rows = any(row for row in reader)
        self.check_header(header)
        if not has_rows:
            return np.empty((0, len(self.column_names)))
        nominal = [c for c in self.source_columns if c not in self.numeric_columns]
        ds = load_csv(path, None, self.task, medians=self.medians, numeric_columns=self.numeric_columns,
                      nominal_columns=nominal, ignore_columns=[self.target])
        ds = dummy_encode(ds, levels=self.levels)
        # the file may list its columns in any order; restore the training order
        where = {c: j for j, c in enumerate(ds.column_names)}
        return ds.x[:, [where[c] for c in self.column_names]]


def load_training_data(path, target, task) -> tuple[Dataset, Dataset]:
    """Raw and dummy-encoded versions of a training CSV."""
    raw = load_csv(path, target, task)
    return raw, dummy_encode(raw)


def model_bundle(fit: MlmFit, prep: Preprocessor, cfg: RunConfig) -> dict:
    cfg_d = cfg.to_dict()
    return {"format": "synthtree-model", "version": __version__, "method": fit.method, "task": fit.task.value,
            "j_cells": fit.j_cells, "preprocessing": prep.to_dict(), "model": fit.model.to_dict(),
            "selection": _jsonable(fit.details), "config": cfg_d}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON text (sorted keys, fixed indentation) so equal content gives equal bytes."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


@dataclass
class LoadedModel:
    method: str
    task: Task
    model: SynthTreeModel | EpicModel
    preprocessing: Preprocessor
    bundle: dict

    def predict(self, x) -> np.ndarray:
        return self.model.predict(x)


def load_model(path) -> LoadedModel:
    try:
        bundle = json.loads(Path(path).read_text(encoding="utf-8"))
        kind = bundle["model"]["kind"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: not a model file ({exc})") from exc
    model = SynthTreeModel.from_dict(bundle["model"]) if kind == "synthtree" else EpicModel.from_dict(bundle["model"])
    return LoadedModel(bundle["method"], Task.parse(bundle["task"]), model,
                       Preprocessor.from_dict(bundle["preprocessing"]), bundle)


# ---------------------------------------------------------------------------
# evaluation protocol


def linear_baseline(x_tr, y_tr, x_te, task):
    """Global least-squares fit (regression) or unpenalised logistic fit (classification)."""
    if task is Task.CLASSIFICATION:
        m = fit_fixed(x_tr, y_tr, task, 0.0)
        return m.predict(x_tr), m.predict(x_te)
    A = np.column_stack([np.ones(x_tr.shape[0]), x_tr])
    coef, *_ = np.linalg.lstsq(A, y_tr, rcond=None)
    return A @ coef, np.column_stack([np.ones(x_te.shape[0]), x_te]) @ coef


def cart_baseline(x_tr, y_tr, x_te, task, seed):
    """Fully grown CART with constant leaves; returns predictions and the leaf count."""
    if task is Task.CLASSIFICATION:
        t = DecisionTreeClassifier(random_state=seed).fit(x_tr, y_tr)
        col = list(t.classes_).index(1.0) if 1.0 in t.classes_ else None

        def proba(z):
            return t.predict_proba(z)[:, col] if col is not None else np.zeros(z.shape[0])
        return proba(x_tr), proba(x_te), int(t.get_n_leaves())
    t = DecisionTreeRegressor(random_state=seed).fit(x_tr, y_tr)
    return t.predict(x_tr), t.predict(x_te), int(t.get_n_leaves())


def evaluate_protocol(ds: Dataset, cfg: RunConfig, *, baselines: bool = True, progress=None) -> dict:
    """Seeded train/test splits; returns EvalReports keyed by method name.

    Split ``s`` uses seed ``cfg.seed + s`` for both the split and the model.
    """
    if "external" in cfg.blackbox:
        raise ValidationError("evaluate cannot use external predictions (they cover one training set only)")
    task = cfg.task_kind
    metric = "auc" if task is Task.CLASSIFICATION else "rmse"
    name = f"{cfg.method}-{'int' if len(cfg.blackbox) > 1 else cfg.blackbox[0]}"
    reports = {name: EvalReport(name, metric, task)}
    if baselines:
        reports["lr"] = EvalReport("lr", metric, task)
        reports["cart"] = EvalReport("cart", metric, task)
    blocks = ds.dummy_blocks()
    for s in range(cfg.n_splits):
        seed = cfg.seed + s
        tr, te = split_indices(ds.y, task, cfg.test_fraction, seed)
        x_tr, y_tr, x_te, y_te = ds.x[tr], ds.y[tr], ds.x[te], ds.y[te]
        t0 = time.perf_counter()
        fit = fit_pipeline(x_tr, y_tr, cfg, dummy_blocks=blocks, column_names=ds.column_names, seed=seed)
        secs = time.perf_counter() - t0
        reports[name].add(score(task, y_tr, fit.predict(x_tr)), score(task, y_te, fit.predict(x_te)),
                          regions=fit.n_regions, j_cells=fit.j_cells, seconds=secs, seed=seed)
        if baselines:
            p_tr, p_te = linear_baseline(x_tr, y_tr, x_te, task)
            reports["lr"].add(score(task, y_tr, p_tr), score(task, y_te, p_te), seed=seed)
            c_tr, c_te, leaves = cart_baseline(x_tr, y_tr, x_te, task, seed)
            reports["cart"].add(score(task, y_tr, c_tr), score(task, y_te, c_te), regions=leaves, seed=seed)
        if progress:
            progress(s, reports)
    return reports


# ---------------------------------------------------------------------------
# external prediction exchange


def query_plan(x, y, cfg: RunConfig, *, dummy_blocks=()) -> np.ndarray:
    """Every distinct point an external predictor will be asked about during training.

    Cells and augmented points depend only on the inputs and seeds, never on
    the predictor's answers, so one pass with a recording stand-in (made the
    only predictor, hence chosen in every cell) enumerates all queries: the
    training rows plus the augmented points for every candidate cell count
    and, when cost-complexity pruning may run, for every CV fold.
    """
    task = cfg.task_kind
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rec = RecordingPredictor(task)
    rec.predict(x)
    scheme_modes = {"ccprune", "compare"} if task is Task.REGRESSION else {"default", "ccprune", "compare"}
    uses_cv_rebuild = cfg.method == "synthtree" and cfg.pruning in scheme_modes
    fid = fold_ids(len(y), cfg.folds, cfg.seed, y if task is Task.CLASSIFICATION else None) if uses_cv_rebuild else None
    for j in cell_candidates(cfg, x.shape[0]):
        _cosupervise(x, y, task, [rec], j, cfg, dummy_blocks, (), None)
        if uses_cv_rebuild:
            for f in range(cfg.folds):
                rows = np.flatnonzero(fid != f)
                try:
                    _cosupervise(x[rows], y[rows], task, [rec], j, cfg, dummy_blocks, (), None)
                except ValueError as exc:
                    log.warning("fold %d with %d cells skipped: %s", f, j, exc)
    return rec.unique_queries()

