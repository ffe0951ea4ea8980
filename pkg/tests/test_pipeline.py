import numpy as np
import pytest

from synthtree.blackbox import ExternalTablePredictor, RandomForestPredictor
from synthtree.data import Task, load_csv
from synthtree.exceptions import ColumnMismatch, UnknownQueryPoint, ValidationError
from synthtree.pipeline import (FoldBlackBoxes, MlmFit, Preprocessor, RunConfig, cell_candidates,
                                choose_cell_count, dumps, evaluate_protocol, fit_pipeline, linear_baseline,
                                load_training_data, make_predictors, model_bundle, query_plan)

from conftest import two_region_truth, write_csv

SMALL = dict(n_trees=15, j_grid=(4, 8), folds=3, lasso_folds=3, n_sim=20, kmeans_restarts=3, n_boot=0)


def _data(rng, n=160, noise=0.1):
    x = rng.uniform(-2, 2, (n, 3))
    return x, two_region_truth(x) + noise * rng.normal(size=n)


@pytest.mark.parametrize("bad", [dict(method="cart"), dict(blackbox=("rf", "rf")), dict(blackbox=()),
                                 dict(blackbox=("external",)), dict(folds=1), dict(pruning="x"),
                                 dict(j_cells=0), dict(test_fraction=1.0), dict(task="ranking"),
                                 dict(j_grid=(0, 4)), dict(n_sim=-1)])
def test_run_config_rejects(bad):
    with pytest.raises(ValidationError):
        RunConfig(**bad).validate()


def test_run_config_round_trip():
    cfg = RunConfig(blackbox=("rf", "gb"), j_grid=(8, 16), seed=4)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.to_dict()["blackbox"] == ["rf", "gb"]


def test_cell_candidates():
    cfg = RunConfig()
    assert cell_candidates(cfg, 1000) == [16, 32, 64, 128]
    assert cell_candidates(cfg, 200) == [16, 32]
    assert cell_candidates(cfg, 50) == [10]
    assert cell_candidates(RunConfig(j_cells=7), 50) == [7]


class _Stub:
    def __init__(self, j, level):
        self.j_cells, self.level, self.details = j, level, {}

    def predict(self, x):
        return np.full(x.shape[0], self.level)


def test_choose_cell_count_prefers_fewer_cells_on_ties():
    x, y = np.zeros((4, 1)), np.array([0.0, 0.0, 2.0, 2.0])
    levels = {4: 1.0, 8: 1.0, 16: 0.0}

    def fit_one(j):
        if j == 16:
            raise RuntimeError("boom")
        return _Stub(j, levels[j])
    with pytest.warns(RuntimeWarning, match="16 failed"):
        best = choose_cell_count([16, 8, 4], fit_one, x, y, Task.REGRESSION)
    assert best.j_cells == 4 and set(best.details["j_candidates"]) == {"4", "8"}


def test_fold_black_boxes_refit_and_cache(rng):
    x, y = _data(rng)
    cfg = RunConfig(**SMALL)
    preds = make_predictors(x, y, cfg)
    fb = FoldBlackBoxes(x, y, cfg, preds)
    rows = np.arange(0, 160, 2)
    a = fb(rows)
    assert fb(rows.copy()) is a
    ref = RandomForestPredictor(Task.REGRESSION, cfg.n_trees, seed=cfg.seed).fit(x[rows], y[rows])
    assert np.array_equal(a[0].predict(x), ref.predict(x))
    assert not np.array_equal(a[0].predict(x), preds[0].predict(x))


def test_fold_black_boxes_reuse_external(rng):
    x, y = _data(rng, n=30)
    ext = ExternalTablePredictor(Task.REGRESSION, x, y)
    cfg = RunConfig(blackbox=("external",))
    assert FoldBlackBoxes(x, y, cfg, [ext])(np.arange(10)) == [ext]
    cfg = RunConfig(blackbox=("rf", "external"), n_trees=5)
    mixed = FoldBlackBoxes(x, y, cfg, make_predictors(x, y, cfg, external=ext))(np.arange(20))
    assert mixed[1] is ext and mixed[0].kind == "rf"


@pytest.mark.parametrize("method", ["synthtree", "mlm-epic"])
def test_fit_pipeline_is_deterministic(rng, method):
    x, y = _data(rng)
    cfg = RunConfig(method=method, **SMALL)
    a = fit_pipeline(x, y, cfg)
    b = fit_pipeline(x, y, cfg)
    assert isinstance(a, MlmFit) and a.j_cells in (4, 8)
    assert dumps(a.model.to_dict()) == dumps(b.model.to_dict())
    assert a.details["j_candidates"] == b.details["j_candidates"]
    assert np.sqrt(np.mean((a.predict(x) - two_region_truth(x)) ** 2)) < 0.5 * y.std()


def test_fit_pipeline_classification_compare(rng):
    x = rng.uniform(-2, 2, (200, 2))
    y = (x[:, 0] * x[:, 1] > 0).astype(float)
    fit = fit_pipeline(x, y, RunConfig(task="classification", pruning="compare", **SMALL))
    p = fit.predict(x)
    assert np.all((p >= 0) & (p <= 1))
    assert fit.details["scheme"] in ("ltrim", "ccprune") and len(fit.details["train_losses"]) == 2


@pytest.mark.parametrize("pruning", ["ltrim", "ccprune"])
def test_query_plan_covers_every_external_query(rng, pruning):
    x, y = _data(rng, n=120)
    cfg = RunConfig(blackbox=("external",), pruning=pruning, **SMALL)
    pts = query_plan(x, y, cfg)
    assert np.unique(pts, axis=0).shape[0] == pts.shape[0]
    ext = ExternalTablePredictor(Task.REGRESSION, pts, two_region_truth(pts))
    fit = fit_pipeline(x, y, cfg, external=ext)
    assert fit.n_regions >= 1
    # a table missing one planned point is caught
    short = ExternalTablePredictor(Task.REGRESSION, pts[1:], two_region_truth(pts[1:]))
    with pytest.raises(Exception) as info:
        fit_pipeline(x, y, cfg, external=short)
    assert isinstance(info.value, UnknownQueryPoint) or isinstance(info.value.__cause__, UnknownQueryPoint)


def test_linear_baseline_matches_normal_equations(rng):
    x, y = _data(rng, n=50)
    a = np.column_stack([np.ones(50), x])
    coef = np.linalg.solve(a.T @ a, a.T @ y)
    p_tr, p_te = linear_baseline(x, y, x[:5], Task.REGRESSION)
    assert np.allclose(p_tr, a @ coef, atol=1e-10) and np.allclose(p_te, (a @ coef)[:5], atol=1e-10)


def _mixed_csv(path, rng, n=60):
    rows = []
    for i in range(n):
        g = ["red", "green", "blue"][i % 3]
        v = "" if i == 5 else f"{rng.normal():.6f}"
        rows.append([g, v, f"{rng.normal():.6f}", f"{rng.normal():.6f}"])
    return write_csv(path, ["colour", "v", "w", "y"], rows)


def test_preprocessor_replays_training_encoding(tmp_path, rng):
    path = _mixed_csv(tmp_path / "train.csv", rng)
    raw, ds = load_training_data(path, "y", "regression")
    prep = Preprocessor.from_datasets(raw, ds, "y")
    again = Preprocessor.from_dict(prep.to_dict())
    assert np.array_equal(again.transform_file(path), ds.x)
    # reordered columns, no target, an unseen level
    write_csv(tmp_path / "new.csv", ["w", "colour", "v"], [["1.0", "purple", ""], ["2.0", "red", "3.0"]])
    xn = prep.transform_file(tmp_path / "new.csv")
    names = list(ds.column_names)
    dummies = [k for k, c in enumerate(names) if c.startswith("colour")]
    assert xn.shape == (2, ds.p)
    assert xn[0, dummies].sum() == 0 and xn[1, dummies].sum() == 1
    assert xn[0, names.index("v")] == raw.medians["v"]
    write_csv(tmp_path / "bad.csv", ["colour", "w", "extra"], [["red", "1", "2"]])
    with pytest.raises(ColumnMismatch):
        prep.transform_file(tmp_path / "bad.csv")
    write_csv(tmp_path / "empty.csv", ["colour", "v", "w"], [])
    assert prep.transform_file(tmp_path / "empty.csv").shape == (0, ds.p)


def test_model_bundle_is_canonical_json(tmp_path, rng):
    path = _mixed_csv(tmp_path / "train.csv", rng, n=120)
    raw, ds = load_training_data(path, "y", "regression")
    cfg = RunConfig(data=str(path), target="y", j_cells=4, **{k: v for k, v in SMALL.items() if k != "j_grid"})
    fit = fit_pipeline(ds.x, ds.y, cfg, dummy_blocks=ds.dummy_blocks(), column_names=ds.column_names)
    text = dumps(model_bundle(fit, Preprocessor.from_datasets(raw, ds, "y"), cfg))
    assert text == dumps(model_bundle(fit, Preprocessor.from_datasets(raw, ds, "y"), cfg))
    assert '"format": "synthtree-model"' in text and text.endswith("\n")


def test_evaluate_protocol_reports(tmp_path, rng):
    x, y = _data(rng, n=150)
    write_csv(tmp_path / "d.csv", ["a", "b", "c", "y"], np.column_stack([x, y]).tolist())
    ds = load_csv(tmp_path / "d.csv", "y", "regression")
    cfg = RunConfig(n_splits=2, **SMALL)
    reps = evaluate_protocol(ds, cfg)
    assert set(reps) == {"synthtree-rf", "lr", "cart"}
    assert reps["synthtree-rf"].extras["seed"] == [0, 1]
    assert all(len(r.test) == 2 for r in reps.values())
    # full-depth CART memorises distinct targets: one leaf per training row
    assert reps["cart"].extras["regions"] == [120, 120]
    with pytest.raises(ValidationError):
        evaluate_protocol(ds, RunConfig(blackbox=("external",)))
