import csv

import numpy as np
import pytest

from synthtree.data import ScalingParams, Task
from synthtree.epic import EpicModel
from synthtree.evaluation import (EvalReport, auc, coefficient_report, coefficient_table, cross_validate,
                                  overfit_gap, rmse, score, write_coefficient_report)
from synthtree.exceptions import LengthMismatch, SingleClass
from synthtree.linear import LinearModel

REG = Task.REGRESSION


def _auc_brute(y, s):
    pos, neg = s[y == 1], s[y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (pos.size * neg.size)


@pytest.mark.parametrize("seed", range(15))
def test_auc_equals_pairwise_count(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 201))
    y = (r.random(n) < r.uniform(0.1, 0.9)).astype(float)
    y[:2] = [0.0, 1.0]
    # coarse scores force many ties
    s = np.round(r.normal(size=n) + y, int(r.integers(0, 3)))
    assert auc(y, s) == _auc_brute(y, s)


def test_auc_examples():
    assert auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
    assert auc([0, 1], [0.5, 0.5]) == 0.5
    assert auc([1, 0], [0.9, 0.1]) == 1.0
    with pytest.raises(SingleClass):
        auc([1, 1], [0.2, 0.3])
    with pytest.raises(LengthMismatch):
        auc([0, 1], [0.2])


def test_rmse_and_score():
    assert rmse([0, 0, 0, 0], [1, -1, 1, -1]) == 1.0
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    with pytest.raises(LengthMismatch):
        rmse([], [])
    with pytest.raises(LengthMismatch):
        rmse([1, 2], [1])
    assert score("regression", [3.0], [0.0]) == 3.0
    assert score("classification", [0, 1], [0.2, 0.7]) == 1.0


def test_gap_signs():
    assert overfit_gap(1.0, 1.5, "regression") == 0.5
    assert overfit_gap(0.9, 0.8, "classification") == pytest.approx(0.1)


def test_eval_report_summary(rng):
    rep = EvalReport("m", "rmse", REG)
    tests = rng.uniform(1, 3, 5)
    trains = tests - 0.2
    for a, b in zip(trains, tests):
        rep.add(a, b, regions=4)
    m = sum(tests) / 5
    sd = (sum((t - m) ** 2 for t in tests) / 4) ** 0.5
    assert rep.mean == pytest.approx(m, rel=1e-12)
    assert rep.sd == pytest.approx(sd, rel=1e-12)
    assert rep.gap == pytest.approx(0.2, rel=1e-9)
    d = rep.to_dict()
    assert d["regions"] == [4] * 5 and d["sd"] == rep.sd
    one = EvalReport("m", "rmse", REG)
    one.add(1.0, 2.0)
    assert one.sd == 0.0


def test_cross_validate_uses_every_row_once(rng):
    x = rng.normal(size=(37, 2))
    y = rng.normal(size=37)
    seen = []

    def fit_predict(x_tr, y_tr, x_te):
        seen.append(x_te[:, 0].tolist())
        assert x_tr.shape[0] + x_te.shape[0] == 37
        return np.full(x_te.shape[0], y_tr.mean())
    errs = cross_validate(fit_predict, x, y, REG, folds=5, seed=1)
    assert len(errs) == 5
    assert sorted(v for fold in seen for v in fold) == sorted(x[:, 0].tolist())


def _epic():
    scaling = ScalingParams(np.zeros(2), np.ones(2))
    models = [LinearModel(1.0, np.array([2.0, 0.0]), REG, lam=0.01),
              LinearModel(-1.0, np.array([0.0, 0.5]), REG, lam=0.01)]
    return EpicModel([(0,), (1,)], models, np.array([[-3.0, 0.0], [3.0, 0.0]]), scaling, REG,
                     column_names=("a", "b"))


def test_coefficient_table_marks_excluded():
    header, rows = coefficient_table(_epic())
    assert header == ["region", "intercept", "a", "b"]
    assert rows[0] == ["EPIC 1", "1.0", "2.0", "-"]
    assert rows[1] == ["EPIC 2", "-1.0", "-", "0.5"]


def test_coefficient_report_intervals(rng, tmp_path):
    model = _epic()
    x = np.vstack([rng.normal([-3, 0], 1, (80, 2)), rng.normal([3, 0], 1, (80, 2))])
    y = model.predict(x) + 0.1 * rng.normal(size=160)
    rep = coefficient_report(model, x, y, n_boot=50, seed=0)
    assert len(rep) == 4
    first = rep[0]
    assert first["region"] == "EPIC 1" and first["variable"] == "a" and first["n_rows"] == int((x[:, 0] < 0).sum())
    assert first["ci_low"] <= 2.0 <= first["ci_high"]
    assert rep[1]["excluded"] and rep[2]["excluded"]
    again = coefficient_report(model, x, y, n_boot=50, seed=0)
    assert again == rep
    write_coefficient_report(tmp_path / "c.csv", rep)
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0][0] == "region" and len(rows) == 5


def test_coefficient_report_intercept_only_region(rng):
    scaling = ScalingParams(np.zeros(1), np.ones(1))
    model = EpicModel([(0,)], [LinearModel(2.0, np.zeros(1), REG, lam=1.0)], np.zeros((1, 1)), scaling, REG)
    rep = coefficient_report(model, rng.normal(size=(10, 1)), rng.normal(size=10), n_boot=5)
    assert rep[0]["excluded"] and np.isnan(rep[0]["ci_low"])


def test_noiseless_leaf_gives_tight_intervals(rng):
    from synthtree.linear import fit_cv
    # a leaf pool of original plus augmented rows; with no noise the only spread
    # left is the fixed penalty meeting a resampled column scale (falls as 1/sqrt(n))
    x = rng.normal(size=(400, 2))
    y = 0.5 + 3.0 * x[:, 0] - 2.0 * x[:, 1]
    fitted = fit_cv(x, y, REG, seed=0)
    scaling = ScalingParams(np.zeros(2), np.ones(2))
    model = EpicModel([(0,)], [fitted], np.zeros((1, 2)), scaling, REG)
    rep = coefficient_report(model, x, y, n_boot=100, seed=1)
    for r, truth in zip(rep, [3.0, -2.0]):
        assert r["ci_high"] - r["ci_low"] < 0.01
        assert r["ci_low"] - 0.05 <= truth <= r["ci_high"] + 0.05


def test_shared_coefficients_give_identical_rows():
    scaling = ScalingParams(np.zeros(1), np.ones(1))
    shared = LinearModel(0.25, np.array([1.5]), REG)
    model = EpicModel([(0,), (1,)], [shared, shared], np.array([[-1.0], [1.0]]), scaling, REG)
    _, rows = coefficient_table(model)
    assert rows[0][1:] == rows[1][1:]
