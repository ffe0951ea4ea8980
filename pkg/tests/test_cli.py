import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from synthtree.blackbox import read_numeric_csv, write_numeric_csv
from synthtree.cli import main
from synthtree.data import read_manifest

from conftest import two_region_truth, write_csv

FAST = ["--j-grid", "4,8", "--folds", "3", "--lasso-folds", "3", "--n-sim", "20", "--n-trees", "15",
        "--kmeans-restarts", "3", "--n-boot", "20"]


@pytest.fixture
def train_csv(tmp_path):
    r = np.random.default_rng(7)
    x = r.uniform(-2, 2, (150, 3))
    y = two_region_truth(x) + 0.1 * r.normal(size=150)
    g = np.where(x[:, 1] > 0, "hi", "lo")
    rows = [[f"{a:.6f}", f"{b:.6f}", s, f"{c:.6f}", f"{t:.6f}"] for (a, b, c), s, t in zip(x, g, y)]
    return write_csv(tmp_path / "train.csv", ["a", "b", "grp", "c", "y"], rows)


def _train(train_csv, out, *extra):
    return main(["train", "--data", str(train_csv), "--target", "y", "--out", str(out), *FAST, *extra])


def test_train_is_byte_identical_across_runs(train_csv, tmp_path):
    assert _train(train_csv, tmp_path / "a") == 0
    assert _train(train_csv, tmp_path / "b") == 0
    a = (tmp_path / "a" / "model.json").read_bytes()
    assert a == (tmp_path / "b" / "model.json").read_bytes()
    for name in ("config.json", "coefficients.csv", "coefficient_intervals.csv", "tree.dot",
                 "prune_report.txt", "train_report.json", "manifest.txt"):
        assert (tmp_path / "a" / name).is_file()
    m = read_manifest(tmp_path / "a" / "manifest.txt")
    assert m["command"] == "train" and len(m["data_sha256"]) == 64


def test_seed_changes_model(train_csv, tmp_path):
    _train(train_csv, tmp_path / "a")
    _train(train_csv, tmp_path / "b", "--seed", "3")
    assert (tmp_path / "a" / "model.json").read_bytes() != (tmp_path / "b" / "model.json").read_bytes()


def test_predict_round_trip(train_csv, tmp_path):
    _train(train_csv, tmp_path / "m")
    model = str(tmp_path / "m" / "model.json")
    assert main(["predict", "--model", model, "--data", str(train_csv), "--out", str(tmp_path / "p")]) == 0
    _, pred = read_numeric_csv(tmp_path / "p" / "predictions.csv")
    y = np.array([float(r["y"]) for r in csv.DictReader(open(train_csv))])
    report = json.loads((tmp_path / "m" / "train_report.json").read_text())
    assert np.sqrt(np.mean((pred[:, 0] - y) ** 2)) == pytest.approx(report["train_score"], rel=1e-12)
    # header only: zero predictions, success
    write_csv(tmp_path / "empty.csv", ["a", "b", "grp", "c"], [])
    assert main(["predict", "--model", model, "--data", str(tmp_path / "empty.csv"),
                 "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "predictions.csv").read_text().strip() == "prediction"


def test_predict_column_mismatch_exits_2(train_csv, tmp_path, capsys):
    _train(train_csv, tmp_path / "m")
    write_csv(tmp_path / "bad.csv", ["a", "b", "c", "zzz"], [["1", "2", "3", "4"]])
    code = main(["predict", "--model", str(tmp_path / "m" / "model.json"), "--data", str(tmp_path / "bad.csv"),
                 "--out", str(tmp_path / "p")])
    assert code == 2
    err = capsys.readouterr().err
    assert "grp" in err and "zzz" in err


def test_export_formats(train_csv, tmp_path):
    _train(train_csv, tmp_path / "m")
    model = str(tmp_path / "m" / "model.json")
    for fmt in ("dot", "json", "coeff-csv"):
        assert main(["export", "--model", model, "--format", fmt, "--out", str(tmp_path / fmt)]) == 0
    bundle = json.loads((tmp_path / "m" / "model.json").read_text())
    assert json.loads((tmp_path / "json" / "model.json").read_text()) == bundle
    rows = list(csv.reader(open(tmp_path / "coeff-csv" / "coefficients.csv")))
    leaves = bundle["selection"]["scheme"] and (tmp_path / "dot" / "tree.dot").read_text().count("ELC")
    assert len(rows) - 1 == leaves >= 1
    assert rows[0][:2] == ["region", "intercept"] and len(rows[0]) == 2 + 5
    assert main(["export", "--model", model, "--format", "dot", "--data", str(train_csv),
                 "--out", str(tmp_path / "dot2")]) == 0
    assert main(["export", "--model", model, "--format", "png", "--out", str(tmp_path / "x")]) == 2


def test_epic_model_has_no_dot(train_csv, tmp_path):
    assert _train(train_csv, tmp_path / "m", "--method", "mlm-epic") == 0
    assert (tmp_path / "m" / "epic_report.csv").is_file()
    assert main(["export", "--model", str(tmp_path / "m" / "model.json"), "--format", "dot",
                 "--out", str(tmp_path / "d")]) == 2


@pytest.mark.parametrize("argv", [
    ["train", "--target", "y"],
    ["train", "--data", "nope.csv", "--target", "y"],
    ["train", "--blackbox", "rf,external"],
    ["train", "--blackbox", "external", "--external-x", "nope.csv", "--external-yhat", "nope.csv"],
    ["train", "--target", "missing_col"],
])
def test_validation_errors_exit_2(argv, train_csv, tmp_path):
    argv = list(argv)
    if "--data" not in argv and argv != ["train", "--target", "y"]:
        argv += ["--data", str(train_csv)]
    if "--target" not in argv:
        argv += ["--target", "y"]
    assert main(argv + ["--out", str(tmp_path / "o")]) == 2


def test_unreadable_model_exits_2(tmp_path, train_csv):
    (tmp_path / "junk.json").write_text("{}")
    assert main(["predict", "--model", str(tmp_path / "junk.json"), "--data", str(train_csv),
                 "--out", str(tmp_path / "o")]) == 2


def test_evaluate_writes_split_table(train_csv, tmp_path):
    out = tmp_path / "ev"
    assert main(["evaluate", "--data", str(train_csv), "--target", "y", "--out", str(out), "--n-splits", "2",
                 *FAST]) == 0
    summary = json.loads((out / "evaluation.json").read_text())
    assert set(summary["methods"]) == {"synthtree-rf", "lr", "cart"}
    rows = list(csv.DictReader(open(out / "splits.csv")))
    assert len(rows) == 6 and {r["seed"] for r in rows} == {"0", "1"}
    st = summary["methods"]["synthtree-rf"]
    assert st["mean"] == pytest.approx(np.mean(st["test"]))


def test_external_exchange_workflow(train_csv, tmp_path):
    ex = tmp_path / "ex"
    common = ["--data", str(train_csv), "--target", "y", "--blackbox", "external", *FAST]
    assert main(["augment-export", *common, "--out", str(ex)]) == 0
    header, pts = read_numeric_csv(ex / "augmented_x.csv")
    assert header == ["a", "b", "grp=hi", "grp=lo", "c"]
    # an "external model": the true surface evaluated at every requested point
    xyz = pts[:, [0, 1, 4]]
    write_numeric_csv(ex / "augmented_yhat.csv", ["yhat"], two_region_truth(xyz))
    imp = tmp_path / "imp"
    assert main(["augment-import", "--export-dir", str(ex), "--out", str(imp)]) == 0
    assert main(["train", *common, "--external-x", str(imp / "external_x.csv"),
                 "--external-yhat", str(imp / "external_yhat.csv"), "--out", str(tmp_path / "m")]) == 0
    m = read_manifest(tmp_path / "m" / "manifest.txt")
    assert "external_x_sha256" in m
    # wrong row count is rejected
    write_numeric_csv(ex / "short.csv", ["yhat"], np.zeros(pts.shape[0] - 1))
    assert main(["augment-import", "--export-dir", str(ex), "--yhat", str(ex / "short.csv"),
                 "--out", str(tmp_path / "imp2")]) == 2
    # a tampered query file is rejected
    (ex / "augmented_x.csv").write_text((ex / "augmented_x.csv").read_text() + "0,0,0,0,0\n")
    assert main(["augment-import", "--export-dir", str(ex), "--out", str(tmp_path / "imp3")]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "synthtree", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("synthtree ")
    res = subprocess.run([sys.executable, "-m", "synthtree", "export", "--model", str(tmp_path / "none.json"),
                          "--format", "json", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2 and "error:" in res.stderr
