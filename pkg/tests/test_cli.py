import csv
import hashlib
import json

import numpy as np
import pytest

from hybrid_screen import artifact
from hybrid_screen._seeding import derive_seed
from hybrid_screen.cli import main
from hybrid_screen.data import concat_tables, load_table
from hybrid_screen.ensemble import predict, train_final
from hybrid_screen.forest import select_features
from hybrid_screen.metrics import trapezoid_area
from hybrid_screen.ranking import CutoffRule, prescreen_fractions
from hybrid_screen.search import default_forest_params, preprocess
from hybrid_screen.snn import SnnHyperparams

from conftest import linear_regression_table, planted_table, write_csv

SMALL_SPACE = {"epochs": [20], "dropout": [0.1, 0.3], "batch_size": [64],
               "init_mode": ["he_normal"], "activation": ["relu"], "n_iter": 2}


def _write_config(tmp_path, **overrides):
    cfg = {"seed": 13, "task_kind": "classification", "task_name": "demo",
           "data": {"train": "train.csv", "cv": "cv.csv", "test": "test.csv"},
           "threshold_grid": [0.5, 1.0], "snn_space": SMALL_SPACE,
           "dropouts": [0.0, 0.5], "forest": {"n_estimators": 40},
           "n_estimators_values": [5, 10], "depths": [1, 2], "output_dir": "out"}
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def workspace(tmp_path):
    t = planted_table(21, n=300, p=6)
    write_csv(tmp_path / "train.csv", t.take(np.arange(0, 180)))
    write_csv(tmp_path / "cv.csv", t.take(np.arange(180, 240)))
    write_csv(tmp_path / "test.csv", t.take(np.arange(240, 300)))
    return tmp_path


def _run(*argv):
    return main([str(a) for a in argv])


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.iterdir()) if p.is_file()}


def test_optimize_singleton_returns_that_config(workspace):
    space = {"epochs": [40], "dropout": [0.2], "batch_size": [32],
             "init_mode": ["glorot_normal"], "activation": ["sigmoid"], "n_iter": 1}
    cfg = _write_config(workspace, threshold_grid=[1.0], snn_space=space)
    assert _run("optimize", "--config", cfg) == 0
    best = json.loads((workspace / "out" / "best_config.json").read_text())
    assert best["threshold"] == 1.0
    snn = best["snn"]
    assert (snn["epochs"], snn["dropout"], snn["batch_size"], snn["init_mode"],
            snn["activation"]) == (40, 0.2, 32, "glorot_normal", "sigmoid")
    rows = list(csv.reader((workspace / "out" / "trials.csv").open()))
    assert len(rows) == 1 + 2


def test_optimize_rerun_byte_identical(workspace):
    cfg = _write_config(workspace)
    assert _run("optimize", "--config", cfg, "--out", workspace / "a") == 0
    assert _run("optimize", "--config", cfg, "--out", workspace / "b") == 0
    assert _digest(workspace / "a") == _digest(workspace / "b")


def test_optimize_parallel_jobs_value_identical(workspace):
    cfg = _write_config(workspace)
    assert _run("optimize", "--config", cfg, "--mode", "parallel", "--out",
                workspace / "a") == 0
    assert _run("optimize", "--config", cfg, "--mode", "parallel", "--jobs", "3",
                "--out", workspace / "b") == 0
    assert _digest(workspace / "a") == _digest(workspace / "b")


def test_missing_label_column_exit_3(workspace, capsys):
    cfg = _write_config(workspace, label_column="Toxicity")
    assert _run("optimize", "--config", cfg) == 3
    assert "Toxicity" in capsys.readouterr().err


def test_degenerate_search_exit_4(workspace):
    cfg = _write_config(workspace, threshold_grid=[50.0, 60.0])
    assert _run("optimize", "--config", cfg) == 4


@pytest.mark.parametrize("doc, code", [
    ({"task_kind": "classification"}, 2),
    ({"seed": 1, "bogus": 3}, 2),
    ({"seed": -1}, 2),
    ({"seed": 1, "objective": "f1"}, 2),
    ({"seed": 1, "snn_space": {"epochs": []}}, 2),
    ({"seed": 1, "data": {"train": "absent.csv"}}, 3),
])
def test_config_errors(tmp_path, doc, code):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    assert _run("optimize", "--config", path) == code


def test_unreadable_config_and_seed_flag(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert _run("optimize", "--config", bad) == 2
    assert _run("optimize", "--config", tmp_path / "none.json") == 2
    assert _run("optimize", "--seed", "abc") == 2


def _train(workspace, cfg, *extra):
    assert _run("optimize", "--config", cfg) == 0
    assert _run("train", "--config", cfg, "--best", workspace / "out" / "best_config.json",
                *extra) == 0
    return workspace / "out" / "model.json"


def test_train_artifact_matches_in_memory_model(workspace):
    cfg = _write_config(workspace)
    model_path = _train(workspace, cfg)
    loaded, doc = artifact.load(model_path)
    best = json.loads((workspace / "out" / "best_config.json").read_text())
    train = load_table(str(workspace / "train.csv"), label_column="Label")
    cv = load_table(str(workspace / "cv.csv"), label_column="Label")
    merged = concat_tables([train, cv])
    fp = default_forest_params("classification", n_estimators=40)
    ens = train_final(merged, best["threshold"], SnnHyperparams.from_dict(best["snn"]),
                      13, fp)
    test = load_table(str(workspace / "test.csv"), label_column="Label")
    assert predict(loaded, test).tobytes() == predict(ens, test).tobytes()
    # the recorded feature names are exactly what the final forest selects
    kept, _, _, _, forest = preprocess(merged, derive_seed(13, "final"), fp)
    expected = select_features(forest.importances(), best["threshold"])
    assert doc["selected_names"] == [merged.feature_names[kept[j]] for j in expected]


def test_train_without_best_uses_fixed_block(workspace):
    cfg = _write_config(workspace, sweep_threshold=1.0)
    assert _run("train", "--config", cfg, "--rule-features", "f0") == 0
    _, doc = artifact.load(workspace / "out" / "model.json")
    assert doc["cutoff_rule"][0]["feature"] == "f0"


def test_evaluate_training_rows_and_curve_consistency(workspace):
    cfg = _write_config(workspace)
    model_path = _train(workspace, cfg)
    assert _run("evaluate", "--config", cfg, "--model", model_path,
                "--table", workspace / "train.csv") == 0
    out = workspace / "out"
    metrics = json.loads((out / "metrics.json").read_text())
    assert {"auc_roc", "auc_pr", "max_f1"} <= set(metrics)
    assert metrics["auc_roc"] >= 0.99
    pts = [(float(a), float(b)) for a, b in list(csv.reader((out / "roc.csv").open()))[1:]]
    assert abs(trapezoid_area(pts) - metrics["auc_roc"]) < 1e-9


def test_evaluate_regression_reports_r2(tmp_path):
    t = linear_regression_table(5, n=150)
    write_csv(tmp_path / "train.csv", t.take(np.arange(100)))
    write_csv(tmp_path / "test.csv", t.take(np.arange(100, 150)))
    cfg = _write_config(tmp_path, task_kind="regression",
                        data={"train": "train.csv", "test": "test.csv"},
                        base_snn={"epochs": 150, "batch_size": 16, "dropout": 0.0},
                        sweep_threshold=0.5)
    assert _run("train", "--config", cfg) == 0
    assert _run("evaluate", "--config", cfg, "--model", tmp_path / "out" / "model.json") == 0
    metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert set(metrics) == {"n", "r2"} and metrics["r2"] > 0.8


def test_predict_writes_scores(workspace):
    cfg = _write_config(workspace)
    model_path = _train(workspace, cfg)
    assert _run("predict", "--config", cfg, "--model", model_path) == 0
    rows = list(csv.reader((workspace / "out" / "predictions.csv").open()))
    assert rows[0] == ["id", "score"] and len(rows) == 61
    assert all(0.0 <= float(r[1]) <= 1.0 for r in rows[1:])


def test_corrupted_artifact_exit_3(workspace, capsys):
    cfg = _write_config(workspace)
    path = workspace / "broken.json"
    path.write_text(json.dumps({"format": "hybrid-screen/9"}))
    assert _run("predict", "--config", cfg, "--model", path) == 3
    assert "hybrid-screen/9" in capsys.readouterr().err


def test_rank_single_task_follows_importances(workspace):
    cfg = _write_config(workspace)
    model_path = _train(workspace, cfg)
    assert _run("rank", "--config", cfg, model_path, "--rule-features", "f0,f1") == 0
    ens, _ = artifact.load(model_path)
    rows = list(csv.reader((workspace / "out" / "ranking.csv").open()))[1:]
    order = np.lexsort((np.arange(len(ens.importances)), -ens.importances))
    assert [r[0] for r in rows] == [ens.kept_names[j] for j in order]
    assert [float(r[2]) for r in rows] == list(range(1, len(rows) + 1))
    rule = CutoffRule.from_json((workspace / "out" / "rule.json").read_text())
    assert rule.features == ["f0", "f1"]


def test_prescreen_matches_library(workspace):
    cfg = _write_config(workspace)
    rule_path = workspace / "rule.json"
    rule = CutoffRule(["f0", "f1"], [0.2, 1.0])
    rule_path.write_text(rule.to_json())
    assert _run("prescreen", "--config", cfg, "--rule", rule_path, "--labelled") == 0
    summary = json.loads((workspace / "out" / "prescreen_summary.json").read_text())
    test = load_table(str(workspace / "test.csv"), label_column="Label")
    assert (summary["toxic_fraction"], summary["nontoxic_fraction"]) == \
        prescreen_fractions(test, rule)
    zones = list(csv.reader((workspace / "out" / "prescreen.csv").open()))[1:]
    assert sum(z[1] == "SafeZone" for z in zones) == summary["n_safe_zone"]


def test_prescreen_unknown_feature_exit_3(workspace):
    cfg = _write_config(workspace)
    rule_path = workspace / "rule.json"
    rule_path.write_text(CutoffRule(["nope"], [1.0]).to_json())
    assert _run("prescreen", "--config", cfg, "--rule", rule_path) == 3


@pytest.mark.parametrize("which, header", [
    ("series-parallel", ["mode", "auc"]), ("n-estimators", ["n_estimators", "auc"]),
    ("feature-count", ["n_features", "auc"]), ("depth", ["hidden_layers", "auc"])])
def test_casestudy_outputs(workspace, which, header):
    cfg = _write_config(workspace, threshold_grid=[0.3, 1.0, 2.0])
    assert _run("casestudy", which, "--config", cfg, "--out", workspace / "a") == 0
    assert _run("casestudy", which, "--config", cfg, "--out", workspace / "b") == 0
    assert _digest(workspace / "a") == _digest(workspace / "b")
    stem = "casestudy_" + which.replace("-", "_")
    rows = list(csv.reader((workspace / "a" / f"{stem}.csv").open()))
    assert rows[0] == header and all(len(r) == 2 for r in rows)
    assert (workspace / "a" / f"{stem}_trials.csv").exists()
    if which == "feature-count":
        counts = [int(r[0]) for r in rows[1:]]
        assert counts == sorted(counts, reverse=True)


def test_inputs_are_not_modified(workspace):
    cfg = _write_config(workspace)
    before = _digest(workspace)
    model_path = _train(workspace, cfg)
    _run("evaluate", "--config", cfg, "--model", model_path)
    assert _digest(workspace) == before
