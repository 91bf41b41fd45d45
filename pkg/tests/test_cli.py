import glob
import io
import json
import os

import numpy as np
import pandas as pd
import pytest

from fedsurg.app import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, FedSurgApp


def tiny_pipeline(name, lr):
    return {
        "name": name,
        "sampler": {"kind": "equidistant", "k": 100},
        "federated": {"fl_rounds": 1, "local_epochs": 1, "learning_rate": lr, "batch_size": 4,
                      "fine_tune_epochs": 1},
    }


@pytest.fixture
def config_path(tmp_path, monkeypatch):
    monkeypatch.delenv("FEDSURG_CONFIG", raising=False)
    monkeypatch.delenv("FEDSURG_WORKERS", raising=False)
    body = {
        "data": {"generator": {"videos_per_center": [8, 8, 10, 6], "test_fractions": [0.25, 0.25, 0.3, 1.0],
                               "frames_per_video": 10, "feature_dim": 4}},
        "pipelines": [tiny_pipeline("tiny-a", 0.05), tiny_pipeline("tiny-b", 0.001)],
        "evaluation": {"bootstrap_iters": 60},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(body), encoding="utf-8")
    return str(path)


def run(*argv):
    out = io.StringIO()
    code = FedSurgApp(stdout=out).run(list(argv))
    return code, out.getvalue()


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def test_help_exits_cleanly(capsys):
    assert run("--help")[0] == EXIT_OK
    for command in ("gen-data", "simulate", "rank", "metrics"):
        assert run(command, "--help")[0] == EXIT_OK
    assert "--bootstrap-iters" in capsys.readouterr().out


def test_usage_errors_exit_with_validation_code(capsys, tmp_path):
    assert run()[0] == EXIT_VALIDATION
    assert run("simulate", "--no-such-flag")[0] == EXIT_VALIDATION
    assert run("metrics", "--f1-absent-convention", "drop", "x.csv")[0] == EXIT_VALIDATION
    assert run("metrics", str(tmp_path / "missing.csv"), "--out", str(tmp_path))[0] == EXIT_VALIDATION
    assert "error:" in capsys.readouterr().err


def test_unknown_preset_suggests_name(capsys, config_path, tmp_path):
    code, _ = run("simulate", "--config", config_path, "--pipelines", "santhi-lik", "--out", str(tmp_path))
    assert code == EXIT_VALIDATION
    assert "did you mean 'santhi-like'" in capsys.readouterr().err


def test_gen_data_then_simulate_on_bundle(config_path, tmp_path):
    bundle = str(tmp_path / "bundle")
    code, text = run("gen-data", "--config", config_path, "--seed", "2", "--out", bundle)
    assert code == EXIT_OK
    assert sorted(os.listdir(bundle)) == ["center1.csv", "center2.csv", "center3.csv", "center4.csv", "manifest.json"]
    assert "center4: 0 train / 6 test videos" in text

    out = str(tmp_path / "sim")
    code, _ = run("simulate", "--config", config_path, "--data", bundle, "--pipelines", "santhi-like",
                  "--out", out)
    # presets run on the bundle just like inline pipelines
    assert code == EXIT_OK
    results = json.loads(read_bytes(os.path.join(out, "results.json")))
    assert results["data"]["source"] == "bundle"
    assert [p["name"] for p in results["result"]["pipelines"]] == ["santhi-like"]


def test_simulate_is_byte_identical_on_rerun(config_path, tmp_path):
    first = str(tmp_path / "sim")
    names = ("results.json", "predictions_tiny-a.csv", "predictions_tiny-b.csv", "metrics.csv", "leaderboard.csv")
    assert run("simulate", "--config", config_path, "--seed", "5", "--out", first, "--xlsx")[0] == EXIT_OK
    before = {name: read_bytes(os.path.join(first, name)) for name in names}
    assert run("simulate", "--config", config_path, "--seed", "5", "--out", first, "--xlsx")[0] == EXIT_OK
    for name in names:
        assert read_bytes(os.path.join(first, name)) == before[name]
    assert os.path.isfile(os.path.join(first, "report.xlsx"))

    preds = pd.read_csv(os.path.join(first, "predictions_tiny-a.csv"))
    assert list(preds.columns) == ["team", "case_id", "center", "true_label", "pred_label"]
    assert (preds["center"] == "center4").sum() == 6


def test_rank_from_metric_table(challenge_table_csv, config_path, tmp_path):
    code, text = run("rank", challenge_table_csv, "--config", config_path, "--out", str(tmp_path))
    assert code == EXIT_OK
    board = pd.read_csv(tmp_path / "leaderboard.csv")
    assert dict(zip(board["team"], board["final_rank"])) == {"Santhi": 1, "Camma": 2, "Elbflorenz": 2}
    assert "Leaderboard" in text


def test_rank_and_metrics_from_predictions(config_path, tmp_path):
    sim = str(tmp_path / "sim")
    assert run("simulate", "--config", config_path, "--out", sim)[0] == EXIT_OK
    files = sorted(glob.glob(os.path.join(sim, "predictions_*.csv")))

    ranked = str(tmp_path / "ranked")
    code, text = run("rank", *files, "--config", config_path, "--bootstrap-iters", "40", "--workers", "2",
                     "--out", ranked)
    assert code == EXIT_OK
    for name in ("leaderboard", "bootstrap_rankfreq", "winprob", "wilcoxon", "rankstability_plotdata",
                 "bootstrap_summary"):
        assert os.path.isfile(os.path.join(ranked, f"{name}.csv"))
    freq = pd.read_csv(os.path.join(ranked, "bootstrap_rankfreq.csv"))
    sums = freq.groupby(["scope", "team"])["frequency"].sum()
    assert np.allclose(sums, 1.0)
    assert "median rank" in text

    # leaderboard from predictions matches the one written by simulate
    assert read_bytes(os.path.join(ranked, "leaderboard.csv")) == read_bytes(os.path.join(sim, "leaderboard.csv"))

    measured = str(tmp_path / "measured")
    assert run("metrics", *files, "--config", config_path, "--out", measured)[0] == EXIT_OK
    metrics = pd.read_csv(os.path.join(measured, "metrics.csv"))
    assert list(metrics.columns) == ["team", "center", "n", "f1", "ec"]
    assert set(metrics["team"]) == {"tiny-a", "tiny-b"}
    assert metrics["n"].sum() == 2 * (2 + 2 + 3 + 6)


def test_metrics_perfect_predictions(config_path, tmp_path):
    path = tmp_path / "perfect.csv"
    path.write_text("case_id,center,true_label,pred_label\na,center1,0,0\nb,center1,3,3\n", encoding="utf-8")
    code, _ = run("metrics", str(path), "--config", config_path, "--out", str(tmp_path))
    assert code == EXIT_OK
    row = pd.read_csv(tmp_path / "metrics.csv").iloc[0]
    assert row["team"] == "perfect"
    assert row["ec"] == 0.0
    assert row["f1"] == pytest.approx(2 / 6)


def test_malformed_prediction_file_is_validation_error(capsys, config_path, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("case_id,center,true_label,pred_label\na,center1,0,7\n", encoding="utf-8")
    assert run("metrics", str(path), "--config", config_path, "--out", str(tmp_path))[0] == EXIT_VALIDATION
    assert "bad.csv:2" in capsys.readouterr().err


def test_non_finite_training_is_runtime_error(config_path, tmp_path):
    bundle = str(tmp_path / "bundle")
    assert run("gen-data", "--config", config_path, "--out", bundle)[0] == EXIT_OK
    center = os.path.join(bundle, "center1.csv")
    frame = pd.read_csv(center)
    frame["f0"] = np.nan
    frame.to_csv(center, index=False)
    code, _ = run("simulate", "--config", config_path, "--data", bundle, "--out", str(tmp_path / "sim"))
    assert code == EXIT_RUNTIME
