import csv
import io
import json
import math

import numpy as np
import pytest

from revar.cli import REPORT_COLUMNS, main
from revar.config import RunConfig
from revar.graph import save_dataset, synth_graph

FAST = ["--hidden", "64", "--epochs", "8"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    save_dataset(synth_graph(3, [30, 30, 30], 8, 0.8, seed=0), root / "toy")
    assert main(["split", str(root / "toy"), "--rho", "5", "--base", "10", "--val-per-class", "5",
                 "--name", "s"]) == 0
    return root / "toy"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# split


def test_split_step_prints_counts(tmp_path, capsys):
    save_dataset(synth_graph(6, [60] * 6, 4, 0.8, seed=1), tmp_path / "six")
    code, out, _ = run(["split", tmp_path / "six", "--mode", "step", "--rho", "10"], capsys)
    assert code == 0
    assert "counts: [20, 20, 20, 2, 2, 2]" in out and "imbalance_ratio: 10" in out
    code, out, _ = run(["split", tmp_path / "six", "--mode", "step", "--rho", "1", "--name", "bal"], capsys)
    assert code == 0 and "counts: [20, 20, 20, 20, 20, 20]" in out and "imbalance_ratio: 1" in out
    assert (tmp_path / "six" / "splits" / "bal.json").is_file()


def test_split_fractional_ratio(tmp_path, capsys):
    save_dataset(synth_graph(2, [80, 80], 4, 0.8, seed=1), tmp_path / "two")
    code, out, _ = run(["split", tmp_path / "two", "--mode", "explicit", "--counts", "51,2",
                        "--val-per-class", "5"], capsys)
    assert code == 0 and "imbalance_ratio: 51/2 (25.50)" in out


def test_ingest_check(dataset, capsys):
    code, out, _ = run(["ingest-check", dataset], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["num_nodes"] == 90 and doc["label_counts"] == [30, 30, 30]


def test_data_dir_env(dataset, capsys, monkeypatch):
    monkeypatch.setenv("REVAR_DATA_DIR", str(dataset.parent))
    code, out, _ = run(["ingest-check", "toy"], capsys)
    assert code == 0 and json.loads(out)["num_classes"] == 3
    monkeypatch.setenv("REVAR_DATA_DIR", str(dataset))
    code, _, _ = run(["ingest-check", "toy"], capsys)
    assert code == 4


# train


def test_train_deterministic_manifest(dataset, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["train", dataset, "--split", "s", "--out", a, *FAST, "--plot"], capsys)[0] == 0
    assert run(["train", dataset, "--split", "s", "--out", b, *FAST, "--plot"], capsys)[0] == 0
    for name in ("result.json", "config.json", "metrics.csv", "epochs.csv", "checkpoint.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    doc = json.loads((a / "result.json").read_text())
    assert all((a / f).is_file() for f in doc["files"])
    assert {"plots/loss.svg", "plots/val.svg"} <= set(doc["files"])
    rows = list(csv.DictReader(io.StringIO((a / "epochs.csv").read_text())))
    assert len(rows) == len(doc["epochs"]) and set(rows[0]) >= {"loss", "vr", "ir", "sup", "val_f1"}
    metrics = {r["split"]: r for r in csv.DictReader(io.StringIO((a / "metrics.csv").read_text()))}
    assert float(metrics["test"]["balanced_accuracy"]) == doc["test_metrics"]["balanced_accuracy"]

    # rerunning from the persisted config reproduces the manifest
    c = tmp_path / "c"
    assert run(["train", "--config", a / "config.json", "--out", c, "--plot"], capsys)[0] == 0
    for name in ("result.json", "config.json", "checkpoint.bin"):
        assert (a / name).read_bytes() == (c / name).read_bytes(), name


def test_train_vanilla_reduction(dataset, tmp_path, capsys):
    out = tmp_path / "v"
    code, _, _ = run(["train", dataset, "--split", "s", "--out", out, *FAST,
                      "--lambda1", "0", "--lambda2", "0", "--aug", "off"], capsys)
    assert code == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["loss.lambda1"] == 0 and cfg["loss.lambda2"] == 0
    assert all(cfg[k] == 0 for k in cfg if k.startswith("aug.") and k.endswith("rate"))
    epochs = json.loads((out / "result.json").read_text())["epochs"]
    # the regularizer columns are logged unweighted; with zero weights they drop out of the total
    assert all(e["loss"] == e["sup"] for e in epochs)


def test_train_baseline(dataset, tmp_path, capsys):
    out = tmp_path / "bs"
    code, _, _ = run(["train", dataset, "--split", "s", "--out", out, *FAST, "--baseline", "balanced_softmax"],
                     capsys)
    assert code == 0 and json.loads((out / "config.json").read_text())["loss.baseline"] == "balanced_softmax"


def test_evaluate_matches_train(dataset, tmp_path, capsys):
    out = tmp_path / "e"
    run(["train", dataset, "--split", "s", "--out", out, *FAST], capsys)
    code, text, _ = run(["evaluate", out], capsys)
    doc = json.loads((out / "result.json").read_text())
    assert code == 0
    assert json.loads(text)["balanced_accuracy"] == pytest.approx(doc["test_metrics"]["balanced_accuracy"],
                                                                   abs=1e-12)


def test_flags_override_config_file(dataset, tmp_path, capsys):
    out = tmp_path / "o"
    run(["train", dataset, "--split", "s", "--out", out, *FAST], capsys)
    out2 = tmp_path / "o2"
    run(["train", "--config", out / "config.json", "--out", out2, "--epochs", "3"], capsys)
    assert json.loads((out2 / "config.json").read_text())["train.epochs"] == 3


# exit codes


def test_exit_usage(dataset, tmp_path, capsys):
    assert run(["train", dataset, "--split", "s", "--out", tmp_path / "x", "--set", "no.such=1"], capsys)[0] == 2
    assert run(["train", dataset, "--split", "s", "--out", tmp_path / "x", "--hidden", "17"], capsys)[0] == 2
    assert run(["nonsense"], capsys)[0] == 2
    assert run(["train", dataset, "--out", tmp_path / "x"], capsys)[0] == 2


def test_exit_io(dataset, tmp_path, capsys):
    assert run(["ingest-check", tmp_path / "missing"], capsys)[0] == 4
    assert run(["train", dataset, "--split", "nope", "--out", tmp_path / "x"], capsys)[0] == 4
    assert run(["report", tmp_path / "missing"], capsys)[0] == 4


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_exit_numeric(dataset, tmp_path, capsys):
    out = tmp_path / "n"
    code, _, err = run(["train", dataset, "--split", "s", "--out", out, "--hidden", "64", "--epochs", "5",
                        "--lr", "1e200"], capsys)
    assert code == 3 and "non-finite" in err
    doc = json.loads((out / "error.json").read_text())
    assert doc["last_good_checkpoint"] == "last_good.bin" and (out / "last_good.bin").is_file()


# report


def fake_manifest(root, seed, bacc, f1, **overrides):
    cfg = dict(RunConfig().to_flat(), **overrides)
    cfg.update({"train.seed": seed, "aug.seed": seed, "data.dir": "toy", "data.split": "s"})
    root.mkdir(parents=True)
    (root / "config.json").write_text(json.dumps(cfg))
    result = {"test_metrics": {"balanced_accuracy": bacc, "macro_f1": f1},
              "epochs": [{"loss": 1.0}, {"loss": 0.5}]}
    (root / "result.json").write_text(json.dumps(result))
    return root


def read_report(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_report_mean_stderr(tmp_path, capsys):
    vals = [0.5, 0.6, 0.7, 0.8, 0.9]
    f1s = [0.1, 0.2, 0.2, 0.3, 0.7]
    dirs = [fake_manifest(tmp_path / f"m{i}", i, v, f) for i, (v, f) in enumerate(zip(vals, f1s))]
    code, _, _ = run(["report", *dirs, "--out", tmp_path / "r.csv", "--plot", tmp_path / "r.svg"], capsys)
    assert code == 0 and (tmp_path / "r.svg").is_file()
    rows = read_report(tmp_path / "r.csv")
    assert len(rows) == 1 and tuple(rows[0]) == REPORT_COLUMNS
    row = rows[0]
    assert row["runs"] == "5"
    assert float(row["bacc_mean"]) == pytest.approx(0.7, abs=1e-15)
    # sum of squared deviations 0.1, sample variance 0.025
    assert float(row["bacc_stderr"]) == pytest.approx(math.sqrt(0.025 / 5), rel=1e-12)
    assert float(row["f1_mean"]) == pytest.approx(0.3, abs=1e-15)
    assert float(row["f1_stderr"]) == pytest.approx(math.sqrt(0.22 / 4 / 5), rel=1e-12)


def test_report_single_manifest(tmp_path, capsys):
    d = fake_manifest(tmp_path / "m", 0, 0.5, 0.4)
    run(["report", d, "--out", tmp_path / "r.csv"], capsys)
    row = read_report(tmp_path / "r.csv")[0]
    assert row["runs"] == "1" and row["bacc_stderr"] == "" and row["f1_stderr"] == ""


def test_report_groups_configs(tmp_path, capsys):
    dirs = [fake_manifest(tmp_path / f"a{i}", i, 0.5, 0.5) for i in range(2)]
    dirs += [fake_manifest(tmp_path / f"b{i}", i, 0.5, 0.5, **{"loss.lambda1": 0.0}) for i in range(3)]
    code, out, _ = run(["report", *dirs], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and sorted(r["runs"] for r in rows) == ["2", "3"]


def test_report_incompatible(tmp_path, capsys):
    a = fake_manifest(tmp_path / "a", 0, 0.5, 0.5)
    b = fake_manifest(tmp_path / "b", 1, 0.5, 0.5, **{"data.split": "other"})
    cfg = json.loads((b / "config.json").read_text())
    cfg["data.split"] = "other"
    (b / "config.json").write_text(json.dumps(cfg))
    assert run(["report", a, b], capsys)[0] == 2


# studies


def test_verify_theory_outputs(tmp_path, capsys):
    code, _, _ = run(["verify-theory", "--out", tmp_path / "v", "--samples", "20000", "--specs", "1"], capsys)
    rows = read_report(tmp_path / "v" / "summary.csv")
    assert code in (0, 3)
    assert len(rows) == len(list((tmp_path / "v" / "reports").glob("*.json")))
    assert code == (0 if all(r["passed"] == "1" for r in rows) else 3)


def test_variance_study_synthetic(tmp_path, capsys):
    out = tmp_path / "vs"
    code, _, _ = run(["variance-study", "--synthetic", "exact", "--out", out, "--plot"], capsys)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    rows = read_report(out / "variance.csv")
    assert summary["r"] > 0 and len(rows) > 1 and (out / "plots" / "variance.svg").is_file()


def test_grid_search(dataset, tmp_path, capsys):
    out = tmp_path / "g"
    space = tmp_path / "space.json"
    space.write_text(json.dumps({"loss.lambda1": [0.0, 1.0], "loss.tau": [1.0]}))
    code, _, _ = run(["grid-search", dataset, "--split", "s", "--out", out, "--budget", "2", "--space", space,
                      *FAST], capsys)
    assert code == 0
    board = json.loads((out / "leaderboard.json").read_text())
    assert len(board) == 2 and (out / "best_config.json").is_file()
