import csv

import pytest
import yaml

from src.cli.interface import (
    EXIT_CONFIG,
    EXIT_MISSING_FILE,
    EXIT_OK,
    EXIT_USAGE,
    MetricRecord,
    read_metrics,
    run,
    run_cli,
    write_metrics,
)
from src.core.config import ExperimentConfig
from src.core.evaluation.ranking import EvalResult
from src.core.storage.history_db import ExperimentHistoryDB


def _record(model="twin_cf_lgcn_u", recall=0.125):
    results = {10: EvalResult(10, recall, 0.0625, 4), 20: EvalResult(20, 2 * recall, 0.125, 4)}
    return MetricRecord(model, 3, "concat", results, seed=1, wall_time=12.5)


def test_metrics_file_header_and_rows(tmp_path):
    path = write_metrics([_record()], tmp_path / "metrics.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["model", "layers", "fusion", "recall@10", "ndcg@10", "recall@20", "ndcg@20", "seed", "wall_time"]
    assert rows[1] == ["twin_cf_lgcn_u", "3", "concat", "12.5000", "6.2500", "25.0000", "12.5000", "1", "12.50"]


def test_metrics_file_appends(tmp_path):
    path = tmp_path / "metrics.csv"
    write_metrics([_record("a")], path)
    write_metrics([_record("b", 0.25)], path)
    with open(path) as f:
        assert len(f.read().splitlines()) == 3

    parsed = read_metrics(path)
    assert [row["model"] for row in parsed] == ["a", "b"]
    assert parsed[1]["recall@10"] == pytest.approx(25.0)
    assert parsed[1]["layers"] == 3 and parsed[1]["seed"] == 1


def test_metrics_file_rejects_other_columns(tmp_path):
    path = tmp_path / "metrics.csv"
    write_metrics([_record()], path)
    other = MetricRecord("x", 1, "mean", {5: EvalResult(5, 0.1, 0.1, 1)}, seed=0)
    with pytest.raises(ValueError):
        write_metrics([other], path)
    with pytest.raises(ValueError):
        write_metrics([], tmp_path / "empty.csv")


def test_unknown_command():
    assert run_cli(["bogus"]) == EXIT_USAGE
    assert run("bogus", ExperimentConfig()) == EXIT_USAGE


def test_configuration_errors(tmp_path):
    assert run_cli(["verify", "--set", "nonsense=1"]) == EXIT_CONFIG
    assert run_cli(["verify", "--config", str(tmp_path / "missing.yaml")]) == EXIT_MISSING_FILE


def test_train_without_dataset_fails_and_is_recorded(tmp_path):
    db = ExperimentHistoryDB(str(tmp_path / "history.db"))
    code = run("train", ExperimentConfig(output_dir=str(tmp_path / "out")), db=db)
    assert code == EXIT_CONFIG
    assert db.leaderboard("test", 20) == []


def test_verify_writes_report(tmp_path):
    code = run_cli(["verify", "--suite", "bpr_fixed_points", "--set", f"output_dir={tmp_path}"])
    assert code == EXIT_OK
    report = yaml.safe_load((tmp_path / "verification.yaml").read_text())
    assert report["valid"] is True
    assert report["checks"][0]["name"] == "bpr_fixed_points"


@pytest.mark.slow
def test_end_to_end_workflow(tmp_path):
    data, out = tmp_path / "data", tmp_path / "out"
    common = [
        "--set", f"dataset={data}", "--set", f"output_dir={out}",
        "--set", "layers=2", "--set", "include_layer0=false", "--set", "dim=8",
        "--set", "learning_rate=0.05", "--set", "max_epochs=10", "--set", "eval_every=5",
        "--set", "k=[5, 10]",
    ]
    assert run_cli(["synthetic", "--users", "20", "--items", "20"] + common) == EXIT_OK
    assert (data / "train.txt").exists() and (data / "test.txt").exists()

    assert run_cli(["prepare-data"] + common) == EXIT_OK
    assert (out / "split_manifest.txt").exists()

    assert run_cli(["train"] + common) == EXIT_OK
    for name in ("checkpoint/manifest.yaml", "training_log.csv", "metrics.csv", "report.txt"):
        assert (out / name).exists(), name

    assert run_cli(["evaluate"] + common) == EXIT_OK
    rows = read_metrics(out / "metrics.csv")
    assert len(rows) == 2
    assert rows[0]["recall@5"] == pytest.approx(rows[1]["recall@5"])

    edges = tmp_path / "new.txt"
    edges.write_text("100 0 1 2 500\n101 10 11\n3 500\n")
    assert run_cli(["infer-inductive", "--edges", str(edges)] + common) == EXIT_OK
    lines = (out / "recommendations.txt").read_text().splitlines()
    recs = {int(line.split()[0]): [int(t) for t in line.split()[1:]] for line in lines}
    assert set(recs) == {3, 100, 101}
    assert len(recs[100]) == 10
    assert not {0, 1, 2, 500} & set(recs[100])

    grid = tmp_path / "grid.yaml"
    grid.write_text("layers: [2, 3]\n")
    assert run_cli(["sweep", "--grid", str(grid)] + common) == EXIT_OK
    with open(out / "leaderboard.csv", newline="") as f:
        board = list(csv.DictReader(f))
    assert sorted(int(row["layers"]) for row in board) == [2, 3]
