#!/usr/bin/env python3
"""
Tests for the smartpg command line: subcommands, outputs and exit codes
"""
import json

import pandas as pd
import pytest

from conftest import CASES, two_bus_case
from grid.parser import load_case, serialize_case
from main import main
from solver.ipm import solve

CASE9 = str(CASES / "case9.m")


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset and trained model for case9, built once through the CLI"""
    root = tmp_path_factory.mktemp("cli")
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv("SMARTPG_LOG_FILE", str(root / "smartpg.log"))
        mp.delenv("SMARTPG_THREADS", raising=False)
        config = write_json(root / "config.json", {"train": {"epochs": 2, "batch_size": 4}})
        dataset = root / "data.jsonl"
        model = root / "model.json"
        assert main(["dataset", "gen", CASE9, "-n", "6", "-t", "0.1", "--seed", "3", "-o", str(dataset)]) == 0
        assert main(["train", CASE9, str(dataset), "--config", config, "-o", str(model),
                     "--log", str(root / "train.csv")]) == 0
    return root, config, dataset, model


def test_validate_reports_dimensions(capsys):
    assert main(["case", "validate", CASE9]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["valid"] is True
    assert report["n_bus"] == 9 and report["n_eq"] == 19


def test_validate_flags_invalid_case(tmp_path, capsys):
    data = json.loads(serialize_case(two_bus_case()))
    data["buses"][1]["kind"] = "ref"
    path = write_json(tmp_path / "bad.json", data)
    assert main(["case", "validate", path]) == 1
    assert json.loads(capsys.readouterr().out)["valid"] is False


@pytest.mark.parametrize("argv", [[], ["solve"], ["frobnicate"], ["case", "validate"], ["solve", CASE9, "--workers", "x"]])
def test_usage_errors(argv):
    assert main(argv) == 1


def test_case_import_round_trip(tmp_path):
    output = tmp_path / "case9.json"
    assert main(["case", "import", CASE9, "-o", str(output)]) == 0
    assert load_case(output) == load_case(CASE9)


def test_solve_writes_report_and_history(tmp_path):
    output, history = tmp_path / "report.json", tmp_path / "history.csv"
    assert main(["solve", CASE9, "-o", str(output), "--history", str(history)]) == 0
    document = json.loads(output.read_text())
    assert document["report"]["converged"] is True
    assert document["point"]["objective"] == pytest.approx(5296.6862, rel=1e-4)
    assert len(document["point"]["pg_mw"]) == 3
    assert len(pd.read_csv(history)) == document["report"]["iterations"]


def test_deterministic_solve_is_byte_identical(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["solve", CASE9, "--deterministic", "-o", str(first)]) == 0
    assert main(["solve", CASE9, "--deterministic", "-o", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text())["report"]["wall_time"] is None


def test_solve_from_warm_start(tmp_path, case9):
    point, _ = solve(case9)
    warm = write_json(tmp_path / "warm.json", point.warm_start().to_dict())
    output = tmp_path / "report.json"
    assert main(["solve", CASE9, "--warm-start", warm, "-o", str(output)]) == 0
    report = json.loads(output.read_text())["report"]
    assert report["iterations"] <= 3
    assert report["fallback_used"] is False


def test_non_converged_solve_exits_3(tmp_path):
    case = write_json(tmp_path / "overload.json", json.loads(serialize_case(two_bus_case(pd=500.0))))
    config = write_json(tmp_path / "config.json", {"ipm": {"max_iterations": 40}})
    assert main(["solve", case, "--config", config, "--no-fallback"]) == 3


def test_bad_configuration_exits_1(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{\"ipm\": ")
    assert main(["solve", CASE9, "--config", str(broken)]) == 1
    unknown = write_json(tmp_path / "unknown.json", {"optimizer": {}})
    assert main(["solve", CASE9, "--config", unknown]) == 1
    bad_option = write_json(tmp_path / "option.json", {"ipm": {"xi": 2.0}})
    assert main(["solve", CASE9, "--config", bad_option]) == 1


def test_bad_thread_count_exits_1(monkeypatch):
    monkeypatch.setenv("SMARTPG_THREADS", "0")
    assert main(["case", "validate", CASE9]) == 1


def test_missing_file_exits_4(tmp_path):
    assert main(["solve", str(tmp_path / "nowhere.m")]) == 4


def test_malformed_case_exits_2(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"base_mva\": 100}")
    assert main(["solve", str(path)]) == 2


def test_deterministic_dataset_is_byte_identical(tmp_path):
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    argv = ["dataset", "gen", CASE9, "-n", "3", "-t", "0.1", "--deterministic"]
    assert main(argv + ["-o", str(first)]) == 0
    assert main(argv + ["-o", str(second), "--workers", "2"]) == 0
    assert first.read_bytes() == second.read_bytes()
    records = [json.loads(line) for line in first.read_text().splitlines()]
    assert len(records) == 3
    assert all(record["solve_time"] is None for record in records)


def test_training_outputs(workspace):
    root, _, _, model = workspace
    document = json.loads(model.read_text())
    assert document["format_version"] == "1"
    log = pd.read_csv(root / "train.csv")
    assert list(log["epoch"]) == [0, 1]


def test_predict_writes_warm_start(workspace, tmp_path, case9):
    _, _, _, model = workspace
    loads = write_json(tmp_path / "loads.json", {"pd": [bus.pd for bus in case9.buses],
                                                 "qd": [bus.qd for bus in case9.buses]})
    output = tmp_path / "warm.json"
    assert main(["predict", CASE9, str(model), "--loads", loads, "-o", str(output)]) == 0
    ws = json.loads(output.read_text())
    assert len(ws["x"]) == 24
    assert min(ws["mu"]) >= 0 and min(ws["z"]) >= 0
    # a predicted warm start is accepted by solve
    assert main(["solve", CASE9, "--warm-start", str(output)]) == 0


def test_predict_rejects_bad_loads(workspace, tmp_path):
    _, _, _, model = workspace
    short = write_json(tmp_path / "short.json", {"pd": [1.0, 2.0], "qd": [0.0, 0.0]})
    assert main(["predict", CASE9, str(model), "--loads", short, "-o", str(tmp_path / "w.json")]) == 2
    shapeless = write_json(tmp_path / "list.json", [1.0, 2.0])
    assert main(["predict", CASE9, str(model), "--loads", shapeless, "-o", str(tmp_path / "w.json")]) == 2


def test_model_for_another_case_exits_2(workspace, tmp_path):
    _, _, _, model = workspace
    loads = write_json(tmp_path / "loads.json", {"pd": [0.0] * 14, "qd": [0.0] * 14})
    assert main(["predict", str(CASES / "case14.m"), str(model), "--loads", loads,
                 "-o", str(tmp_path / "w.json")]) == 2


def test_ablate_writes_sixteen_rows(workspace, tmp_path):
    _, _, dataset, _ = workspace
    output, summary = tmp_path / "ablation.csv", tmp_path / "ablation.json"
    assert main(["ablate", CASE9, str(dataset), "--limit", "1", "--deterministic",
                 "-o", str(output), "--json", str(summary)]) == 0
    frame = pd.read_csv(output, dtype={"mask": str})
    assert len(frame) == 16
    assert frame.loc[frame["mask"] == "0000", "su"].item() == 1.0
    document = json.loads(summary.read_text())
    assert len(document["rows"]) == 16
    assert document["observations"]["sr_0000"] == 1.0


def test_bench_report(workspace, tmp_path):
    _, _, dataset, model = workspace
    output, rows = tmp_path / "bench.json", tmp_path / "bench.csv"
    assert main(["bench", CASE9, str(model), str(dataset), "--deterministic",
                 "-o", str(output), "--csv", str(rows)]) == 0
    report = json.loads(output.read_text())
    assert report["su"] is None and report["sf"] is None
    assert 0.0 <= report["sr"] <= 1.0
    assert report["counts"]["converged"] == report["counts"]["n"]
    assert len(pd.read_csv(rows)) == report["counts"]["n"]


def test_morph_with_met_requirement(workspace, tmp_path):
    _, config, dataset, model = workspace
    output, summary = tmp_path / "grown.json", tmp_path / "morph.json"
    assert main(["morph", CASE9, str(model), str(dataset), "--target-mape", "1e12", "--config", config,
                 "-o", str(output), "--summary", str(summary)]) == 0
    result = json.loads(summary.read_text())
    assert result["met"] is True and result["rounds"] == []
    assert json.loads(output.read_text())["topology"] == json.loads(model.read_text())["topology"]


def test_empty_dataset_exits_2(workspace, tmp_path):
    _, _, _, model = workspace
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["bench", CASE9, str(model), str(empty), "-o", str(tmp_path / "bench.json")]) == 2
