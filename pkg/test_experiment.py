#!/usr/bin/env python3
"""
Tests for load sampling, datasets, metrics, ablation, benchmarking and network morphism
"""
import json
import threading
import time
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from conftest import CASES
from experiment.ablation import BASELINE, CSV_COLUMNS, AblationMask, ablation_run, all_masks
from experiment.bench import bench, metric_sf_and_lcost
from experiment.dataset import (
    GroundTruth,
    Sample,
    ScenarioDataset,
    check_unique,
    generate_dataset,
)
from experiment.metrics import MetricsReport, metric_lcost, metric_mape, metric_sf, metric_su
from experiment.morphism import quality_prior_morphism, requirement_mape, task_mape
from experiment.pool import ScenarioPool
from experiment.sampling import Scenario, sample_loads
from grid.network import network_model
from grid.parser import import_ppc, load_case
from mtl.losses import LossWeights
from mtl.topology import MAIN_TASKS, TASKS
from mtl.training import TrainConfig, TrainingSet, build_network, evaluate_losses, train
from solver.options import IpmOptions
from solver.state import WarmStart
from utils.errors import ConfigError, DatasetError

CASE9_COST = 5296.6862


@pytest.fixture(scope="module")
def model9m():
    return network_model(load_case(CASES / "case9.m"))


@pytest.fixture(scope="module")
def dataset9(model9m):
    dataset, rejects = generate_dataset(model9m, sample_loads(model9m, 6, 0.1, seed=0))
    assert not rejects
    return dataset


@pytest.fixture(scope="module")
def net9(model9m, dataset9):
    data = TrainingSet.from_samples(dataset9.sorted(), model9m)
    net = build_network(model9m, data, TrainConfig(seed=1))
    trained, _ = train(net, data, None, model9m, TrainConfig(epochs=3, batch_size=3))
    return trained


def fake_sample(sample_id, n_bus=2):
    truth = GroundTruth(np.zeros(6), np.zeros(5), np.zeros(10), np.ones(10), 1.0, 0.5, 12)
    return Sample(Scenario(sample_id, np.zeros(n_bus), np.zeros(n_bus)), truth)


def test_zero_variation_reproduces_default_loads(case9):
    scenarios = sample_loads(case9, 3, 0.0)
    defaults = np.array([bus.pd for bus in case9.buses])
    for scenario in scenarios:
        assert np.array_equal(scenario.pd, defaults)


def test_sampled_loads_respect_their_band(case9):
    scenarios = sample_loads(case9, 50, 0.2, seed=4)
    pd0 = np.array([bus.pd for bus in case9.buses])
    qd0 = np.array([bus.qd for bus in case9.buses])
    for scenario in scenarios:
        assert np.all(scenario.pd >= 0.8 * pd0 - 1e-12) and np.all(scenario.pd <= 1.2 * pd0 + 1e-12)
        assert np.all(scenario.qd >= 0.8 * qd0 - 1e-12) and np.all(scenario.qd <= 1.2 * qd0 + 1e-12)
        # buses without load stay unloaded
        assert np.all(scenario.pd[pd0 == 0] == 0)
    assert len({s.id for s in scenarios}) == 50
    assert scenarios[0].id == "case9-4-000000"


def test_sampling_is_seeded(case9):
    first = sample_loads(case9, 5, 0.1, seed=7)
    second = sample_loads(case9, 5, 0.1, seed=7)
    other = sample_loads(case9, 5, 0.1, seed=8)
    assert all(np.array_equal(a.pd, b.pd) for a, b in zip(first, second))
    assert not np.array_equal(first[0].pd, other[0].pd)


@pytest.mark.parametrize("t", [1.0, -0.1, 1.5])
def test_load_variation_out_of_range(case9, t):
    with pytest.raises(ConfigError):
        sample_loads(case9, 3, t)


def test_scenario_shapes_must_agree():
    with pytest.raises(DatasetError):
        Scenario("bad", np.zeros(3), np.zeros(2))
    with pytest.raises(DatasetError):
        Scenario.from_dict({"id": "x", "pd": [1.0]})


def test_generated_samples_are_solver_optima(dataset9, model9m):
    assert len(dataset9) == 6
    for sample in dataset9:
        assert sample.truth.x.shape == (model9m.dims.n_x,)
        assert sample.truth.lam.shape == (model9m.dims.n_eq,)
        assert sample.truth.mu.shape == sample.truth.z.shape == (model9m.dims.n_ineq,)
        assert sample.truth.f0 == pytest.approx(CASE9_COST, rel=0.25)
        assert sample.truth.iterations > 0
        assert sample.truth.solve_time > 0


def test_infeasible_scenarios_are_rejected(model9m):
    loads = np.array([bus.pd for bus in model9m.case.buses])
    reactive = np.array([bus.qd for bus in model9m.case.buses])
    scenarios = [Scenario("ok", loads, reactive), Scenario("overload", loads * 10, reactive * 10)]
    dataset, rejects = generate_dataset(model9m, scenarios, IpmOptions(max_iterations=60))
    assert rejects == ["overload"]
    assert [s.id for s in dataset] == ["ok"]


def test_duplicate_scenario_ids(model9m):
    loads = np.zeros(9)
    with pytest.raises(DatasetError):
        check_unique([Scenario("a", loads, loads), Scenario("a", loads, loads)])
    with pytest.raises(DatasetError):
        generate_dataset(model9m, [Scenario("a", loads, loads), Scenario("a", loads, loads)])
    with pytest.raises(DatasetError):
        ScenarioDataset([fake_sample("a"), fake_sample("a")])


def test_split_is_eighty_twenty_and_order_free():
    samples = [fake_sample(f"s{i}") for i in range(10)]
    train_part, val_part = ScenarioDataset(samples).split()
    assert (len(train_part), len(val_part)) == (8, 2)
    again, _ = ScenarioDataset(samples[::-1]).split()
    assert [s.id for s in again] == [s.id for s in train_part]
    assert not {s.id for s in train_part} & {s.id for s in val_part}


def test_jsonl_round_trip(dataset9, tmp_path):
    path = tmp_path / "data.jsonl"
    dataset9.write_jsonl(path)
    loaded = ScenarioDataset.read_jsonl(path)
    assert [s.to_dict() for s in loaded.sorted()] == [s.to_dict() for s in dataset9.sorted()]
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"id", "pd", "qd", "x", "lambda", "mu", "z", "f0", "solve_time", "iterations"}


def test_jsonl_without_timing(dataset9, tmp_path):
    path = tmp_path / "data.jsonl"
    dataset9.write_jsonl(path, include_timing=False)
    assert all(s.truth.solve_time is None for s in ScenarioDataset.read_jsonl(path))


@pytest.mark.parametrize("line", ["{not json", "[1, 2]", json.dumps({"id": "a", "pd": [0], "qd": [0]})])
def test_unreadable_dataset_records(tmp_path, line):
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(DatasetError):
        ScenarioDataset.read_jsonl(path)


def test_training_set_from_samples(dataset9, model9m):
    data = TrainingSet.from_samples(dataset9.sorted(), model9m)
    assert len(data) == 6
    assert data.pd_mw.shape == (6, 9)
    assert data.targets["va"].shape == (6, 9)
    assert data.targets["pg"].shape == (6, 3)
    assert data.targets["mu"].shape == (6, model9m.dims.n_ineq)
    with pytest.raises(DatasetError):
        TrainingSet.from_samples([], model9m)
    with pytest.raises(DatasetError):
        TrainingSet.from_samples([fake_sample("a")], model9m)


def test_metric_su():
    assert metric_su(10, 0.1, 3, 1.0) == pytest.approx(3.2258, rel=1e-4)
    assert metric_su(10, 0.1, 3, 0.9) == pytest.approx(2.4390, rel=1e-4)
    assert metric_su(4.2, 0.0, 4.2, 1.0) == 1.0
    with pytest.raises(ConfigError):
        metric_su(10, 0.1, 3, 1.2)


def test_metric_mape():
    gt = np.array([1.0, 2.0, 4.0])
    assert metric_mape(1.1 * gt, gt) == pytest.approx(10.0, rel=1e-6)
    assert metric_mape(gt, gt) == 0.0
    # the denominator keeps its sign
    assert metric_mape([-1.1], [-1.0]) == pytest.approx(-10.0, rel=1e-6)
    assert metric_mape([], []) == 0.0
    with pytest.raises(ValueError):
        metric_mape([1.0, 2.0], [1.0])


def test_metric_sf_and_lcost_values():
    assert metric_sf([1.0, 2.0], [0.02, 0.04]) == pytest.approx(50.0)
    assert metric_lcost([100.0, 200.0], [100.0, 200.0]) == 0.0
    assert metric_lcost([110.0, 90.0], [100.0, 100.0]) == pytest.approx(10.0)
    assert metric_lcost([5.0, 110.0], [0.0, 100.0]) == pytest.approx(10.0)


def test_metrics_report_stamp():
    report = MetricsReport(su=None, su_iter=1.5, sr=1.0, sf=None, l_cost=0.0, iteration_ratio=0.5,
                           mape={}, relative_error={}, counts={"n": 0})
    assert "created_at" not in report.to_dict()
    assert report.to_dict()["notes"].startswith("SF = mean(T_solve / T_infer)")
    report.stamp()
    assert "created_at" in report.to_dict()


def test_pool_returns_results_in_key_order():
    def slow(value, delay):
        time.sleep(delay)
        return value * 2

    with ScenarioPool(workers=3) as pool:
        pool.submit("c", slow, 3, 0.0)
        pool.submit("a", slow, 1, 0.05)
        pool.submit("b", slow, 2, 0.01)
        assert pool.job_count() == 3
        results = pool.collect()
    assert list(results.items()) == [("a", 2), ("b", 4), ("c", 6)]
    assert pool.executor is None


def test_pool_rejects_duplicate_keys_and_reraises():
    def fail():
        raise RuntimeError("boom")

    with ScenarioPool() as pool:
        pool.submit("x", threading.get_ident)
        with pytest.raises(ValueError):
            pool.submit("x", threading.get_ident)
        pool.submit("y", fail)
        with pytest.raises(RuntimeError):
            pool.collect()


def test_masks_enumerate_all_sixteen():
    masks = all_masks()
    assert [m.label for m in masks][:3] == ["0000", "0001", "0010"]
    assert masks[-1].label == "1111"
    assert AblationMask.from_label("1000").tasks() == list(MAIN_TASKS)
    assert AblationMask.from_label("0110").tasks() == ["lambda", "mu"]
    assert BASELINE.label == "0000"
    with pytest.raises(ValueError):
        AblationMask.from_label("10a1")


def test_mask_keeps_only_chosen_components():
    ws = WarmStart(x=np.ones(2), lam=np.ones(3), mu=np.ones(4), z=np.ones(4))
    masked = AblationMask.from_label("1001").apply(ws)
    assert masked.x is not None and masked.z is not None
    assert masked.lam is None and masked.mu is None


def test_ablation_table(dataset9, model9m, tmp_path):
    samples = dataset9.sorted()[:2]
    table = ablation_run(model9m, samples, deterministic=True)
    assert len(table.rows) == 16
    baseline = table.row("0000")
    assert baseline.sr == 1.0 and baseline.su == 1.0 and baseline.su_iter == 1.0
    full = table.row("1111")
    assert full.sr == 1.0
    assert full.mean_iterations <= baseline.mean_iterations
    assert full.su == full.su_iter
    assert table.row("1000").sr == 1.0
    for row in table.rows:
        assert row.n == 2

    path = tmp_path / "ablation.csv"
    table.write_csv(path)
    frame = pd.read_csv(path, dtype={"mask": str})
    assert list(frame.columns) == CSV_COLUMNS
    assert list(frame["mask"]) == [m.label for m in all_masks()]

    observed = table.observations()
    assert observed["sr_0000"] == 1.0
    assert observed["z_only_below_baseline"] == (table.row("0001").sr < 1.0)
    assert observed["precise_x_always_converges"] == all(row.sr == 1.0 for row in table.rows if row.mask.use_x)
    assert observed["full_mask_iteration_ratio"] == full.iteration_ratio
    assert table.to_dict()["observations"] == observed


def test_ablation_always_includes_baseline(dataset9, model9m):
    table = ablation_run(model9m, dataset9.sorted()[:1], masks=[AblationMask.from_label("1111")])
    assert [row.mask.label for row in table.rows] == ["0000", "1111"]
    assert table.row("1111").iteration_ratio <= 1.0
    observed = table.observations()
    assert observed["sr_0001"] is None and observed["z_only_below_baseline"] is None
    assert observed["full_mask_fewest_iterations"] is True


def test_bench_deterministic_report(dataset9, model9m, net9):
    report = bench(model9m, dataset9.sorted()[:3], net9, deterministic=True)
    data = report.to_dict()
    assert data["su"] is None and data["sf"] is None and data["timings"] is None
    assert "created_at" not in data
    assert data["counts"]["n"] == 3
    assert data["counts"]["converged"] == 3
    assert 0.0 <= data["sr"] <= 1.0
    assert set(data["mape"]) == set(TASKS)
    assert all(row["t_cold"] is None and row["t_infer"] is None for row in report.rows)
    assert all(row["cold_iterations"] > 0 for row in report.rows)
    again = bench(model9m, dataset9.sorted()[:3], net9, deterministic=True)
    assert again.to_dict() == data


def test_bench_timed_report(dataset9, model9m, net9, tmp_path):
    report = bench(model9m, dataset9.sorted()[:2], net9)
    data = report.to_dict()
    assert data["su"] is not None and data["sf"] > 0
    assert set(data["timings"]) == {"t_cold", "t_infer", "t_warm"}
    assert "created_at" in data
    report.write_json(tmp_path / "bench.json")
    report.write_csv(tmp_path / "bench.csv")
    assert len(pd.read_csv(tmp_path / "bench.csv")) == 2


def test_sf_and_lcost(dataset9, model9m, net9):
    sf, l_cost = metric_sf_and_lcost(dataset9.sorted()[:2], net9, model9m)
    assert sf > 0
    assert l_cost >= 0
    untimed_sf, untimed_lcost = metric_sf_and_lcost(dataset9.sorted()[:2], net9, model9m, timed=False)
    assert untimed_sf is None
    assert untimed_lcost == pytest.approx(l_cost)


def test_deterministic_bench_skips_cold_timing(dataset9, model9m, net9, monkeypatch):
    untimed = [replace(s, truth=replace(s.truth, solve_time=None)) for s in dataset9.sorted()[:2]]

    def no_cold_solve(*args, **kwargs):
        raise AssertionError("cold solve should not run without timing")

    monkeypatch.setattr("experiment.bench.solve", no_cold_solve)
    report = bench(model9m, untimed, net9, deterministic=True)
    _, l_cost = metric_sf_and_lcost(untimed, net9, model9m, timed=False)
    assert report.l_cost == pytest.approx(l_cost)
    assert report.counts["converged"] == 2


def test_requirement_mape_uses_main_tasks():
    mapes = {task: 100.0 for task in TASKS}
    mapes.update({"va": 2.0, "vm": -4.0, "pg": 6.0, "qg": 8.0})
    assert requirement_mape(mapes) == 5.0


def test_task_mape_skips_negligible_truth(dataset9, model9m, net9):
    data = TrainingSet.from_samples(dataset9.sorted(), model9m)
    mapes = task_mape(net9, data)
    assert set(mapes) == set(TASKS)
    # the reference angle is always zero and must not blow up the va error
    assert np.isfinite(mapes["va"])


def test_morphism_stops_when_requirement_met(dataset9, model9m, net9):
    data = TrainingSet.from_samples(dataset9.sorted(), model9m)
    result = quality_prior_morphism(net9, data, data, model9m, requirement=1e12)
    assert result.met and not result.cap_reached
    assert result.rounds == []
    assert result.net is net9


def test_morphism_round_grows_and_retrains(dataset9, model9m, net9):
    data = TrainingSet.from_samples(dataset9.sorted(), model9m)
    result = quality_prior_morphism(net9, data, data, model9m, requirement=-1.0,
                                    config=TrainConfig(epochs=1, batch_size=3),
                                    opts=IpmOptions(max_iterations=60), max_rounds=1, probe_size=1)
    assert result.cap_reached and not result.met
    assert len(result.rounds) == 1
    first = result.rounds[0]
    assert first.operation == "deep"
    assert len(first.prior_su) == 16
    assert first.best_mask in first.prior_su
    assert len(result.net.topology.shared_dims) == len(net9.topology.shared_dims) + 1
    assert result.to_dict()["shared_dims"] == result.net.topology.shared_dims


def split_training_sets(model, n, seed):
    dataset, rejects = generate_dataset(model, sample_loads(model, n, 0.1, seed=seed))
    train_samples, val_samples = dataset.split()
    return (TrainingSet.from_samples(train_samples, model), TrainingSet.from_samples(val_samples, model),
            val_samples, rejects)


@pytest.mark.slow
def test_warm_starts_pay_off_end_to_end(model9m):
    """Train on case9 scenarios, then warm-start the validation solves from the network"""
    train_set, val_set, val_samples, rejects = split_training_sets(model9m, 200, seed=11)
    assert len(rejects) <= 10
    config = TrainConfig(epochs=100, batch_size=16, learning_rate=3e-3)
    net, log = train(build_network(model9m, train_set, config), train_set, val_set, model9m, config)
    assert log.rows[-1]["val_L"] < log.rows[0]["val_L"]

    report = bench(model9m, val_samples, net, deterministic=True)
    assert report.counts["converged"] == report.counts["n"]
    assert report.sr >= 0.9
    assert report.iteration_ratio <= 0.6
    for task in MAIN_TASKS:
        assert report.relative_error[task]["median"] <= 0.05, task

    table = ablation_run(model9m, val_samples[:5], deterministic=True)
    assert table.row("1111").sr == 1.0
    assert table.row("1111").su_iter > 1.0


@pytest.mark.slow
def test_physics_terms_help_the_warm_start(model9m):
    train_set, val_set, val_samples, _ = split_training_sets(model9m, 80, seed=21)
    config = TrainConfig(epochs=80, batch_size=16, learning_rate=3e-3, seed=2)
    start = build_network(model9m, train_set, config)

    informed, _ = train(start, train_set, None, model9m, config, LossWeights())
    supervised, _ = train(start, train_set, None, model9m, config, LossWeights().physics_off())
    nets = {"informed": informed, "supervised": supervised}
    residual = {name: evaluate_losses(net, val_set, model9m, LossWeights())["L_eqn"] for name, net in nets.items()}
    assert residual["informed"] < residual["supervised"]
    sr = {name: bench(model9m, val_samples, net, deterministic=True).sr for name, net in nets.items()}
    assert sr["informed"] >= sr["supervised"]


@pytest.mark.slow
def test_shared_trunk_against_separate_nets(model9m):
    train_set, _, val_samples, _ = split_training_sets(model9m, 120, seed=31)
    sizes, sr = {}, {}
    for mode in ("shared", "separate"):
        config = TrainConfig(epochs=80, batch_size=16, learning_rate=3e-3, seed=3, trunk_mode=mode)
        net, _ = train(build_network(model9m, train_set, config), train_set, None, model9m, config)
        sizes[mode] = net.parameter_count()
        sr[mode] = bench(model9m, val_samples, net, deterministic=True).sr
    assert abs(sizes["separate"] - sizes["shared"]) / sizes["shared"] < 0.03
    assert sr["shared"] >= sr["separate"]


@pytest.mark.slow
def test_case30_ablation_observations():
    cases = pytest.importorskip("pypower.api")
    model = network_model(import_ppc(cases.case30(), name="case30"))
    dataset, _ = generate_dataset(model, sample_loads(model, 20, 0.1, seed=30))
    table = ablation_run(model, dataset.sorted(), deterministic=True)
    observed = table.observations()
    assert table.row("1000").sr == 1.0
    assert observed["full_mask_fewest_iterations"] is True
    assert observed["full_mask_iteration_ratio"] <= 0.5
    assert observed["sr_0001"] == table.row("0001").sr
    assert observed["z_only_below_baseline"] == (table.row("0001").sr < table.row("0000").sr)
