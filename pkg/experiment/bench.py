import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from experiment.metrics import MetricsReport, metric_lcost, metric_mape, metric_sf, metric_su
from experiment.pool import ScenarioPool
from mtl.inference import relative_error_report, warm_starts_from_predictions
from mtl.network import MtlNetwork
from mtl.topology import TASKS
from mtl.training import TrainingSet
from pfmath.power import as_model, cost_f
from solver.ipm import solve, solve_with_fallback
from solver.options import IpmOptions

logger = logging.getLogger(__name__)


def _timed_prediction(net: MtlNetwork, sample):
    started = time.perf_counter()
    prediction = net.predict(sample.scenario.pd, sample.scenario.qd)
    return prediction, time.perf_counter() - started


def _cold_time(model, sample, opts: IpmOptions) -> float:
    if sample.truth.solve_time:
        return sample.truth.solve_time
    _, report = solve(model, None, opts)
    return report.wall_time


def _measure(model, net: MtlNetwork, sample, opts: IpmOptions, timed: bool) -> dict:
    """Prediction of one sample with its inference time, cold solve time and predicted cost"""
    scenario_model = model.with_loads(sample.scenario.pd, sample.scenario.qd)
    prediction, t_infer = _timed_prediction(net, sample)
    ws = warm_starts_from_predictions(prediction)[0]
    return {
        "model": scenario_model,
        "warm_start": ws,
        "prediction": prediction,
        "t_infer": t_infer,
        "t_cold": _cold_time(scenario_model, sample, opts) if timed else None,
        "cost_pred": cost_f(scenario_model, ws.x),
        "cost_true": sample.truth.f0,
    }


def metric_sf_and_lcost(samples: Sequence, net: MtlNetwork, case, opts: Optional[IpmOptions] = None,
                        timed: bool = True, measurements: Optional[List[dict]] = None
                        ) -> Tuple[Optional[float], float]:
    """Inference speedup factor over the full solve, and the cost deviation of the raw prediction in percent

    Pass measurements already taken for the samples to skip predicting again.
    Untimed runs report no speedup factor.
    """
    opts = opts or IpmOptions()
    if measurements is None:
        model = as_model(case)
        measurements = [_measure(model, net, sample, opts, timed) for sample in samples]
    l_cost = metric_lcost([m["cost_pred"] for m in measurements], [m["cost_true"] for m in measurements])
    if not timed or not measurements:
        return None, l_cost
    return metric_sf([m["t_cold"] for m in measurements], [m["t_infer"] for m in measurements]), l_cost


def _bench_one(model, net: MtlNetwork, sample, opts: IpmOptions, timed: bool) -> dict:
    measured = _measure(model, net, sample, opts, timed)
    _, report = solve_with_fallback(measured.pop("model"), measured.pop("warm_start"), opts)
    warm_converged = report.converged and not report.fallback_used
    return {
        "id": sample.id,
        "warm_converged": warm_converged,
        "converged": report.converged,
        "fallback_used": report.fallback_used,
        "warm_iterations": report.prior_iterations if report.fallback_used else report.iterations,
        "total_iterations": report.total_iterations,
        "cold_iterations": sample.truth.iterations,
        "t_warm": report.prior_wall_time if report.fallback_used else report.wall_time,
        "t_total": report.wall_time + measured["t_infer"],
        **measured,
    }


def _mape_summary(rows: List[dict], truth: TrainingSet) -> dict:
    summary = {}
    for task in TASKS:
        per_sample = [metric_mape(row["prediction"][task], truth.targets[task][i]) for i, row in enumerate(rows)]
        summary[task] = {
            "mean": float(np.mean(per_sample)) if per_sample else 0.0,
            "median": float(np.median(per_sample)) if per_sample else 0.0,
        }
    return summary


def bench(case, samples: Sequence, net: MtlNetwork, opts: Optional[IpmOptions] = None,
          workers: int = 1, deterministic: bool = False) -> MetricsReport:
    """Warm-start every sample from the network, falling back to a cold start on failure

    SR counts warm attempts that converged before any fallback. Wall-clock
    fields are left empty in deterministic runs; iteration-based SU stays.
    """
    opts = opts or IpmOptions()
    model = as_model(case)
    samples = sorted(samples, key=lambda s: s.id)
    with ScenarioPool(workers) as pool:
        for sample in samples:
            pool.submit(sample.id, _bench_one, model, net, sample, opts, not deterministic)
        rows = list(pool.collect().values())

    n = len(rows)
    succeeded = [row for row in rows if row["warm_converged"]]
    sr = len(succeeded) / n if n else 0.0
    cold_iterations = float(np.mean([row["cold_iterations"] for row in rows])) if n else 0.0
    warm_iterations = float(np.mean([row["warm_iterations"] for row in succeeded])) if succeeded else 0.0
    su_iter = metric_su(cold_iterations, 0.0, warm_iterations, sr) if n and cold_iterations else 0.0
    iteration_ratio = float(np.mean([row["warm_iterations"] / max(row["cold_iterations"], 1) for row in succeeded])) \
        if succeeded else None

    truth = TrainingSet.from_samples(samples, model) if samples else None
    predictions = {task: np.array([np.ravel(row["prediction"][task]) for row in rows]) for task in TASKS}
    sf, l_cost = metric_sf_and_lcost(samples, net, model, opts, timed=not deterministic, measurements=rows)
    report = MetricsReport(
        su=None,
        su_iter=su_iter,
        sr=sr,
        sf=None,
        l_cost=l_cost,
        iteration_ratio=iteration_ratio,
        mape=_mape_summary(rows, truth) if truth else {},
        relative_error=relative_error_report(predictions, truth.targets) if truth else {},
        counts={
            "n": n,
            "warm_converged": len(succeeded),
            "fallback_used": sum(row["fallback_used"] for row in rows),
            "converged": sum(row["converged"] for row in rows),
        },
    )
    if not deterministic and n:
        t_cold = float(np.mean([row["t_cold"] for row in rows]))
        t_infer = float(np.mean([row["t_infer"] for row in rows]))
        t_warm = float(np.mean([row["t_warm"] for row in succeeded])) if succeeded else 0.0
        report.su = metric_su(t_cold, t_infer, t_warm, sr)
        report.sf = sf
        report.timings = {"t_cold": t_cold, "t_infer": t_infer, "t_warm": t_warm}
        report.stamp()

    timing_columns = ("t_infer", "t_warm", "t_total", "t_cold")
    report.rows = [
        {key: (None if deterministic and key in timing_columns else value)
         for key, value in row.items() if key != "prediction"}
        for row in rows
    ]
    logger.info(f"📊 Bench: SR {sr:.1%}, SU(iter) {su_iter:.3f}, fallbacks {report.counts['fallback_used']}")
    return report
