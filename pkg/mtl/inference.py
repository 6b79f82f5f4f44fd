from typing import Dict, List

import numpy as np

from mtl.network import MtlNetwork
from mtl.topology import MAIN_TASKS, TASKS
from pfmath.power import as_model
from solver.state import WarmStart
from utils.errors import DimensionError


def warm_starts_from_predictions(predictions: Dict[str, np.ndarray]) -> List[WarmStart]:
    """One WarmStart per row of a batched prediction; mu and z are kept non-negative"""
    x = np.concatenate([predictions[task] for task in MAIN_TASKS], axis=1)
    mu = np.maximum(predictions["mu"], 0.0)
    z = np.maximum(predictions["z"], 0.0)
    return [WarmStart(x=x[i], lam=predictions["lambda"][i], mu=mu[i], z=z[i]) for i in range(len(x))]


def predict_warm_start(net: MtlNetwork, pd_mw, qd_mvar, case) -> WarmStart:
    """Warm start for a single load profile (MW/MVAr per bus)"""
    model = as_model(case)
    pd_mw, qd_mvar = np.asarray(pd_mw, dtype=float), np.asarray(qd_mvar, dtype=float)
    if pd_mw.shape != (model.n_bus,) or qd_mvar.shape != (model.n_bus,):
        raise DimensionError(f"loads must have one entry per bus ({model.n_bus})")
    return warm_starts_from_predictions(net.predict(pd_mw, qd_mvar))[0]


def relative_error_report(predictions: Dict[str, np.ndarray], truth: Dict[str, np.ndarray]) -> Dict[str, dict]:
    """Median and mean |v - v_gt| / |v_gt| per task over entries with non-zero ground truth"""
    report = {}
    for task in TASKS:
        gt = np.asarray(truth[task], dtype=float)
        error = np.abs(np.asarray(predictions[task], dtype=float) - gt)
        nonzero = np.abs(gt) > 0
        ratios = error[nonzero] / np.abs(gt[nonzero])
        report[task] = {
            "median": float(np.median(ratios)) if ratios.size else 0.0,
            "mean": float(np.mean(ratios)) if ratios.size else 0.0,
            "count": int(ratios.size),
        }
    return report
