import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from utils.errors import ConfigError

SF_NOTE = "SF = mean(T_solve / T_infer): full cold-solve time over pure inference time, larger is faster"


def metric_su(t_mips: float, t_mtl: float, t_mips_warm: float, sr: float) -> float:
    """End-to-end speedup with a full cold restart charged for every failed warm start"""
    if not 0 <= sr <= 1:
        raise ConfigError(f"success rate must lie in [0, 1], got {sr}")
    return t_mips / (t_mtl + t_mips_warm + t_mips * (1 - sr))


def metric_mape(x, gt, epsilon: float = 1e-9) -> float:
    """Mean absolute percentage error with the signed denominator gt + epsilon"""
    x, gt = np.asarray(x, dtype=float).ravel(), np.asarray(gt, dtype=float).ravel()
    if x.shape != gt.shape:
        raise ValueError(f"metric_mape: length mismatch {x.size} vs {gt.size}")
    if not x.size:
        return 0.0
    return float(100.0 / x.size * np.sum(np.abs(x - gt) / (gt + epsilon)))


def metric_sf(t_solve, t_infer) -> float:
    t_solve, t_infer = np.asarray(t_solve, dtype=float), np.asarray(t_infer, dtype=float)
    return float(np.mean(t_solve / t_infer)) if t_solve.size else 0.0


def metric_lcost(predicted_costs, true_costs) -> float:
    """Average fractional cost deviation in percent; samples with zero true cost are skipped"""
    predicted, true = np.asarray(predicted_costs, dtype=float), np.asarray(true_costs, dtype=float)
    usable = true != 0
    if not np.any(usable):
        return 0.0
    return float(100.0 / np.count_nonzero(usable) * np.sum(np.abs(1 - predicted[usable] / true[usable])))


@dataclass
class MetricsReport:
    su: Optional[float]
    su_iter: float
    sr: float
    sf: Optional[float]
    l_cost: float
    iteration_ratio: Optional[float]
    mape: Dict[str, dict]
    relative_error: Dict[str, dict]
    counts: Dict[str, int]
    timings: Optional[Dict[str, float]] = None
    notes: str = SF_NOTE
    created_at: Optional[str] = None
    rows: List[dict] = field(default_factory=list)

    def stamp(self):
        self.created_at = datetime.now(timezone.utc).isoformat()

    def to_dict(self) -> dict:
        data = {
            "su": self.su,
            "su_iter": self.su_iter,
            "sr": self.sr,
            "sf": self.sf,
            "l_cost": self.l_cost,
            "iteration_ratio": self.iteration_ratio,
            "mape": self.mape,
            "relative_error": self.relative_error,
            "counts": self.counts,
            "timings": self.timings,
            "notes": self.notes,
        }
        if self.created_at is not None:
            data["created_at"] = self.created_at
        return data

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    def write_csv(self, path):
        """Per-scenario rows behind the aggregate numbers"""
        pd.DataFrame(self.rows).to_csv(path, index=False)
