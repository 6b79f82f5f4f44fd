from dataclasses import dataclass
from typing import List

import numpy as np

from pfmath.power import as_model
from utils.errors import ConfigError, DatasetError


@dataclass(frozen=True)
class Scenario:
    """One load profile in MW/MVAr, one entry per bus"""
    id: str
    pd: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        if np.shape(self.pd) != np.shape(self.qd):
            raise DatasetError(f"scenario {self.id}: pd and qd lengths differ")

    def to_dict(self) -> dict:
        return {"id": self.id, "pd": [float(v) for v in self.pd], "qd": [float(v) for v in self.qd]}

    @classmethod
    def from_dict(cls, data: dict):
        try:
            return cls(str(data["id"]), np.asarray(data["pd"], dtype=float), np.asarray(data["qd"], dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"invalid scenario record: {e}")


def scenario_id(case_name: str, seed: int, index: int) -> str:
    return f"{case_name}-{seed}-{index:06d}"


def sample_loads(case, n: int, t: float, seed: int = 0) -> List[Scenario]:
    """Draw n load profiles, each bus load uniform in [(1 - t) d, (1 + t) d] around its default d"""
    if not 0 <= t < 1:
        raise ConfigError(f"load variation t must lie in [0, 1), got {t}")
    if n < 0:
        raise ConfigError("number of scenarios cannot be negative")
    model = as_model(case)
    pd0 = np.array([bus.pd for bus in model.case.buses])
    qd0 = np.array([bus.qd for bus in model.case.buses])
    rng = np.random.default_rng(seed)
    scale_p = rng.uniform(1 - t, 1 + t, size=(n, model.n_bus))
    scale_q = rng.uniform(1 - t, 1 + t, size=(n, model.n_bus))
    return [
        Scenario(scenario_id(model.case.name, seed, i), pd0 * scale_p[i], qd0 * scale_q[i])
        for i in range(n)
    ]
