from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from grid.network import NetworkModel
from pfmath.power import branch_flows
from pfmath.vector import OpfVector
from utils.errors import DimensionError, ModelFormatError


@dataclass
class PrimalDualState:
    """One iterate of the interior-point method, in solver space"""
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    z: np.ndarray
    gamma: float

    def copy(self) -> "PrimalDualState":
        return PrimalDualState(self.x.copy(), self.lam.copy(), self.mu.copy(), self.z.copy(), self.gamma)


def _optional_array(data: dict, key: str) -> Optional[np.ndarray]:
    value = data.get(key)
    if value is None:
        return None
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError(f"warm start field '{key}' must be a list of numbers")
    if array.ndim != 1:
        raise ModelFormatError(f"warm start field '{key}' must be a flat list")
    return array


@dataclass
class WarmStart:
    """Any subset of (x, lambda, mu, z) to seed the solver with; absent parts keep cold defaults"""
    x: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None

    def is_empty(self) -> bool:
        return self.x is None and self.lam is None and self.mu is None and self.z is None

    def validate(self, n_x: int, n_eq: int, n_ineq: int):
        expected = {"x": n_x, "lambda": n_eq, "mu": n_ineq, "z": n_ineq}
        for key, value in (("x", self.x), ("lambda", self.lam), ("mu", self.mu), ("z", self.z)):
            if value is not None and len(value) != expected[key]:
                raise DimensionError(f"warm start '{key}' has length {len(value)}, expected {expected[key]}")

    def masked(self, use_x: bool, use_lambda: bool, use_mu: bool, use_z: bool) -> "WarmStart":
        """Keep only the selected components"""
        return WarmStart(
            x=self.x if use_x else None,
            lam=self.lam if use_lambda else None,
            mu=self.mu if use_mu else None,
            z=self.z if use_z else None,
        )

    def to_dict(self) -> dict:
        def listed(value):
            return None if value is None else [float(v) for v in value]

        return {"x": listed(self.x), "lambda": listed(self.lam), "mu": listed(self.mu), "z": listed(self.z)}

    @classmethod
    def from_dict(cls, data: dict):
        if not isinstance(data, dict):
            raise ModelFormatError("warm start document must be a JSON object")
        return cls(
            x=_optional_array(data, "x"),
            lam=_optional_array(data, "lambda"),
            mu=_optional_array(data, "mu"),
            z=_optional_array(data, "z"),
        )


@dataclass
class OpfPoint:
    """Primal and dual solution as iterated by the solver

    lam and mu are scaled by cost_mult like the objective inside the solver;
    to_dict reports them unscaled.
    """
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    z: np.ndarray
    objective: float
    cost_mult: float = 1.0

    def warm_start(self) -> WarmStart:
        return WarmStart(x=self.x.copy(), lam=self.lam.copy(), mu=self.mu.copy(), z=self.z.copy())

    def to_dict(self, model: NetworkModel) -> dict:
        X = OpfVector.split(self.x, model.n_bus, model.n_gen)
        s_from, s_to = branch_flows(model, self.x)
        base = model.base_mva
        return {
            "objective": self.objective,
            "va_deg": np.rad2deg(X.va).tolist(),
            "vm": X.vm.tolist(),
            "pg_mw": (X.pg * base).tolist(),
            "qg_mvar": (X.qg * base).tolist(),
            "lambda": (self.lam / self.cost_mult).tolist(),
            "mu": (self.mu / self.cost_mult).tolist(),
            "sf_mva": (np.abs(s_from) * base).tolist(),
            "st_mva": (np.abs(s_to) * base).tolist(),
            "solver": self.warm_start().to_dict(),
        }


@dataclass
class IterationRecord:
    iteration: int
    feascond: float
    gradcond: float
    compcond: float
    costcond: float
    step_norm: float
    gamma: float
    alpha_p: float
    alpha_d: float
    objective: float

    def to_dict(self) -> dict:
        return {
            "iter": self.iteration,
            "feascond": self.feascond,
            "gradcond": self.gradcond,
            "compcond": self.compcond,
            "costcond": self.costcond,
            "step_norm": self.step_norm,
            "gamma": self.gamma,
            "alpha_p": self.alpha_p,
            "alpha_d": self.alpha_d,
            "objective": self.objective,
        }


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    objective: float
    histories: List[IterationRecord] = field(default_factory=list)
    wall_time: float = 0.0
    fallback_used: bool = False
    failure_reason: Optional[str] = None
    initial_conditions: Optional[dict] = None
    prior_iterations: int = 0
    prior_wall_time: float = 0.0

    @property
    def total_iterations(self) -> int:
        """Iterations including any abandoned warm attempt"""
        return self.iterations + self.prior_iterations

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "objective": self.objective,
            "wall_time": self.wall_time,
            "fallback_used": self.fallback_used,
            "failure_reason": self.failure_reason,
            "prior_iterations": self.prior_iterations,
            "prior_wall_time": self.prior_wall_time,
            "initial_conditions": self.initial_conditions,
            "histories": [record.to_dict() for record in self.histories],
        }
