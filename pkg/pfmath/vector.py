from dataclasses import dataclass

import numpy as np

from grid.models import GridCase
from utils.errors import DimensionError

# bounds at or beyond this magnitude are treated as infinite
INFINITE_BOUND = 1e10


@dataclass(frozen=True)
class OpfVector:
    """Optimization vector X = [va | vm | pg | qg] in radians and per-unit"""
    va: np.ndarray
    vm: np.ndarray
    pg: np.ndarray
    qg: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.va, self.vm, self.pg, self.qg])

    @classmethod
    def split(cls, x: np.ndarray, n_bus: int, n_gen: int) -> "OpfVector":
        x = np.asarray(x, dtype=float)
        if x.shape != (2 * n_bus + 2 * n_gen,):
            raise DimensionError(f"expected a vector of length {2 * n_bus + 2 * n_gen}, got {x.shape}")
        return cls(
            va=x[:n_bus],
            vm=x[n_bus:2 * n_bus],
            pg=x[2 * n_bus:2 * n_bus + n_gen],
            qg=x[2 * n_bus + n_gen:],
        )


@dataclass(frozen=True)
class BoundsSpec:
    x_min: np.ndarray
    x_max: np.ndarray
    ref_position: int

    @property
    def upper_rows(self) -> np.ndarray:
        """Variable indices whose upper bound is enforced as an inequality"""
        return np.flatnonzero(np.isfinite(self.x_max) & (np.arange(len(self.x_max)) != self.ref_position))

    @property
    def lower_rows(self) -> np.ndarray:
        """Variable indices whose lower bound is enforced as an inequality"""
        return np.flatnonzero(np.isfinite(self.x_min) & (np.arange(len(self.x_min)) != self.ref_position))


def _finite(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    values = values.copy()
    values[values >= INFINITE_BOUND] = np.inf
    values[values <= -INFINITE_BOUND] = -np.inf
    return values


def build_bounds(case: GridCase) -> BoundsSpec:
    """Variable bounds for the in-service optimization vector"""
    n = case.n_bus
    on = case.in_service_gens()
    base = case.base_mva
    ref = case.ref_index

    va_min = np.full(n, -np.inf)
    va_max = np.full(n, np.inf)
    va_min[ref] = va_max[ref] = np.deg2rad(case.buses[ref].va0)

    vm_min = np.array([bus.vm_min for bus in case.buses])
    vm_max = np.array([bus.vm_max for bus in case.buses])
    pmin = _finite([case.gens[g].pmin for g in on]) / base
    pmax = _finite([case.gens[g].pmax for g in on]) / base
    qmin = _finite([case.gens[g].qmin for g in on]) / base
    qmax = _finite([case.gens[g].qmax for g in on]) / base

    return BoundsSpec(
        x_min=np.concatenate([va_min, _finite(vm_min), pmin, qmin]),
        x_max=np.concatenate([va_max, _finite(vm_max), pmax, qmax]),
        ref_position=ref,
    )
