from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List

import numpy as np

from autodiff import ops
from autodiff.physics import ac_residual, cost_poly, flow_h
from autodiff.tape import Tensor
from grid.network import NetworkModel
from mtl.topology import TASKS
from utils.errors import ConfigError

# exponents above this are clipped before exp in the inequality penalty
EXP_CLIP = 30.0
PHYSICS_TERMS = ("L_eqn", "L_ieq", "L_lag", "L_fX")


def _default_task_weights() -> Dict[str, float]:
    return {task: 1.0 for task in TASKS}


@dataclass(frozen=True)
class LossWeights:
    """Per-task supervised weights plus toggles and weights of the four physics terms"""
    tasks: Dict[str, float] = field(default_factory=_default_task_weights)
    eqn: float = 1.0
    ieq: float = 1.0
    lag: float = 1.0
    cost: float = 1.0
    use_eqn: bool = True
    use_ieq: bool = True
    use_lag: bool = True
    use_cost: bool = True
    epsilon: float = 1e-9

    def __post_init__(self):
        for name in ("eqn", "ieq", "lag", "cost"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight '{name}' cannot be negative")
        if any(w < 0 for w in self.tasks.values()):
            raise ConfigError("task weights cannot be negative")
        unknown = set(self.tasks) - set(TASKS)
        if unknown:
            raise ConfigError(f"unknown task weight(s): {', '.join(sorted(unknown))}")

    def physics_off(self) -> "LossWeights":
        return replace(self, use_eqn=False, use_ieq=False, use_lag=False, use_cost=False)

    def enabled(self) -> Dict[str, float]:
        """Weights of the physics terms that are switched on"""
        toggles = {
            "L_eqn": (self.use_eqn, self.eqn),
            "L_ieq": (self.use_ieq, self.ieq),
            "L_lag": (self.use_lag, self.lag),
            "L_fX": (self.use_cost, self.cost),
        }
        return {name: weight for name, (on, weight) in toggles.items() if on}

    def emphasize(self, tasks, factor: float = 2.0) -> "LossWeights":
        boosted = {t: w * factor if t in tasks else w for t, w in self.tasks.items()}
        return replace(self, tasks=boosted)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown loss weight option(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        if "tasks" in data:
            data["tasks"] = {**_default_task_weights(), **data["tasks"]}
        return cls(**data)


def loss_supervised(pred: Dict[str, Tensor], truth: Dict[str, np.ndarray], weights: LossWeights) -> Tensor:
    """Weighted Charbonnier loss averaged over tasks, in normalized space"""
    terms = []
    for task, prediction in pred.items():
        error = ops.smooth_abs(prediction - truth[task], weights.epsilon)
        terms.append(ops.scale(ops.mean(error), weights.tasks.get(task, 1.0)))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return ops.scale(total, 1.0 / len(terms))


def _balance(pred: Dict[str, Tensor], pd, qd, model: NetworkModel):
    return ac_residual(pd, qd, pred["va"], pred["vm"], pred["pg"], pred["qg"], model.ybus, model.cg_on)


def loss_ac(pred: Dict[str, Tensor], pd, qd, model: NetworkModel, epsilon: float = 1e-9) -> Tensor:
    """Mean smoothed |active residual| plus mean smoothed |reactive residual|, loads in p.u."""
    p, q = _balance(pred, pd, qd, model)
    return ops.mean(ops.smooth_abs(p, epsilon)) + ops.mean(ops.smooth_abs(q, epsilon))


def _flow_rows(pred: Dict[str, Tensor], model: NetworkModel) -> Tensor:
    rated = model.rated
    return flow_h(pred["va"], pred["vm"], model.yf[rated], model.yt[rated],
                  model.cf[rated], model.ct[rated], model.rate_pu)


def inequality_rows(pred: Dict[str, Tensor], model: NetworkModel) -> List[Tensor]:
    """Flow rows, upper-bound rows and lower-bound rows in the solver's order (h <= 0 feasible)"""
    x = ops.concat([pred["va"], pred["vm"], pred["pg"], pred["qg"]], axis=-1)
    bounds = model.bounds
    upper, lower = bounds.upper_rows, bounds.lower_rows
    families = []
    if len(model.rated):
        families.append(_flow_rows(pred, model))
    if len(upper):
        families.append(ops.take(x, upper) - bounds.x_max[upper])
    if len(lower):
        families.append(bounds.x_min[lower] - ops.take(x, lower))
    return families


def saturated_count(families: List[Tensor]) -> int:
    return int(sum(np.count_nonzero(f.value > EXP_CLIP) for f in families))


def loss_ieq(pred: Dict[str, Tensor], model: NetworkModel) -> Tensor:
    """Mean of exp(h) over each non-empty family of inequality rows, exponents clipped at 30

    With H = -h for the flow rows, exp(h) is exp(-H); bound rows give exp(x - x_max) and exp(x_min - x).
    """
    families = inequality_rows(pred, model)
    if not families:
        return ops.scale(ops.sum(pred["vm"]), 0.0)
    penalties = [ops.mean(ops.exp(ops.clip_max(rows, EXP_CLIP))) for rows in families]
    total = penalties[0]
    for penalty in penalties[1:]:
        total = total + penalty
    return ops.scale(total, 1.0 / len(penalties))


def loss_cost(pred: Dict[str, Tensor], f0, model: NetworkModel, epsilon: float = 1e-9) -> Tensor:
    """Smoothed |f(pg) - f0| / (1 + |f0|), averaged over the batch"""
    f0 = np.asarray(f0, dtype=float)
    cost = cost_poly(pred["pg"], model.cost, model.base_mva)
    gap = ops.smooth_abs(cost - f0, epsilon)
    return ops.mean(ops.affine(gap, 1.0 / (1.0 + np.abs(f0)), 0.0))


def loss_lag(pred: Dict[str, Tensor], pd, qd, model: NetworkModel, epsilon: float = 1e-9) -> Tensor:
    """Average of smoothed |lambda^T G| and |mu^T (h + z)|

    The reference-angle row of G is taken as zero. h uses the solver's h <= 0
    convention so that h + z vanishes at a converged point.
    """
    p, q = _balance(pred, pd, qd, model)
    n_balance = 2 * model.n_bus
    equality = ops.rowsum(ops.slice(pred["lambda"], 0, n_balance) * ops.concat([p, q], axis=-1))
    terms = [ops.smooth_abs(equality, epsilon)]

    families = inequality_rows(pred, model)
    if families:
        h = ops.concat(families, axis=-1) if len(families) > 1 else families[0]
        inequality = ops.rowsum(pred["mu"] * (h + pred["z"]))
    else:
        inequality = ops.scale(ops.rowsum(pred["vm"]), 0.0)
    terms.append(ops.smooth_abs(inequality, epsilon))
    return ops.mean(ops.scale(terms[0] + terms[1], 0.5))


def loss_total(terms: Dict[str, Tensor], weights: LossWeights) -> Tensor:
    """Supervised loss plus every enabled physics term times its weight"""
    total = terms["L"]
    for name, weight in weights.enabled().items():
        if name in terms:
            total = total + ops.scale(terms[name], weight)
    return total
