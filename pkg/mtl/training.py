import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from autodiff.tape import Tape, Tensor
from mtl.losses import (
    PHYSICS_TERMS,
    LossWeights,
    inequality_rows,
    loss_ac,
    loss_cost,
    loss_ieq,
    loss_lag,
    loss_supervised,
    loss_total,
    saturated_count,
)
from mtl.network import MtlNetwork
from mtl.normalizer import MODES, Normalizer
from mtl.topology import SIGMOID_TASKS, TASKS, TRUNK_MODES, build_topology
from pfmath.power import as_model
from utils.errors import ConfigError, DatasetError, NumericalFailure

logger = logging.getLogger(__name__)

LOG_TERMS = ("L",) + PHYSICS_TERMS + ("total",)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    detach_period: int = 2
    seed: int = 0
    input_norm: str = "standardize"
    trunk_mode: str = "shared"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs cannot be negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.detach_period < 1:
            raise ConfigError("detach_period must be at least 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate cannot be negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.input_norm not in MODES:
            raise ConfigError(f"input_norm must be one of {', '.join(MODES)}")
        if self.trunk_mode not in TRUNK_MODES:
            raise ConfigError(f"trunk_mode must be one of {', '.join(TRUNK_MODES)}")

    def is_detach_epoch(self, epoch: int) -> bool:
        """Every k-th epoch (k = detach_period) trains the trunk on the main task only"""
        return epoch % self.detach_period == self.detach_period - 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class TrainingSet:
    """Loads (MW/MVAr) with their solver-space targets and oracle objectives, one row per sample"""
    pd_mw: np.ndarray
    qd_mvar: np.ndarray
    targets: Dict[str, np.ndarray]
    f0: np.ndarray

    def __len__(self) -> int:
        return len(self.f0)

    def subset(self, index) -> "TrainingSet":
        return TrainingSet(
            pd_mw=self.pd_mw[index],
            qd_mvar=self.qd_mvar[index],
            targets={task: values[index] for task, values in self.targets.items()},
            f0=self.f0[index],
        )

    @classmethod
    def from_samples(cls, samples: Sequence, case) -> "TrainingSet":
        """Stack dataset samples; every sample must match the case dimensions"""
        model = as_model(case)
        if not samples:
            raise DatasetError("no samples to train on")
        nb, ng = model.n_bus, model.n_gen
        x = np.array([s.truth.x for s in samples], dtype=float)
        if x.shape[1] != model.dims.n_x:
            raise DatasetError(f"samples carry x of length {x.shape[1]}, case needs {model.dims.n_x}")
        targets = {
            "va": x[:, :nb],
            "vm": x[:, nb:2 * nb],
            "pg": x[:, 2 * nb:2 * nb + ng],
            "qg": x[:, 2 * nb + ng:],
            "lambda": np.array([s.truth.lam for s in samples], dtype=float).reshape(len(samples), -1),
            "mu": np.array([s.truth.mu for s in samples], dtype=float).reshape(len(samples), -1),
            "z": np.array([s.truth.z for s in samples], dtype=float).reshape(len(samples), -1),
        }
        return cls(
            pd_mw=np.array([s.scenario.pd for s in samples], dtype=float),
            qd_mvar=np.array([s.scenario.qd for s in samples], dtype=float),
            targets=targets,
            f0=np.array([s.truth.f0 for s in samples], dtype=float),
        )


class Adam:
    """Adaptive moment estimation over a dict of named parameter arrays"""

    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.first: Dict[str, np.ndarray] = {}
        self.second: Dict[str, np.ndarray] = {}
        self.steps = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        self.steps += 1
        correction1 = 1 - self.beta1 ** self.steps
        correction2 = 1 - self.beta2 ** self.steps
        for name in sorted(grads):
            grad = grads[name]
            m = self.first.get(name, np.zeros_like(grad))
            v = self.second.get(name, np.zeros_like(grad))
            m = self.beta1 * m + (1 - self.beta1) * grad
            v = self.beta2 * v + (1 - self.beta2) * grad * grad
            self.first[name], self.second[name] = m, v
            params[name] = params[name] - self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class TrainLog:
    """Per-epoch training and validation loss terms"""

    def __init__(self):
        self.rows: List[dict] = []

    def record(self, epoch: int, train: Dict[str, float], val: Dict[str, float], detached: bool, saturated: int):
        row = {"epoch": epoch}
        row.update({term: train.get(term, 0.0) for term in LOG_TERMS})
        row.update({f"val_{term}": val.get(term, 0.0) for term in LOG_TERMS})
        row["detach"] = detached
        row["saturated"] = saturated
        self.rows.append(row)

    def last(self) -> Optional[dict]:
        return self.rows[-1] if self.rows else None

    def to_frame(self) -> pd.DataFrame:
        columns = ["epoch", *LOG_TERMS, *(f"val_{t}" for t in LOG_TERMS), "detach", "saturated"]
        return pd.DataFrame(self.rows, columns=columns)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def build_network(case, train_set: TrainingSet, config: Optional[TrainConfig] = None) -> MtlNetwork:
    """Fresh network with normalizers fitted on the training split

    Inputs use config.input_norm; sigmoid-headed targets are min-max scaled
    and the linear heads standardized.
    """
    config = config or TrainConfig()
    model = as_model(case)
    topology = build_topology(model, config.trunk_mode)
    loads = np.concatenate([train_set.pd_mw, train_set.qd_mvar], axis=1)
    input_norm = Normalizer.fit(loads, config.input_norm)
    target_norms = {
        task: Normalizer.fit(train_set.targets[task], "minmax" if task in SIGMOID_TASKS else "standardize")
        for task in TASKS
    }
    return MtlNetwork.initialize(topology, input_norm, target_norms, seed=config.seed)


def _guarded(name: str, compute):
    try:
        value = compute()
    except NumericalFailure as e:
        raise NumericalFailure(f"loss term {name} became non-finite ({e})")
    if not np.isfinite(value.value).all():
        raise NumericalFailure(f"loss term {name} became non-finite")
    return value


def loss_terms(net: MtlNetwork, model, tape: Tape, batch: TrainingSet, weights: LossWeights,
               leaves: Optional[Dict[str, Tensor]] = None, detach_aux: bool = False):
    """Supervised loss and the enabled physics terms on one batch

    Returns (terms, saturated) where saturated counts inequality exponents
    clipped in the penalty.
    """
    inputs = net.normalize_inputs(batch.pd_mw, batch.qd_mvar)
    outputs = net.forward(tape, inputs, leaves, detach_aux=detach_aux)
    truth = {task: net.target_norms[task].normalize(batch.targets[task]) for task in TASKS}

    terms = {"L": _guarded("L", lambda: loss_supervised(outputs, truth, weights))}
    enabled = weights.enabled()
    saturated = 0
    if not enabled:
        return terms, saturated

    pred = {task: net.denormalize(task, outputs[task]) for task in TASKS}
    pd_pu = batch.pd_mw / model.base_mva
    qd_pu = batch.qd_mvar / model.base_mva
    eps = weights.epsilon
    if "L_eqn" in enabled:
        terms["L_eqn"] = _guarded("L_eqn", lambda: loss_ac(pred, pd_pu, qd_pu, model, eps))
    if "L_ieq" in enabled:
        terms["L_ieq"] = _guarded("L_ieq", lambda: loss_ieq(pred, model))
        saturated = saturated_count(inequality_rows(pred, model))
    if "L_lag" in enabled:
        terms["L_lag"] = _guarded("L_lag", lambda: loss_lag(pred, pd_pu, qd_pu, model, eps))
    if "L_fX" in enabled:
        terms["L_fX"] = _guarded("L_fX", lambda: loss_cost(pred, batch.f0, model, eps))
    return terms, saturated


def _batches(n: int, batch_size: int, order=None):
    order = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_losses(net: MtlNetwork, data: TrainingSet, case, weights: LossWeights,
                    batch_size: int = 256) -> Dict[str, float]:
    """Sample-weighted mean of every loss term over a dataset, without updating anything"""
    model = as_model(case)
    sums = defaultdict(float)
    for index in _batches(len(data), batch_size):
        batch = data.subset(index)
        terms, _ = loss_terms(net, model, Tape(), batch, weights)
        terms["total"] = loss_total(terms, weights)
        for name, value in terms.items():
            sums[name] += float(value.value) * len(index)
    return {name: total / max(len(data), 1) for name, total in sums.items()}


def train(net: MtlNetwork, train_set: TrainingSet, val_set: Optional[TrainingSet], case,
          config: Optional[TrainConfig] = None, weights: Optional[LossWeights] = None):
    """Mini-batch Adam on the total loss; returns the trained network and its TrainLog"""
    config = config or TrainConfig()
    weights = weights or LossWeights()
    model = as_model(case)
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    log = TrainLog()
    net = net.copy()

    logger.info(f"🔄 Training {net.topology.trunk_mode} network ({net.parameter_count()} parameters) "
                f"on {len(train_set)} samples for {config.epochs} epochs")
    for epoch in range(config.epochs):
        detached = config.is_detach_epoch(epoch)
        sums = defaultdict(float)
        saturated = 0
        for index in _batches(len(train_set), config.batch_size, rng.permutation(len(train_set))):
            tape = Tape()
            leaves = net.leaves(tape)
            terms, clipped = loss_terms(net, model, tape, train_set.subset(index), weights, leaves, detached)
            total = _guarded("total", lambda: loss_total(terms, weights))
            optimizer.step(net.params, tape.gradients(total, leaves))
            saturated += clipped
            terms["total"] = total
            for name, value in terms.items():
                sums[name] += float(value.value) * len(index)

        train_means = {name: value / len(train_set) for name, value in sums.items()}
        val_means = evaluate_losses(net, val_set, model, weights, config.batch_size) if val_set is not None and len(val_set) else {}
        log.record(epoch, train_means, val_means, detached, saturated)
        logger.info(f"📊 epoch {epoch:4d}  total {train_means['total']:.4e}  L {train_means['L']:.4e}"
                    f"  val {val_means.get('total', float('nan')):.4e}{'  (detach)' if detached else ''}")
    return net, log
