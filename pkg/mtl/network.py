import copy
import logging
import math
from typing import Dict, List, Optional

import numpy as np

from autodiff import ops
from autodiff.tape import Tape, Tensor
from mtl.normalizer import Normalizer
from mtl.topology import MAIN_TASKS, TASKS, MtlTopology
from utils.errors import DimensionError

logger = logging.getLogger(__name__)


def he_weights(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / max(fan_in, 1)), size=(fan_in, fan_out))


class MtlNetwork:
    """Shared trunk with seven task heads, or seven independent nets in separate mode

    Parameters are plain arrays keyed by name; every forward pass registers
    them as leaves on a fresh tape.
    """

    def __init__(self, topology: MtlTopology, params: Dict[str, np.ndarray],
                 input_norm: Normalizer, target_norms: Dict[str, Normalizer]):
        self.topology = topology
        self.params = params
        self.input_norm = input_norm
        self.target_norms = target_norms

    @classmethod
    def initialize(cls, topology: MtlTopology, input_norm: Normalizer,
                   target_norms: Dict[str, Normalizer], seed: int = 0) -> "MtlNetwork":
        """Fan-in scaled random weights, zero biases"""
        rng = np.random.default_rng(seed)
        net = cls(topology, {}, input_norm, target_norms)
        for prefix in net.trunk_prefixes():
            fan_in = topology.input_dim
            for i, width in enumerate(topology.shared_dims):
                net.params[f"{prefix}.{i}.weight"] = he_weights(rng, fan_in, width)
                net.params[f"{prefix}.{i}.bias"] = np.zeros(width)
                fan_in = width
        for task in TASKS:
            spec = topology.heads[task]
            fan_in = topology.head_input_dim(task)
            net.params[f"head.{task}.hidden.weight"] = he_weights(rng, fan_in, spec.hidden)
            net.params[f"head.{task}.hidden.bias"] = np.zeros(spec.hidden)
            net.params[f"head.{task}.out.weight"] = he_weights(rng, spec.hidden, spec.output)
            net.params[f"head.{task}.out.bias"] = np.zeros(spec.output)
        return net

    @property
    def separate(self) -> bool:
        return self.topology.trunk_mode == "separate"

    def trunk_prefixes(self) -> List[str]:
        if self.separate:
            return [f"trunk.{task}" for task in TASKS]
        return ["trunk"]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "MtlNetwork":
        return MtlNetwork(copy.deepcopy(self.topology), {k: v.copy() for k, v in self.params.items()},
                          self.input_norm, dict(self.target_norms))

    def leaves(self, tape: Tape) -> Dict[str, Tensor]:
        return {name: tape.leaf(value) for name, value in self.params.items()}

    def normalize_inputs(self, pd_mw, qd_mvar) -> np.ndarray:
        loads = np.concatenate([np.atleast_2d(pd_mw), np.atleast_2d(qd_mvar)], axis=1)
        if loads.shape[1] != self.topology.input_dim:
            raise DimensionError(f"network expects {self.topology.input_dim} load inputs, got {loads.shape[1]}")
        return self.input_norm.normalize(loads)

    @staticmethod
    def _dense(x: Tensor, leaves: Dict[str, Tensor], name: str) -> Tensor:
        return ops.matmul(x, leaves[f"{name}.weight"]) + leaves[f"{name}.bias"]

    def _trunk(self, x: Tensor, prefix: str, leaves: Dict[str, Tensor]) -> Tensor:
        for i in range(len(self.topology.shared_dims)):
            x = ops.relu(self._dense(x, leaves, f"{prefix}.{i}"))
        return x

    def _head(self, task: str, features: Tensor, leaves: Dict[str, Tensor]) -> Tensor:
        hidden = ops.relu(self._dense(features, leaves, f"head.{task}.hidden"))
        out = self._dense(hidden, leaves, f"head.{task}.out")
        if self.topology.heads[task].activation == "sigmoid":
            return ops.sigmoid(out)
        return out

    def forward(self, tape: Tape, inputs, leaves: Optional[Dict[str, Tensor]] = None,
                detach_aux: bool = False) -> Dict[str, Tensor]:
        """Normalized predictions for every task

        With detach_aux, the trunk features and X predictions entering the
        lambda, mu and z heads are cut from the graph so only main-task
        gradients reach the trunk.
        """
        leaves = leaves if leaves is not None else self.leaves(tape)
        x = inputs if isinstance(inputs, Tensor) else tape.constant(inputs)
        if x.shape[-1] != self.topology.input_dim:
            raise DimensionError(f"network expects {self.topology.input_dim} inputs, got {x.shape[-1]}")

        if self.separate:
            return {task: self._head(task, self._trunk(x, f"trunk.{task}", leaves), leaves) for task in TASKS}

        shared = self._trunk(x, "trunk", leaves)
        outputs = {task: self._head(task, shared, leaves) for task in MAIN_TASKS}
        aux_shared = ops.detach(shared) if detach_aux else shared
        upstream = {task: ops.detach(outputs[task]) if detach_aux else outputs[task] for task in MAIN_TASKS}
        for task in ("lambda", "z", "mu"):
            sources = [upstream[t] if t in upstream else outputs[t] for t in self.topology.heads[task].inputs]
            features = ops.concat([aux_shared] + sources, axis=-1) if sources else aux_shared
            outputs[task] = self._head(task, features, leaves)
        return {task: outputs[task] for task in TASKS}

    def denormalize(self, task: str, prediction: Tensor) -> Tensor:
        """Map a normalized head output back to solver units on the tape"""
        norm = self.target_norms[task]
        return ops.affine(prediction, norm.spread, norm.offset)

    def predict(self, pd_mw, qd_mvar) -> Dict[str, np.ndarray]:
        """Denormalized predictions (radians, per-unit, solver-space duals) for a batch of loads"""
        tape = Tape()
        outputs = self.forward(tape, self.normalize_inputs(pd_mw, qd_mvar))
        return {task: self.target_norms[task].denormalize(outputs[task].value) for task in TASKS}

    def _last_layer(self, u0: Optional[int]) -> int:
        layers = len(self.topology.shared_dims)
        u0 = layers - 1 if u0 is None else u0
        if not 0 <= u0 < layers:
            raise ValueError(f"trunk layer {u0} does not exist (trunk has {layers} layers)")
        return u0

    def deepen(self, u0: Optional[int] = None) -> "MtlNetwork":
        """Insert an identity layer after trunk layer u0; ReLU outputs pass through unchanged"""
        u0 = self._last_layer(u0)
        net = self.copy()
        width = net.topology.shared_dims[u0]
        layers = len(net.topology.shared_dims)
        for prefix in net.trunk_prefixes():
            for i in range(layers - 1, u0, -1):
                for kind in ("weight", "bias"):
                    net.params[f"{prefix}.{i + 1}.{kind}"] = net.params.pop(f"{prefix}.{i}.{kind}")
            net.params[f"{prefix}.{u0 + 1}.weight"] = np.eye(width)
            net.params[f"{prefix}.{u0 + 1}.bias"] = np.zeros(width)
        net.topology.shared_dims.insert(u0 + 1, width)
        logger.info(f"🔄 Deepened trunk after layer {u0} (width {width})")
        return net

    def widen(self, u0: Optional[int] = None, proportion: float = 0.1, seed: int = 0) -> "MtlNetwork":
        """Grow trunk layer u0 by ceil(proportion * width) units whose outgoing weights start at zero"""
        u0 = self._last_layer(u0)
        net = self.copy()
        rng = np.random.default_rng(seed)
        width = net.topology.shared_dims[u0]
        extra = max(1, math.ceil(round(proportion * width, 9)))
        last = u0 == len(net.topology.shared_dims) - 1

        for prefix in net.trunk_prefixes():
            weight = net.params[f"{prefix}.{u0}.weight"]
            net.params[f"{prefix}.{u0}.weight"] = np.hstack([weight, he_weights(rng, weight.shape[0], extra)])
            net.params[f"{prefix}.{u0}.bias"] = np.concatenate([net.params[f"{prefix}.{u0}.bias"], np.zeros(extra)])
            if last:
                consumers = [f"head.{prefix.split('.')[1]}.hidden"] if net.separate else \
                    [f"head.{task}.hidden" for task in TASKS]
            else:
                consumers = [f"{prefix}.{u0 + 1}"]
            for name in consumers:
                outgoing = net.params[f"{name}.weight"]
                net.params[f"{name}.weight"] = np.insert(outgoing, [width] * extra, 0.0, axis=0)

        net.topology.shared_dims[u0] = width + extra
        logger.info(f"🔄 Widened trunk layer {u0} from {width} to {width + extra}")
        return net
