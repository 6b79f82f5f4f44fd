from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from utils.errors import ConfigError, ModelFormatError

TASKS = ("va", "vm", "pg", "qg", "lambda", "mu", "z")
MAIN_TASKS = ("va", "vm", "pg", "qg")
AUX_TASKS = ("lambda", "mu", "z")
SIGMOID_TASKS = ("mu", "z")
TRUNK_MODES = ("shared", "separate")

# hierarchy: z reads predicted X, mu reads predicted X and Z
HEAD_INPUTS = {
    "va": (), "vm": (), "pg": (), "qg": (), "lambda": (),
    "z": MAIN_TASKS,
    "mu": MAIN_TASKS + ("z",),
}

SHARED_LAYERS = 5
GROWTH = 0.2


@dataclass
class HeadSpec:
    task: str
    hidden: int
    output: int
    activation: str = "linear"
    inputs: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "hidden": self.hidden,
            "output": self.output,
            "activation": self.activation,
            "inputs": list(self.inputs),
        }

    @classmethod
    def from_dict(cls, data: dict):
        return cls(
            task=data["task"],
            hidden=int(data["hidden"]),
            output=int(data["output"]),
            activation=data.get("activation", "linear"),
            inputs=tuple(data.get("inputs", ())),
        )


@dataclass
class MtlTopology:
    input_dim: int
    shared_dims: List[int]
    heads: Dict[str, HeadSpec] = field(default_factory=dict)
    trunk_mode: str = "shared"

    def head_input_dim(self, task: str) -> int:
        """Width of the features entering a head: last trunk layer plus upstream predictions"""
        spec = self.heads[task]
        if self.trunk_mode == "separate":
            return self.shared_dims[-1]
        return self.shared_dims[-1] + sum(self.heads[t].output for t in spec.inputs)

    def parameter_count(self) -> int:
        """Weights and biases of every trunk and head, counted without building the network"""
        trunks = len(TASKS) if self.trunk_mode == "separate" else 1
        total, fan_in = 0, self.input_dim
        for width in self.shared_dims:
            total += fan_in * width + width
            fan_in = width
        total *= trunks
        for task, spec in self.heads.items():
            total += (self.head_input_dim(task) + 1) * spec.hidden + (spec.hidden + 1) * spec.output
        return total

    def output_dims(self) -> Dict[str, int]:
        return {task: spec.output for task, spec in self.heads.items()}

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "shared_dims": list(self.shared_dims),
            "trunk_mode": self.trunk_mode,
            "heads": [self.heads[t].to_dict() for t in TASKS],
        }

    @classmethod
    def from_dict(cls, data: dict):
        try:
            heads = {spec["task"]: HeadSpec.from_dict(spec) for spec in data["heads"]}
            topology = cls(
                input_dim=int(data["input_dim"]),
                shared_dims=[int(w) for w in data["shared_dims"]],
                heads=heads,
                trunk_mode=data.get("trunk_mode", "shared"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"invalid topology: {e}")
        if set(topology.heads) != set(TASKS):
            raise ModelFormatError(f"topology must define heads {', '.join(TASKS)}")
        return topology


def shared_widths(input_dim: int, layers: int = SHARED_LAYERS) -> List[int]:
    """Layer i has width input_dim * (1 + 0.2 i), rounded"""
    return [int(round(input_dim * (1 + GROWTH * i))) for i in range(layers)]


def _assemble(input_dim: int, widths: List[int], outputs: Dict[str, int], trunk_mode: str) -> MtlTopology:
    heads = {
        task: HeadSpec(
            task=task,
            hidden=widths[-1],
            output=outputs[task],
            activation="sigmoid" if task in SIGMOID_TASKS else "linear",
            inputs=HEAD_INPUTS[task] if trunk_mode == "shared" else (),
        )
        for task in TASKS
    }
    return MtlTopology(input_dim=input_dim, shared_dims=list(widths), heads=heads, trunk_mode=trunk_mode)


def matched_separate_widths(input_dim: int, outputs: Dict[str, int], target: int) -> List[int]:
    """Trunk widths for seven independent nets whose total parameter count is closest to target

    A uniform scale of the shared widths gets close; single-layer steps of one
    unit then settle the remainder.
    """
    base = shared_widths(input_dim)

    def gap(widths):
        return abs(_assemble(input_dim, widths, outputs, "separate").parameter_count() - target)

    candidates = ([max(1, int(round(w * s))) for w in base] for s in np.linspace(0.05, 1.0, 951))
    widths = min(candidates, key=gap)
    improved = True
    while improved:
        improved = False
        for i in range(len(widths)):
            for step in (-1, 1):
                trial = list(widths)
                trial[i] = max(1, trial[i] + step)
                if gap(trial) < gap(widths):
                    widths, improved = trial, True
    return widths


def build_topology(case, trunk_mode: str = "shared") -> MtlTopology:
    """Network layout for a case: loads in, seven task heads out

    Separate mode builds seven independent nets whose combined size matches
    the shared network.
    """
    from pfmath.power import as_model

    if trunk_mode not in TRUNK_MODES:
        raise ConfigError(f"trunk_mode must be one of {', '.join(TRUNK_MODES)}, got '{trunk_mode}'")
    model = as_model(case)
    dims = model.dims
    input_dim = 2 * model.n_bus
    outputs = {
        "va": model.n_bus, "vm": model.n_bus,
        "pg": model.n_gen, "qg": model.n_gen,
        "lambda": dims.n_eq, "mu": dims.n_ineq, "z": dims.n_ineq,
    }
    shared = _assemble(input_dim, shared_widths(input_dim), outputs, "shared")
    if trunk_mode == "shared":
        return shared
    widths = matched_separate_widths(input_dim, outputs, shared.parameter_count())
    return _assemble(input_dim, widths, outputs, "separate")
