import json
import logging
from pathlib import Path

import numpy as np

from mtl.network import MtlNetwork
from mtl.normalizer import Normalizer
from mtl.topology import TASKS, MtlTopology, build_topology
from utils.errors import DimensionError, ModelFormatError, VersionError

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"


def model_to_dict(net: MtlNetwork) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "topology": net.topology.to_dict(),
        "input_norm": net.input_norm.to_dict(),
        "target_norms": {task: net.target_norms[task].to_dict() for task in TASKS},
        "params": {
            name: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for name, value in sorted(net.params.items())
        },
    }


def model_from_dict(data: dict) -> MtlNetwork:
    if not isinstance(data, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = str(data.get("format_version", ""))
    if version != FORMAT_VERSION:
        raise VersionError(f"model format version '{version}' is not readable (expected '{FORMAT_VERSION}')")
    try:
        topology = MtlTopology.from_dict(data["topology"])
        input_norm = Normalizer.from_dict(data["input_norm"])
        target_norms = {task: Normalizer.from_dict(data["target_norms"][task]) for task in TASKS}
        params = {
            name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
            for name, entry in data["params"].items()
        }
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"invalid model document: {e}")

    expected = MtlNetwork.initialize(topology, input_norm, target_norms).params
    for name, value in expected.items():
        if name not in params:
            raise ModelFormatError(f"model is missing parameter '{name}'")
        if params[name].shape != value.shape:
            raise ModelFormatError(f"parameter '{name}' has shape {params[name].shape}, expected {value.shape}")
    return MtlNetwork(topology, params, input_norm, target_norms)


def check_against_case(net: MtlNetwork, case):
    """Raise DimensionError unless the network's inputs and heads fit the case"""
    reference = build_topology(case)
    if net.topology.input_dim != reference.input_dim:
        raise DimensionError(f"model takes {net.topology.input_dim} inputs, case has {reference.input_dim}")
    for task, width in reference.output_dims().items():
        if net.topology.heads[task].output != width:
            raise DimensionError(f"head '{task}' outputs {net.topology.heads[task].output} values, case needs {width}")


def save_model(net: MtlNetwork, path):
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(net)), encoding="utf-8")
    logger.info(f"✅ Saved model ({net.parameter_count()} parameters) to {path}")


def load_model(path, case=None) -> MtlNetwork:
    """Read a saved model; with a case, also check its dimensions"""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: not valid JSON ({e})")
    net = model_from_dict(data)
    if case is not None:
        check_against_case(net, case)
    return net
