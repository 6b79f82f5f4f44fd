import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from mtl.losses import LossWeights
from mtl.training import TrainConfig
from solver.options import IpmOptions
from utils.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

CONFIG_SECTIONS = ("ipm", "train", "loss_weights", "sampling", "workers")


@dataclass(frozen=True)
class SamplingConfig:
    n: int = 1000
    t: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict:
        return {"n": self.n, "t": self.t, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict):
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown sampling option(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass(frozen=True)
class RunConfig:
    ipm: IpmOptions = field(default_factory=IpmOptions)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    workers: int = 1
    deterministic: bool = False

    def to_dict(self) -> dict:
        return {
            "ipm": self.ipm.to_dict(),
            "train": self.train.to_dict(),
            "loss_weights": self.loss_weights.to_dict(),
            "sampling": self.sampling.to_dict(),
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict):
        if not isinstance(data, dict):
            raise ConfigError("run configuration must be a JSON object")
        unknown = set(data) - set(CONFIG_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown configuration section(s): {', '.join(sorted(unknown))}")
        workers = data.get("workers", 1)
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be a positive integer")
        return cls(
            ipm=IpmOptions.from_dict(data.get("ipm", {})),
            train=TrainConfig.from_dict(data.get("train", {})),
            loss_weights=LossWeights.from_dict(data.get("loss_weights", {})),
            sampling=SamplingConfig.from_dict(data.get("sampling", {})),
            workers=workers,
        )


def env_workers() -> Optional[int]:
    """Worker count from SMARTPG_THREADS, if set"""
    value = os.getenv("SMARTPG_THREADS")
    if not value:
        return None
    try:
        workers = int(value)
    except ValueError:
        raise ConfigError(f"SMARTPG_THREADS must be an integer, got '{value}'")
    if workers < 1:
        raise ConfigError("SMARTPG_THREADS must be at least 1")
    return workers


def load_run_config(path=None, workers: Optional[int] = None, deterministic: bool = False) -> RunConfig:
    """Defaults, then the JSON file, then CLI flags, then SMARTPG_THREADS for the worker count"""
    config = RunConfig()
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})")
        config = RunConfig.from_dict(data)
        logger.debug(f"✅ Loaded run configuration from {path}")
    if workers is not None:
        if workers < 1:
            raise ConfigError("--workers must be at least 1")
        config = replace(config, workers=workers)
    override = env_workers()
    if override is not None:
        config = replace(config, workers=override)
    return replace(config, deterministic=deterministic)
