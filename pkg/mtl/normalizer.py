from dataclasses import dataclass

import numpy as np

from utils.errors import ConfigError, ModelFormatError

MODES = ("standardize", "minmax", "none")
# smallest spread a feature may be divided by
SPREAD_FLOOR = 1e-12


@dataclass
class Normalizer:
    """Per-feature affine map fitted on the training split

    standardize: (v - mean) / std; minmax: (v - min) / (max - min); none: identity.
    """
    mode: str
    offset: np.ndarray
    spread: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray, mode: str = "standardize") -> "Normalizer":
        if mode not in MODES:
            raise ConfigError(f"normalizer mode must be one of {', '.join(MODES)}, got '{mode}'")
        values = np.atleast_2d(np.asarray(values, dtype=float))
        width = values.shape[1]
        if mode == "standardize":
            offset, spread = values.mean(axis=0), values.std(axis=0)
        elif mode == "minmax":
            offset, spread = values.min(axis=0), values.max(axis=0) - values.min(axis=0)
        else:
            offset, spread = np.zeros(width), np.ones(width)
        return cls(mode, offset, np.maximum(spread, SPREAD_FLOOR))

    def normalize(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.offset) / self.spread

    def denormalize(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.spread + self.offset

    def to_dict(self) -> dict:
        return {"mode": self.mode, "offset": self.offset.tolist(), "spread": self.spread.tolist()}

    @classmethod
    def from_dict(cls, data: dict):
        try:
            return cls(data["mode"], np.asarray(data["offset"], dtype=float), np.asarray(data["spread"], dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"invalid normalizer: {e}")
