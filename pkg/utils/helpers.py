import json
from pathlib import Path
from typing import Any

import numpy as np

from utils.errors import ModelFormatError

TIMING_KEYS = ("wall_time", "prior_wall_time", "solve_time", "created_at")


class JsonHelper:
    """Reading and writing the JSON documents the commands exchange"""

    @staticmethod
    def _plain(value: Any):
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, np.generic):
            return value.item()
        raise TypeError(f"cannot write {type(value).__name__} as JSON")

    @staticmethod
    def write(path, data: Any):
        Path(path).write_text(json.dumps(data, indent=2, default=JsonHelper._plain) + "\n", encoding="utf-8")

    @staticmethod
    def read(path) -> Any:
        text = Path(path).read_text(encoding="utf-8")
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"{path}: not valid JSON ({e})")


class DeterminismHelper:
    """Removes wall-clock fields so repeated runs write identical files"""

    @staticmethod
    def strip_timings(data: Any) -> Any:
        if isinstance(data, dict):
            return {key: (None if key in TIMING_KEYS else DeterminismHelper.strip_timings(value))
                    for key, value in data.items()}
        if isinstance(data, list):
            return [DeterminismHelper.strip_timings(item) for item in data]
        return data
