import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from experiment.pool import ScenarioPool
from experiment.sampling import Scenario
from pfmath.power import as_model
from solver.ipm import check_convergence, solve
from solver.options import IpmOptions
from solver.state import PrimalDualState, WarmStart
from utils.errors import DatasetError, SmartPgError

logger = logging.getLogger(__name__)

TRAIN_FRACTION = (4, 5)


@dataclass
class GroundTruth:
    """Converged solver output for one scenario, in solver space"""
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    z: np.ndarray
    f0: float
    solve_time: Optional[float]
    iterations: int

    def warm_start(self) -> WarmStart:
        return WarmStart(x=self.x, lam=self.lam, mu=self.mu, z=self.z)


@dataclass
class Sample:
    scenario: Scenario
    truth: GroundTruth

    @property
    def id(self) -> str:
        return self.scenario.id

    def to_dict(self, include_timing: bool = True) -> dict:
        record = self.scenario.to_dict()
        record.update({
            "x": self.truth.x.tolist(),
            "lambda": self.truth.lam.tolist(),
            "mu": self.truth.mu.tolist(),
            "z": self.truth.z.tolist(),
            "f0": self.truth.f0,
            "solve_time": self.truth.solve_time if include_timing else None,
            "iterations": self.truth.iterations,
        })
        return record

    @classmethod
    def from_dict(cls, data: dict):
        scenario = Scenario.from_dict(data)
        try:
            truth = GroundTruth(
                x=np.asarray(data["x"], dtype=float),
                lam=np.asarray(data["lambda"], dtype=float),
                mu=np.asarray(data["mu"], dtype=float),
                z=np.asarray(data["z"], dtype=float),
                f0=float(data["f0"]),
                solve_time=None if data.get("solve_time") is None else float(data["solve_time"]),
                iterations=int(data["iterations"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"sample {scenario.id}: {e}")
        return cls(scenario, truth)


def split_key(sample_id: str) -> str:
    return hashlib.sha256(sample_id.encode("utf-8")).hexdigest()


class ScenarioDataset:
    """Scenarios paired with ground truth, unique by id"""

    def __init__(self, samples: Sequence[Sample] = ()):
        self.samples: List[Sample] = []
        self._ids = set()
        for sample in samples:
            self.add(sample)

    def add(self, sample: Sample):
        if sample.id in self._ids:
            raise DatasetError(f"duplicate scenario id '{sample.id}'")
        self._ids.add(sample.id)
        self.samples.append(sample)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def sorted(self) -> List[Sample]:
        return sorted(self.samples, key=lambda s: s.id)

    def split(self) -> Tuple[List[Sample], List[Sample]]:
        """80/20 train/validation split, ordered by a hash of each id so it never depends on file order"""
        ordered = sorted(self.samples, key=lambda s: split_key(s.id))
        n_train = len(ordered) * TRAIN_FRACTION[0] // TRAIN_FRACTION[1]
        return ordered[:n_train], ordered[n_train:]

    def write_jsonl(self, path, include_timing: bool = True):
        with open(path, "w", encoding="utf-8") as f:
            for sample in self.sorted():
                f.write(json.dumps(sample.to_dict(include_timing)) + "\n")
        logger.info(f"✅ Wrote {len(self)} samples to {path}")

    @classmethod
    def read_jsonl(cls, path) -> "ScenarioDataset":
        dataset = cls()
        for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{number}: unreadable record ({e})")
            if not isinstance(record, dict):
                raise DatasetError(f"{path}:{number}: record must be a JSON object")
            dataset.add(Sample.from_dict(record))
        return dataset


def check_unique(scenarios: Sequence[Scenario]):
    seen = set()
    for scenario in scenarios:
        if scenario.id in seen:
            raise DatasetError(f"duplicate scenario id '{scenario.id}'")
        seen.add(scenario.id)


def solve_scenario(case, scenario: Scenario, opts: IpmOptions) -> Optional[GroundTruth]:
    """Cold-start solve of one scenario; None unless it converged and re-checks as converged"""
    model = as_model(case).with_loads(scenario.pd, scenario.qd)
    try:
        point, report = solve(model, None, opts)
    except SmartPgError as e:
        logger.warning(f"⚠️ Scenario {scenario.id} raised {e}")
        return None
    if not report.converged:
        return None
    state = PrimalDualState(point.x, point.lam, point.mu, point.z, gamma=0.0)
    if not check_convergence(model, state, None, opts).converged:
        return None
    return GroundTruth(point.x, point.lam, point.mu, point.z, point.objective, report.wall_time, report.iterations)


def generate_dataset(case, scenarios: Sequence[Scenario], opts: Optional[IpmOptions] = None,
                     workers: int = 1) -> Tuple[ScenarioDataset, List[str]]:
    """Solve every scenario from a cold start; non-converged scenario ids come back as rejects"""
    opts = opts or IpmOptions()
    check_unique(scenarios)
    model = as_model(case)
    with ScenarioPool(workers) as pool:
        for scenario in scenarios:
            pool.submit(scenario.id, solve_scenario, model, scenario, opts)
        results = pool.collect()

    by_id = {scenario.id: scenario for scenario in scenarios}
    dataset, rejects = ScenarioDataset(), []
    for scenario_id, truth in results.items():
        if truth is None:
            rejects.append(scenario_id)
            logger.warning(f"⚠️ Rejected scenario {scenario_id}: cold solve did not converge")
        else:
            dataset.add(Sample(by_id[scenario_id], truth))
    logger.info(f"📊 Generated {len(dataset)} samples, {len(rejects)} rejected")
    return dataset, rejects
