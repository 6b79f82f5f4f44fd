import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from experiment.pool import ScenarioPool
from pfmath.power import as_model
from solver.ipm import solve
from solver.options import IpmOptions
from solver.state import WarmStart

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["mask", "use_x", "use_lambda", "use_mu", "use_z", "sr", "su", "su_iter",
               "mean_iterations", "iteration_ratio", "n"]


@dataclass(frozen=True)
class AblationMask:
    """Which warm-start components come from the precise ground truth; the rest keep cold defaults"""
    use_x: bool
    use_lambda: bool
    use_mu: bool
    use_z: bool

    @property
    def label(self) -> str:
        return "".join("1" if flag else "0" for flag in (self.use_x, self.use_lambda, self.use_mu, self.use_z))

    @classmethod
    def from_label(cls, label: str) -> "AblationMask":
        if len(label) != 4 or set(label) - {"0", "1"}:
            raise ValueError(f"mask label must be four 0/1 digits, got '{label}'")
        return cls(*(digit == "1" for digit in label))

    def apply(self, ws: WarmStart) -> WarmStart:
        return ws.masked(self.use_x, self.use_lambda, self.use_mu, self.use_z)

    def tasks(self) -> List[str]:
        """Network tasks whose precision this mask asks for"""
        chosen = []
        if self.use_x:
            chosen += ["va", "vm", "pg", "qg"]
        if self.use_lambda:
            chosen.append("lambda")
        if self.use_mu:
            chosen.append("mu")
        if self.use_z:
            chosen.append("z")
        return chosen


BASELINE = AblationMask(False, False, False, False)


def all_masks() -> List[AblationMask]:
    """The 16 masks from 0000 to 1111, X as the most significant digit"""
    return [AblationMask.from_label(format(code, "04b")) for code in range(16)]


@dataclass
class AblationOutcome:
    converged: bool
    iterations: int
    wall_time: float


@dataclass
class AblationRow:
    mask: AblationMask
    sr: float
    su: Optional[float]
    su_iter: Optional[float]
    mean_iterations: Optional[float]
    iteration_ratio: Optional[float]
    n: int

    def to_dict(self) -> dict:
        return {
            "mask": self.mask.label,
            "use_x": self.mask.use_x,
            "use_lambda": self.mask.use_lambda,
            "use_mu": self.mask.use_mu,
            "use_z": self.mask.use_z,
            "sr": self.sr,
            "su": self.su,
            "su_iter": self.su_iter,
            "mean_iterations": self.mean_iterations,
            "iteration_ratio": self.iteration_ratio,
            "n": self.n,
        }


class AblationTable:
    def __init__(self, rows: List[AblationRow]):
        self.rows = rows

    def row(self, label: str) -> AblationRow:
        for row in self.rows:
            if row.mask.label == label:
                return row
        raise KeyError(label)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_dict() for row in self.rows], columns=CSV_COLUMNS)

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def observations(self) -> dict:
        """Ordering properties measured on the table

        Covers SR of every precise-X mask, whether 1111 needs the fewest iterations,
        and SR of 0001 against 0000. Entries for masks that were not run are None.
        """
        labels = {row.mask.label: row for row in self.rows}
        with_x = [row for row in self.rows if row.mask.use_x]
        timed = [row for row in self.rows if row.mean_iterations is not None]
        full = labels.get("1111")
        z_only, baseline = labels.get("0001"), labels.get("0000")
        return {
            "precise_x_always_converges": all(row.sr == 1.0 for row in with_x) if with_x else None,
            "full_mask_fewest_iterations": (
                full.mean_iterations is not None
                and full.mean_iterations <= min(row.mean_iterations for row in timed)
            ) if full else None,
            "full_mask_iteration_ratio": full.iteration_ratio if full else None,
            "sr_0000": baseline.sr if baseline else None,
            "sr_0001": z_only.sr if z_only else None,
            "z_only_below_baseline": z_only.sr < baseline.sr if z_only and baseline else None,
        }

    def to_dict(self) -> dict:
        return {"rows": [row.to_dict() for row in self.rows], "observations": self.observations()}

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)


def _run_masked(model, sample, mask: AblationMask, opts: IpmOptions) -> AblationOutcome:
    scenario_model = model.with_loads(sample.scenario.pd, sample.scenario.qd)
    _, report = solve(scenario_model, mask.apply(sample.truth.warm_start()), opts)
    return AblationOutcome(report.converged, report.iterations, report.wall_time)


def _mean(values) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def ablation_run(case, samples: Sequence, masks: Optional[Sequence[AblationMask]] = None,
                 opts: Optional[IpmOptions] = None, workers: int = 1,
                 deterministic: bool = False) -> AblationTable:
    """Solve every sample under every mask without fallback and tabulate SR and SU

    SU is the mean cold/warm wall-time ratio over pairs where both runs
    converged; su_iter is the ratio of mean iteration counts. Deterministic
    runs report su_iter in place of the wall-time SU.
    """
    opts = opts or IpmOptions()
    model = as_model(case)
    masks = list(masks) if masks is not None else all_masks()
    if BASELINE not in masks:
        masks = [BASELINE] + masks

    with ScenarioPool(workers) as pool:
        for sample in samples:
            for mask in masks:
                pool.submit((sample.id, mask.label), _run_masked, model, sample, mask, opts)
        outcomes: Dict = pool.collect()

    ids = sorted({sample.id for sample in samples})
    baseline = {sid: outcomes[(sid, BASELINE.label)] for sid in ids}
    base_iterations = _mean([o.iterations for o in baseline.values() if o.converged])

    rows = []
    for mask in sorted(masks, key=lambda m: m.label):
        runs = {sid: outcomes[(sid, mask.label)] for sid in ids}
        converged = [sid for sid in ids if runs[sid].converged]
        mean_iterations = _mean([runs[sid].iterations for sid in converged])

        if mask == BASELINE:
            su, su_iter, ratio = 1.0, 1.0, 1.0
        else:
            paired = [sid for sid in converged if baseline[sid].converged and runs[sid].wall_time > 0]
            su = _mean([baseline[sid].wall_time / runs[sid].wall_time for sid in paired])
            if mean_iterations is None or not base_iterations:
                su_iter = ratio = None
            else:
                su_iter = base_iterations / max(mean_iterations, 1.0)
                ratio = mean_iterations / base_iterations
        if deterministic:
            su = su_iter

        rows.append(AblationRow(
            mask=mask,
            sr=len(converged) / len(ids) if ids else 0.0,
            su=su,
            su_iter=su_iter,
            mean_iterations=mean_iterations,
            iteration_ratio=ratio,
            n=len(ids),
        ))
        logger.info(f"📊 mask {mask.label}: SR {rows[-1].sr:.1%}, SU {su if su is not None else float('nan'):.3f}, "
                    f"mean iterations {mean_iterations if mean_iterations is not None else float('nan'):.1f}")
    table = AblationTable(rows)
    logger.info(f"📊 Ablation observations: {table.observations()}")
    return table
