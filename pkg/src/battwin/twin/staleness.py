"""How SOC error grows when a model is used at an SOH it was not trained at."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..labeling import LabeledCycle, LabeledDataset, stack_cycles
from ..learners import EvalReport, LearnerConfig, evaluate, train
from .actors import TwinError


def default_staleness_learner() -> LearnerConfig:
    return LearnerConfig("random_forest", {}, 0, scale=True)


def nearest_cycles(cycles: list[LabeledCycle], band: float, n: int = 1, exclude=(),
                   max_gap: float = 2.5) -> list[LabeledCycle]:
    """The ``n`` cycles whose SOH is closest to ``band``, ties to the earlier cycle.

    Raises TwinError when fewer than ``n`` candidates lie within ``max_gap``
    SOH points of the band.
    """
    skip = set(exclude)
    pool = [lc for lc in cycles if lc.cycle_index not in skip]
    pool.sort(key=lambda lc: (abs(lc.soh - band), lc.cycle_index))
    picked = [lc for lc in pool[:n] if abs(lc.soh - band) <= max_gap]
    if len(picked) < n:
        raise TwinError(f"no cycle within {max_gap} SOH points of band {band}"
                        if not picked else f"only {len(picked)} cycle(s) near band {band}")
    return picked


@dataclass(frozen=True)
class StalenessRow:
    train_band: float
    train_cycles: tuple[int, ...]
    train_soh: float
    report: EvalReport

    def to_dict(self) -> dict:
        return {"train_band": self.train_band, "train_cycles": list(self.train_cycles),
                "train_soh": self.train_soh, **self.report.to_dict()}


@dataclass
class StalenessResult:
    battery_id: str
    eval_band: float
    eval_cycle_index: int
    eval_soh: float
    rows: list[StalenessRow]
    relative_time: np.ndarray = field(repr=False)
    soc_true: np.ndarray = field(repr=False)
    soc_pred: dict[float, np.ndarray] = field(repr=False)

    def mae(self) -> list[float]:
        return [r.report.mae_pct for r in self.rows]

    def to_dict(self) -> dict:
        return {"battery_id": self.battery_id, "eval_band": self.eval_band,
                "eval_cycle_index": self.eval_cycle_index, "eval_soh": self.eval_soh,
                "rows": [r.to_dict() for r in self.rows]}

    def write_curves(self, path) -> None:
        """Predicted-vs-true SOC over the eval cycle, one column per train band."""
        bands = [r.train_band for r in self.rows]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["relative_time_s", "soc_true"] + [f"soc_pred_band_{b:g}" for b in bands])
            for i in range(len(self.soc_true)):
                w.writerow([repr(float(self.relative_time[i])), repr(float(self.soc_true[i]))]
                           + [repr(float(self.soc_pred[b][i])) for b in bands])


def evaluate_staleness(dataset: LabeledDataset, train_bands, eval_band: float,
                       learner: LearnerConfig | None = None, battery: str | None = None,
                       cycles_per_band: int = 1, max_gap: float = 2.5) -> StalenessResult:
    """Train one SOC model per band and score each on the same eval-band cycle.

    Bands are matched to the nearest cycles by measured SOH.  The eval
    cycle is never used for training, so a train band equal to the eval
    band gives the in-band (fresh) error.  Rows come stalest first.
    """
    learner = learner or default_staleness_learner()
    bands = sorted({float(b) for b in train_bands}, reverse=True)
    if not bands:
        raise ValueError("need at least one train band")
    if battery is None:
        battery = next(iter(dataset.batteries), None)
    if battery not in dataset.batteries:
        raise TwinError(f"battery {battery!r} not in dataset")
    cycles = dataset.batteries[battery]
    target = nearest_cycles(cycles, eval_band, 1, max_gap=max_gap)[0]
    rows, preds = [], {}
    for band in bands:
        picked = nearest_cycles(cycles, band, cycles_per_band, exclude=[target.cycle_index],
                                max_gap=max_gap)
        X, y = stack_cycles(picked, "soc")
        model = train(learner, X, y, trained_at_soh=band)
        rep = evaluate(model, target.features(), target.soc)
        rows.append(StalenessRow(band, tuple(lc.cycle_index for lc in picked),
                                 float(np.mean([lc.soh for lc in picked])), rep))
        preds[band] = model.predict(target.features())
    return StalenessResult(battery, float(eval_band), target.cycle_index, target.soh, rows,
                           target.cycle.relative_time, target.soc, preds)
