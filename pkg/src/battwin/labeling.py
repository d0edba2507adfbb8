"""SOC/SOH labels for reference discharge cycles.

SOC is obtained by Coulomb counting against the cycle's own available
capacity; SOH is the available capacity as a percentage of the rated
capacity.  Cycles that break the non-increasing SOH trend are dropped.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import Cycle, Dataset, LABEL_COLUMNS, TRACE_COLUMNS, read_labeled_rows

# |i| below this is treated as zero when it is negative (rest-period noise)
NEGATIVE_CURRENT_TOLERANCE = 0.01

REASON_MONOTONICITY = "soh_monotonicity"


class LabelingError(ValueError):
    pass


def _discharge_current(cycle: Cycle) -> np.ndarray:
    i = np.asarray(cycle.current, dtype=np.float64)
    if np.any(i <= -NEGATIVE_CURRENT_TOLERANCE):
        k = int(np.argmax(i <= -NEGATIVE_CURRENT_TOLERANCE))
        raise LabelingError(
            f"battery {cycle.battery_id!r} cycle {cycle.cycle_index}: charge current "
            f"{i[k]} A at sample {k} in a discharge cycle")
    return np.where(i < 0, 0.0, i)


def _charge_drawn_ah(cycle: Cycle) -> np.ndarray:
    """Cumulative trapezoidal charge in Ah at each sample (0 at the first)."""
    if len(cycle) == 0:
        raise LabelingError("empty cycle")
    i = _discharge_current(cycle)
    t = cycle.relative_time
    seg = 0.5 * (i[1:] + i[:-1]) * np.diff(t)
    return np.concatenate(([0.0], np.cumsum(seg))) / 3600.0


def coulomb_count(cycle: Cycle, available_capacity: float) -> np.ndarray:
    """Per-sample SOC in percent, clamped to [0, 100]."""
    if not available_capacity > 0:
        raise LabelingError(f"available_capacity must be positive, got {available_capacity}")
    q = _charge_drawn_ah(cycle)
    soc = 100.0 * (available_capacity - q) / available_capacity
    return np.clip(soc, 0.0, 100.0)


def cycle_capacity(cycle: Cycle) -> float:
    """Total charge delivered over the cycle, in Ah."""
    return float(_charge_drawn_ah(cycle)[-1])


def compute_soh(available_capacity: float, rated_capacity: float) -> float:
    if not (available_capacity > 0 and rated_capacity > 0):
        raise LabelingError(
            f"capacities must be positive (available={available_capacity}, rated={rated_capacity})")
    return 100.0 * available_capacity / rated_capacity


def clean_monotonic(cycles, epsilon: float = 0.0):
    """Greedy forward pass over ``(cycle_index, soh)`` pairs.

    A cycle is kept when its SOH does not exceed the last kept SOH by more
    than ``epsilon``; the first cycle is always kept.

    Returns
    -------
    retained, removed : list of int
        Cycle indices, in input order.
    """
    retained, removed = [], []
    last = None
    for idx, soh in cycles:
        if last is None or soh <= last + epsilon:
            retained.append(idx)
            last = soh
        else:
            removed.append(idx)
    return retained, removed


@dataclass(frozen=True, eq=False)
class LabeledCycle:
    cycle: Cycle
    soc: np.ndarray
    soh: float
    available_capacity: float

    def __post_init__(self):
        soc = np.array(self.soc, dtype=np.float64)
        if soc.shape != (len(self.cycle),):
            raise ValueError("soc must align with the cycle samples")
        soc.setflags(write=False)
        object.__setattr__(self, "soc", soc)

    @property
    def battery_id(self) -> str:
        return self.cycle.battery_id

    @property
    def cycle_index(self) -> int:
        return self.cycle.cycle_index

    def features(self) -> np.ndarray:
        return self.cycle.features()

    def soh_column(self) -> np.ndarray:
        return np.full(len(self.cycle), self.soh)

    def __eq__(self, other):
        if not isinstance(other, LabeledCycle):
            return NotImplemented
        return (self.cycle == other.cycle and np.array_equal(self.soc, other.soc)
                and self.soh == other.soh)

    __hash__ = None


@dataclass(frozen=True)
class RemovedCycle:
    battery_id: str
    cycle_index: int
    reason: str


@dataclass
class LabeledDataset:
    batteries: dict[str, list[LabeledCycle]] = field(default_factory=dict)
    rated_capacity: float = 2.1
    removed_cycles: list[RemovedCycle] = field(default_factory=list)

    def cycles(self):
        for bid in self.batteries:
            yield from self.batteries[bid]

    def soh_profile(self, battery_id: str) -> list[tuple[int, float]]:
        return [(lc.cycle_index, lc.soh) for lc in self.batteries[battery_id]]

    def select(self, battery_ids) -> "LabeledDataset":
        ids = list(battery_ids)
        return LabeledDataset({b: self.batteries[b] for b in ids}, self.rated_capacity,
                              [r for r in self.removed_cycles if r.battery_id in ids])

    def arrays(self, target: str = "soc", feature_idx=None):
        """Stack all samples into ``(X, y)``; ``target`` is "soc" or "soh"."""
        cycles = list(self.cycles())
        if not cycles:
            raise LabelingError("labeled dataset is empty")
        return stack_cycles(cycles, target, feature_idx)


def stack_cycles(cycles, target="soc", feature_idx=None):
    X = np.vstack([lc.features() for lc in cycles])
    if target == "soc":
        y = np.concatenate([lc.soc for lc in cycles])
    elif target == "soh":
        y = np.concatenate([lc.soh_column() for lc in cycles])
    else:
        raise ValueError(f"unknown target {target!r}")
    if feature_idx is not None:
        X = X[:, list(feature_idx)]
    return X, y


def label_cycle(cycle: Cycle, rated_capacity: float) -> LabeledCycle:
    """Label one cycle against its own measured capacity."""
    cap = cycle_capacity(cycle)
    soh = compute_soh(cap, rated_capacity)
    return LabeledCycle(cycle, coulomb_count(cycle, cap), soh, cap)


def build_labeled_dataset(d: Dataset, epsilon: float = 0.0) -> LabeledDataset:
    out: dict[str, list[LabeledCycle]] = {}
    removed: list[RemovedCycle] = []
    for bid, cycles in d.batteries.items():
        if not cycles:
            raise LabelingError(f"battery {bid!r} has no cycles")
        caps = {c.cycle_index: cycle_capacity(c) for c in cycles}
        soh = {k: compute_soh(v, d.rated_capacity) for k, v in caps.items()}
        keep, drop = clean_monotonic([(c.cycle_index, soh[c.cycle_index]) for c in cycles], epsilon)
        keep = set(keep)
        out[bid] = [
            LabeledCycle(c, coulomb_count(c, caps[c.cycle_index]), soh[c.cycle_index],
                         caps[c.cycle_index])
            for c in cycles if c.cycle_index in keep
        ]
        removed.extend(RemovedCycle(bid, k, REASON_MONOTONICITY) for k in drop)
    return LabeledDataset(out, d.rated_capacity, removed)


def write_labeled(ld: LabeledDataset, path) -> None:
    fmt = lambda x: repr(float(x))  # noqa: E731
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS + LABEL_COLUMNS)
        for lc in ld.cycles():
            c = lc.cycle
            soh = fmt(lc.soh)
            for t, v, i, temp, soc in zip(c.relative_time, c.voltage, c.current,
                                          c.temperature, lc.soc):
                w.writerow([c.battery_id, c.cycle_index, fmt(t), fmt(v), fmt(i), fmt(temp),
                            fmt(soc), soh])


def read_labeled(path, rated_capacity: float = 2.1, removed_log=None) -> LabeledDataset:
    """Load a labeled CSV written by :func:`write_labeled`.

    ``available_capacity`` is recovered from the SOH column.  If
    ``removed_log`` names an existing JSON file its entries are attached.
    """
    batteries: dict[str, list[LabeledCycle]] = {}
    for (bid, _), (cyc, soc, soh) in read_labeled_rows(path).items():
        if np.ptp(soh) != 0:
            raise LabelingError(f"battery {bid!r} cycle {cyc.cycle_index}: SOH varies within cycle")
        s = float(soh[0])
        batteries.setdefault(bid, []).append(
            LabeledCycle(cyc, soc, s, s * rated_capacity / 100.0))
    removed = []
    if removed_log is not None and Path(removed_log).exists():
        removed = read_removed_log(removed_log)
    return LabeledDataset(batteries, rated_capacity, removed)


def write_removed_log(ld: LabeledDataset, path) -> None:
    Path(path).write_text(json.dumps(
        [{"battery_id": r.battery_id, "cycle_index": r.cycle_index, "reason": r.reason}
         for r in ld.removed_cycles], indent=2) + "\n")


def read_removed_log(path) -> list[RemovedCycle]:
    return [RemovedCycle(d["battery_id"], int(d["cycle_index"]), d["reason"])
            for d in json.loads(Path(path).read_text())]
