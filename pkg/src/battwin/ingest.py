"""Trace data model and the flat CSV interchange format.

A trace file holds one row per sample::

    battery_id,cycle_index,relative_time_s,voltage_v,current_a,temperature_c

Rows are grouped into cycles by ``(battery_id, cycle_index)``.  Rows of
different cycles may be interleaved freely, but within one cycle the rows
must appear in strictly increasing ``relative_time_s``.  Discharge current
is positive.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

TRACE_COLUMNS = (
    "battery_id",
    "cycle_index",
    "relative_time_s",
    "voltage_v",
    "current_a",
    "temperature_c",
)
LABEL_COLUMNS = ("soc_pct", "soh_pct")

REFERENCE_DISCHARGE = "reference_discharge"

DEFAULT_RATED_CAPACITY = 2.1
DEFAULT_RATED_VOLTAGE = 4.2


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed into a Dataset."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class Sample(NamedTuple):
    relative_time: float
    voltage: float
    current: float
    temperature: float


@dataclass(frozen=True, eq=False)
class Cycle:
    """One reference discharge of one battery.

    Samples are stored column-wise as float64 arrays; ``samples`` gives the
    row view.
    """

    battery_id: str
    cycle_index: int
    relative_time: np.ndarray
    voltage: np.ndarray
    current: np.ndarray
    temperature: np.ndarray
    cycle_type: str = REFERENCE_DISCHARGE

    def __post_init__(self):
        cols = {}
        for name in ("relative_time", "voltage", "current", "temperature"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            arr.setflags(write=False)
            cols[name] = arr
            object.__setattr__(self, name, arr)
        lengths = {len(a) for a in cols.values()}
        if len(lengths) != 1:
            raise ValueError("sample columns have different lengths")
        if self.cycle_type != REFERENCE_DISCHARGE:
            raise ValueError(f"unsupported cycle type {self.cycle_type!r}")

    @classmethod
    def from_samples(cls, battery_id, cycle_index, samples):
        arr = np.asarray(list(samples), dtype=np.float64).reshape(-1, 4)
        return cls(battery_id, int(cycle_index), arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    def __len__(self):
        return len(self.relative_time)

    @property
    def samples(self) -> list[Sample]:
        cols = (self.relative_time, self.voltage, self.current, self.temperature)
        return [Sample(*map(float, row)) for row in zip(*cols)]

    def features(self) -> np.ndarray:
        """Feature matrix with columns (voltage, current, temperature, relative_time)."""
        return np.column_stack([self.voltage, self.current, self.temperature, self.relative_time])

    @property
    def duration(self) -> float:
        return float(self.relative_time[-1] - self.relative_time[0]) if len(self) else 0.0

    def __eq__(self, other):
        if not isinstance(other, Cycle):
            return NotImplemented
        return (
            self.battery_id == other.battery_id
            and self.cycle_index == other.cycle_index
            and self.cycle_type == other.cycle_type
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("relative_time", "voltage", "current", "temperature")
            )
        )

    __hash__ = None


@dataclass
class Dataset:
    batteries: dict[str, list[Cycle]] = field(default_factory=dict)
    rated_capacity: float = DEFAULT_RATED_CAPACITY
    rated_voltage: float = DEFAULT_RATED_VOLTAGE

    def __post_init__(self):
        if not self.rated_capacity > 0:
            raise ValueError("rated_capacity must be positive")
        self.batteries = {
            bid: sorted(cycles, key=lambda c: c.cycle_index)
            for bid, cycles in self.batteries.items()
        }

    def cycles(self) -> Iterator[Cycle]:
        for bid in self.batteries:
            yield from self.batteries[bid]

    @property
    def n_cycles(self) -> int:
        return sum(len(c) for c in self.batteries.values())

    def select(self, battery_ids) -> "Dataset":
        missing = [b for b in battery_ids if b not in self.batteries]
        if missing:
            raise KeyError(f"unknown batteries: {missing}")
        return Dataset({b: self.batteries[b] for b in battery_ids},
                       self.rated_capacity, self.rated_voltage)


@dataclass(frozen=True)
class Violation:
    battery_id: str
    cycle_index: int
    sample_index: int | None
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class Bounds:
    voltage: tuple[float, float] = (0.0, 6.0)
    temperature: tuple[float, float] = (-30.0, 80.0)


def validate_dataset(d: Dataset, bounds: Bounds = Bounds()) -> list[Violation]:
    """Check every Cycle/Sample invariant and report each violation.

    Never raises on bad data; an empty list means the dataset is clean.
    """
    out = []
    if not d.rated_capacity > 0:
        out.append(Violation("", -1, None, "rated_capacity", f"{d.rated_capacity}"))
    vlo, vhi = bounds.voltage
    tlo, thi = bounds.temperature
    for bid, cycles in d.batteries.items():
        seen = set()
        for c in cycles:
            if c.cycle_index < 0:
                out.append(Violation(bid, c.cycle_index, None, "cycle_index_nonnegative"))
            if c.cycle_index in seen:
                out.append(Violation(bid, c.cycle_index, None, "cycle_index_unique"))
            seen.add(c.cycle_index)
            if len(c) == 0:
                out.append(Violation(bid, c.cycle_index, None, "samples_nonempty"))
                continue
            for name, col in (("relative_time", c.relative_time), ("voltage", c.voltage),
                              ("current", c.current), ("temperature", c.temperature)):
                for k in np.flatnonzero(~np.isfinite(col)):
                    out.append(Violation(bid, c.cycle_index, int(k), f"{name}_finite"))
            for k in np.flatnonzero(c.relative_time < 0):
                out.append(Violation(bid, c.cycle_index, int(k), "relative_time_nonnegative",
                                     f"{c.relative_time[k]}"))
            for k in np.flatnonzero(np.diff(c.relative_time) <= 0):
                out.append(Violation(bid, c.cycle_index, int(k) + 1, "relative_time_increasing",
                                     f"{c.relative_time[k]} -> {c.relative_time[k + 1]}"))
            for k in np.flatnonzero(~((c.voltage > vlo) & (c.voltage < vhi))):
                if np.isfinite(c.voltage[k]):
                    out.append(Violation(bid, c.cycle_index, int(k), "voltage_bounds",
                                         f"{c.voltage[k]} V outside ({vlo}, {vhi})"))
            for k in np.flatnonzero(~((c.temperature > tlo) & (c.temperature < thi))):
                if np.isfinite(c.temperature[k]):
                    out.append(Violation(bid, c.cycle_index, int(k), "temperature_bounds",
                                         f"{c.temperature[k]} C outside ({tlo}, {thi})"))
    return out


def _read_rows(path: Path, required: tuple[str, ...]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("empty file", path) from None
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise TraceFormatError(f"missing header column(s): {', '.join(missing)}", path, 1)
        pos = [header.index(c) for c in required]
        n_rows = 0
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise TraceFormatError(
                    f"expected {len(header)} fields, got {len(row)}", path, line)
            n_rows += 1
            yield line, [row[p].strip() for p in pos]
        if n_rows == 0:
            raise TraceFormatError("no data rows", path)


def _parse_float(text, name, path, line):
    try:
        v = float(text)
    except ValueError:
        raise TraceFormatError(f"{name}: not a number: {text!r}", path, line) from None
    if not math.isfinite(v):
        raise TraceFormatError(f"{name}: non-finite value {text!r}", path, line)
    return v


def _parse_index(text, path, line):
    try:
        v = int(text)
    except ValueError:
        raise TraceFormatError(f"cycle_index: not an integer: {text!r}", path, line) from None
    if v < 0:
        raise TraceFormatError(f"cycle_index: negative value {v}", path, line)
    return v


def _group(path, rows, n_extra=0):
    groups: dict[tuple[str, int], list] = {}
    for line, fields in rows:
        bid = fields[0]
        if not bid:
            raise TraceFormatError("battery_id: empty", path, line)
        idx = _parse_index(fields[1], path, line)
        vals = [_parse_float(f, n, path, line) for f, n in zip(fields[2:], TRACE_COLUMNS[2:] + LABEL_COLUMNS)]
        if vals[0] < 0:
            raise TraceFormatError(f"relative_time_s: negative value {vals[0]}", path, line)
        g = groups.setdefault((bid, idx), [])
        if g and vals[0] <= g[-1][1][0]:
            raise TraceFormatError(
                f"non-monotonic time in battery {bid!r} cycle {idx}: "
                f"{g[-1][1][0]} then {vals[0]}", path, line)
        g.append((line, vals))
    return groups


def parse_traces(path, rated_capacity: float = DEFAULT_RATED_CAPACITY,
                 rated_voltage: float = DEFAULT_RATED_VOLTAGE) -> Dataset:
    """Parse a trace CSV into a Dataset.

    Raises
    ------
    TraceFormatError
        On an empty file, a missing header column, a malformed row (the
        message carries ``path:line``), or time going backwards inside a
        cycle.
    """
    path = Path(path)
    if not path.exists():
        raise TraceFormatError("no such file", path)
    groups = _group(path, _read_rows(path, TRACE_COLUMNS))
    batteries: dict[str, list[Cycle]] = {}
    for (bid, idx) in sorted(groups):
        arr = np.array([v for _, v in groups[(bid, idx)]], dtype=np.float64)
        batteries.setdefault(bid, []).append(
            Cycle(bid, idx, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]))
    return Dataset(batteries, rated_capacity, rated_voltage)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(d: Dataset, path) -> None:
    """Write ``d`` in the trace CSV schema; floats are written losslessly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for c in d.cycles():
            for t, v, i, temp in zip(c.relative_time, c.voltage, c.current, c.temperature):
                w.writerow([c.battery_id, c.cycle_index, _fmt(t), _fmt(v), _fmt(i), _fmt(temp)])


def read_labeled_rows(path):
    """Parse a labeled CSV (trace schema plus ``soc_pct,soh_pct``).

    Returns ``{(battery_id, cycle_index): (Cycle, soc_array, soh_array)}``
    in sorted key order; the labeling module assembles these into a
    LabeledDataset.
    """
    path = Path(path)
    if not path.exists():
        raise TraceFormatError("no such file", path)
    groups = _group(path, _read_rows(path, TRACE_COLUMNS + LABEL_COLUMNS))
    out = {}
    for key in sorted(groups):
        arr = np.array([v for _, v in groups[key]], dtype=np.float64)
        cyc = Cycle(key[0], key[1], arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
        out[key] = (cyc, arr[:, 4], arr[:, 5])
    return out
