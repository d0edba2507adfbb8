"""Deterministic synthetic aging-battery traces.

Each entry of the SOH schedule yields one constant-current reference
discharge.  Aging shrinks the available capacity and raises the internal
resistance, so lower-SOH cycles are both shorter and sit lower on the
voltage axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import Cycle, Dataset

# cubic through (0 %, 3.0 V), (50 %, 3.7 V), (100 %, 4.2 V), highest power first
DEFAULT_OCV = (2.4e-6, -4.0e-4, 0.028, 3.0)


def linear_schedule(start: float, stop: float, n: int) -> list[float]:
    """``n`` evenly spaced SOH values from ``start`` down to ``stop``."""
    return [float(x) for x in np.linspace(start, stop, n)]


@dataclass(frozen=True)
class SynthParams:
    rated_capacity: float = 2.1
    ocv_coefficients: tuple[float, ...] = DEFAULT_OCV
    r_internal_nominal: float = 0.1
    r_growth: float = 1.0
    discharge_current: float = 1.0
    sample_period: float = 10.0
    soh_schedule: tuple[float, ...] = field(default_factory=lambda: tuple(linear_schedule(100, 70, 31)))
    noise_sigma: float = 0.0
    seed: int = 0
    battery_id: str = "SYN"
    cutoff_voltage: float = 2.5
    ambient_temperature: float = 24.0
    temperature_sigma: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "soh_schedule", tuple(float(s) for s in self.soh_schedule))
        object.__setattr__(self, "ocv_coefficients", tuple(float(c) for c in self.ocv_coefficients))
        problems = []
        if not self.rated_capacity > 0:
            problems.append("rated_capacity must be positive")
        if not self.soh_schedule:
            problems.append("soh_schedule is empty")
        elif any(s <= 0 for s in self.soh_schedule):
            problems.append("soh_schedule entries must be positive")
        elif any(b > a for a, b in zip(self.soh_schedule, self.soh_schedule[1:])):
            problems.append("soh_schedule must be non-increasing")
        if self.noise_sigma < 0 or self.temperature_sigma < 0:
            problems.append("noise sigmas must be non-negative")
        if not self.discharge_current > 0:
            problems.append("discharge_current must be positive")
        if not self.sample_period > 0:
            problems.append("sample_period must be positive")
        if self.r_internal_nominal < 0 or self.r_growth < 0:
            problems.append("resistance parameters must be non-negative")
        if not self.ocv_coefficients:
            problems.append("ocv_coefficients is empty")
        if problems:
            raise ValueError("; ".join(problems))

    def ocv(self, soc_pct):
        return np.polyval(self.ocv_coefficients, soc_pct)

    def resistance(self, soh_pct: float) -> float:
        return self.r_internal_nominal * (1.0 + self.r_growth * (100.0 - soh_pct) / 100.0)


def generate_cycle(p: SynthParams, soh: float, cycle_index: int) -> Cycle:
    rng = np.random.default_rng([p.seed, cycle_index])
    cap = soh * p.rated_capacity / 100.0
    i = p.discharge_current
    t_empty = 3600.0 * cap / i
    t = np.arange(0.0, t_empty, p.sample_period)
    if t_empty - t[-1] > 1e-9 * t_empty:
        t = np.append(t, t_empty)
    else:
        t[-1] = t_empty
    soc = 100.0 * (1.0 - i * t / (3600.0 * cap))
    v_clean = p.ocv(np.clip(soc, 0.0, 100.0)) - i * p.resistance(soh)
    below = np.flatnonzero(v_clean < p.cutoff_voltage)
    if below.size:
        t, v_clean = t[: max(below[0], 1)], v_clean[: max(below[0], 1)]
    v = v_clean + rng.normal(0.0, p.noise_sigma, len(t)) if p.noise_sigma > 0 else v_clean
    temp = p.ambient_temperature + (
        rng.normal(0.0, p.temperature_sigma, len(t)) if p.temperature_sigma > 0 else 0.0)
    return Cycle(p.battery_id, cycle_index, t, v, np.full(len(t), i),
                 np.broadcast_to(temp, t.shape))


def generate_lifetime(p: SynthParams) -> Dataset:
    """One reference discharge per ``p.soh_schedule`` entry, indexed from 0."""
    cycles = [generate_cycle(p, soh, k) for k, soh in enumerate(p.soh_schedule)]
    return Dataset({p.battery_id: cycles}, p.rated_capacity)


def generate_fleet(params) -> Dataset:
    """Merge several single-battery lifetimes (distinct ``battery_id``) into one Dataset."""
    batteries = {}
    rated = None
    for p in params:
        if p.battery_id in batteries:
            raise ValueError(f"duplicate battery_id {p.battery_id!r}")
        if rated is not None and p.rated_capacity != rated:
            raise ValueError("all batteries must share the rated capacity")
        rated = p.rated_capacity
        batteries.update(generate_lifetime(p).batteries)
    return Dataset(batteries, rated)
