from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..learners import LearnerConfig


def default_soc_learner() -> LearnerConfig:
    return LearnerConfig("random_forest", {}, 0, scale=True)


def default_soh_learner() -> LearnerConfig:
    # unbounded depth over all features: SOH needs fine (voltage, time) partitions
    return LearnerConfig("random_forest", {"n_trees": 30, "max_depth": None,
                                           "feature_subsample": "all"}, 0, scale=False)


@dataclass(frozen=True)
class TwinConfig:
    """Retrain triggers, learners and replay selection for one twin run.

    ``trigger_baseline`` picks the reference the SOH-drop trigger is measured
    against: ``"band"`` keeps it on the grid ``start - k * delta`` (each
    retrain advances it by whole deltas), ``"estimate"`` resets it to the SOH
    estimate at which the retrain fired.
    """

    soh_trigger_delta: float | None = 1.0
    period_trigger: int | None = None
    soc_learner: LearnerConfig = field(default_factory=default_soc_learner)
    soh_learner: LearnerConfig = field(default_factory=default_soh_learner)
    retrain_window: int = 3
    seed: int = 0
    trigger_baseline: str = "band"
    soh_reducer: str = "mean"
    nominal_cycles: int = 1
    battery: str | None = None
    historical_batteries: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.soh_trigger_delta is None and self.period_trigger is None:
            raise ValueError("at least one retrain trigger must be enabled")
        if self.soh_trigger_delta is not None and not self.soh_trigger_delta > 0:
            raise ValueError("soh_trigger_delta must be positive")
        if self.period_trigger is not None and int(self.period_trigger) < 1:
            raise ValueError("period_trigger must be >= 1")
        if int(self.retrain_window) < 1:
            raise ValueError("retrain_window must be >= 1")
        if self.trigger_baseline not in ("band", "estimate"):
            raise ValueError(f"unknown trigger_baseline {self.trigger_baseline!r}")
        if self.soh_reducer not in ("mean", "median"):
            raise ValueError(f"unknown soh_reducer {self.soh_reducer!r}")
        if int(self.nominal_cycles) < 1:
            raise ValueError("nominal_cycles must be >= 1")
        if self.historical_batteries is not None:
            object.__setattr__(self, "historical_batteries", tuple(self.historical_batteries))

    def replace(self, **kw) -> "TwinConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "soh_trigger_delta": self.soh_trigger_delta,
            "period_trigger": self.period_trigger,
            "soc_learner": self.soc_learner.to_dict(),
            "soh_learner": self.soh_learner.to_dict(),
            "retrain_window": self.retrain_window,
            "seed": self.seed,
            "trigger_baseline": self.trigger_baseline,
            "soh_reducer": self.soh_reducer,
            "nominal_cycles": self.nominal_cycles,
            "battery": self.battery,
            "historical_batteries": None if self.historical_batteries is None
            else list(self.historical_batteries),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TwinConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown TwinConfig field(s): {sorted(unknown)}")
        for key, dflt in (("soc_learner", default_soc_learner), ("soh_learner", default_soh_learner)):
            if key in d:
                base = dflt().to_dict()
                base.update(d[key])
                d[key] = LearnerConfig.from_dict(base)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TwinConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
