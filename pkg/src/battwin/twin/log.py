"""Event log of a twin run and the checks it must satisfy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

UPLOAD = "upload"
SOH_ESTIMATE = "soh_estimate"
TRIGGER_FIRED = "trigger_fired"
RETRAIN_STARTED = "retrain_started"
RETRAIN_DONE = "retrain_done"
MODEL_SHIPPED = "model_shipped"
MODEL_SWAPPED = "model_swapped"
MODEL_REJECTED = "model_rejected"
SOC_INFERENCE = "soc_inference"

EVENT_KINDS = (UPLOAD, SOH_ESTIMATE, TRIGGER_FIRED, RETRAIN_STARTED, RETRAIN_DONE,
               MODEL_SHIPPED, MODEL_SWAPPED, MODEL_REJECTED, SOC_INFERENCE)

ACTOR_ORDER = {"cloud": 0, "edge": 1}


@dataclass(frozen=True)
class TwinEvent:
    event_time: int  # Lamport clock of the emitting actor
    actor: str
    seq: int  # per-actor emission counter
    kind: str
    details: dict
    timing: dict = field(default_factory=dict, compare=False)

    def sort_key(self):
        return (self.event_time, ACTOR_ORDER.get(self.actor, 9), self.seq)

    def to_dict(self, include_timing=False) -> dict:
        d = {"event_time": self.event_time, "actor": self.actor, "seq": self.seq,
             "kind": self.kind, "details": self.details}
        if include_timing:
            d["timing"] = self.timing
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TwinEvent":
        return cls(int(d["event_time"]), d["actor"], int(d["seq"]), d["kind"], dict(d["details"]),
                   dict(d.get("timing", {})))


@dataclass
class TwinRunLog:
    events: list[TwinEvent] = field(default_factory=list)

    @classmethod
    def merge(cls, *streams) -> "TwinRunLog":
        return cls(sorted((e for s in streams for e in s), key=TwinEvent.sort_key))

    def of_kind(self, *kinds) -> list[TwinEvent]:
        return [e for e in self.events if e.kind in kinds]

    def kinds(self) -> list[str]:
        return [e.kind for e in self.events]

    def signature(self) -> list[tuple]:
        """Transport-independent view: (actor, kind, details) per event."""
        return [(e.actor, e.kind, json.dumps(e.details, sort_keys=True)) for e in self.events]

    def to_jsonl(self, include_timing=False) -> str:
        return "".join(json.dumps(e.to_dict(include_timing), sort_keys=True) + "\n"
                       for e in self.events)

    def write(self, path, include_timing=False) -> None:
        Path(path).write_text(self.to_jsonl(include_timing))

    @classmethod
    def read(cls, path) -> "TwinRunLog":
        lines = Path(path).read_text().splitlines()
        return cls([TwinEvent.from_dict(json.loads(l)) for l in lines if l.strip()])


def check_invariants(log: TwinRunLog, delta: float | None = None, baseline: str = "band",
                     start_reference: float | None = None) -> list[str]:
    """Return a description of every invariant the log breaks (empty if none).

    Checked: each trigger_fired is followed by exactly one retrain_done and
    one model_swapped before the next trigger_fired; swapped versions
    strictly increase; every soc_inference uses the most recently swapped
    version; and, when ``delta`` is given, SOH-drop triggers fire exactly
    when the estimate falls ``delta`` below the reference.
    """
    problems = []
    pending = None  # [retrain_done count, swapped count] since last trigger
    for e in log.events:
        if e.kind == TRIGGER_FIRED:
            if pending is not None and pending != [1, 1]:
                problems.append(f"trigger at t={e.event_time}: previous trigger saw "
                                f"{pending[0]} retrain_done / {pending[1]} model_swapped")
            pending = [0, 0]
        elif e.kind == RETRAIN_DONE and pending is not None:
            pending[0] += 1
        elif e.kind == MODEL_SWAPPED and pending is not None:
            pending[1] += 1
    if pending is not None and pending != [1, 1]:
        problems.append(f"last trigger saw {pending[0]} retrain_done / {pending[1]} model_swapped")

    installed = None
    for e in log.events:
        if e.kind == MODEL_SWAPPED:
            v = e.details["version"]
            if installed is not None and v <= installed:
                problems.append(f"swap to version {v} does not exceed installed {installed}")
            if installed is not None and v != installed + 1:
                problems.append(f"swap to version {v} skips versions after {installed}")
            installed = v
        elif e.kind == SOC_INFERENCE:
            v = e.details["model_version"]
            if installed is None:
                installed = v
            elif v != installed:
                problems.append(f"inference on cycle {e.details['cycle_index']} used version {v}, "
                                f"installed is {installed}")

    if delta is not None:
        ref = start_reference
        estimates = log.of_kind(SOH_ESTIMATE, TRIGGER_FIRED)
        last_soh = None
        for e in estimates:
            if e.kind == SOH_ESTIMATE:
                if ref is None:
                    ref = e.details.get("reference")
                if last_soh is not None and ref is not None:
                    problems.extend(_missed(last_soh, ref, delta))
                last_soh = e.details
                continue
            if ref is None:
                ref = e.details["reference"]
            soh = e.details["soh_pct"]
            if "soh_drop" in e.details["reasons"]:
                if not soh <= ref - delta:
                    problems.append(f"trigger at soh {soh} but reference {ref} - delta {delta}")
                ref = ref - delta * int((ref - soh) // delta) if baseline == "band" else soh
            elif baseline == "estimate":
                ref = soh
            last_soh = None
        if last_soh is not None and ref is not None:
            problems.extend(_missed(last_soh, ref, delta))
    return problems


def _missed(est_details, ref, delta):
    soh = est_details["soh_pct"]
    if soh <= ref - delta:
        return [f"cycle {est_details['cycle_index']}: soh {soh} fell {delta} below {ref} "
                f"without a trigger"]
    return []
