"""Edge and cloud actors of the battery twin.

The cloud owns the frozen SOH model, the retrain trigger and the model
registry; it retrains the SOC model when the trigger fires and ships the
artifact.  The edge runs SOC inference with whatever model is installed
and swaps models atomically.
"""

from __future__ import annotations

import hashlib
import threading
import time

import numpy as np

from ..labeling import LabelingError, label_cycle, stack_cycles
from ..learners import ArtifactError, LearnerConfig, Regressor, deserialize_model, dumps_model
from ..learners import serialize_model, train
from . import log as ev
from .messages import (ACK, MEASUREMENT_BATCH, MODEL_UPDATE, SOH_ESTIMATE, MessageError,
                       TwinMessage, batch_payload, cycle_from_batch)


class TwinError(RuntimeError):
    pass


class Actor:
    """Lamport-clocked message endpoint with its own event stream."""

    name = "actor"

    def __init__(self):
        self.clock = 0
        self._next_msg_id = 1
        self._last_seen: dict[str, int] = {}
        self._seq = 0
        self.events: list[ev.TwinEvent] = []

    def emit(self, kind, timing=None, **details):
        self.clock += 1
        self._seq += 1
        self.events.append(ev.TwinEvent(self.clock, self.name, self._seq, kind, details,
                                        timing or {}))

    def send(self, kind, payload) -> TwinMessage:
        self.clock += 1
        msg = TwinMessage(self._next_msg_id, kind, payload, self.clock)
        self._next_msg_id += 1
        return msg

    def receive(self, msg: TwinMessage, sender: str) -> None:
        last = self._last_seen.get(sender, 0)
        if msg.msg_id <= last:
            raise MessageError(f"msg_id {msg.msg_id} from {sender} not above {last}")
        self._last_seen[sender] = msg.msg_id
        self.clock = max(self.clock, msg.clock) + 1


def model_digest(m: Regressor) -> str:
    return hashlib.sha256(dumps_model(m).encode()).hexdigest()


class ModelRegistry:
    """Cloud-side versioned store of model artifacts.

    Version 0 is the SOH model and is written once; SOC models take
    versions 1, 2, ... in order.
    """

    def __init__(self, soh_artifact: dict):
        if soh_artifact["version"] != 0:
            raise TwinError("the SOH model must be version 0")
        self._store = {0: soh_artifact}
        self.latest_soc_version = 0

    @property
    def current_soh_model(self) -> dict:
        return self._store[0]

    def add_soc(self, artifact: dict) -> None:
        v = artifact["version"]
        if v != self.latest_soc_version + 1:
            raise TwinError(f"SOC version {v} is not the next version after {self.latest_soc_version}")
        self._store[v] = artifact
        self.latest_soc_version = v

    def get(self, version: int) -> dict:
        return self._store[version]

    def versions(self) -> list[int]:
        return sorted(self._store)


class RetrainTrigger:
    def __init__(self, delta, period, reference, baseline="band"):
        self.delta = delta
        self.period = period
        self.reference = float(reference)
        self.baseline = baseline
        self.uploads_since = 0

    def check(self, soh: float) -> list[str]:
        """Record one upload with estimate ``soh``; return the reasons to retrain."""
        self.uploads_since += 1
        reasons = []
        if self.delta is not None and soh <= self.reference - self.delta:
            reasons.append("soh_drop")
        if self.period is not None and self.uploads_since >= self.period:
            reasons.append("period")
        return reasons

    def reset(self, soh: float, reasons) -> None:
        self.uploads_since = 0
        if "soh_drop" in reasons and self.baseline == "band":
            self.reference -= self.delta * int((self.reference - soh) // self.delta)
        elif self.baseline == "estimate":
            self.reference = soh


class CloudNode(Actor):
    name = "cloud"

    def __init__(self, soh_model: Regressor, soc_model: Regressor, soc_learner: LearnerConfig,
                 rated_capacity: float, delta=1.0, period=None, retrain_window=3,
                 baseline="band", reducer="mean", seed=0):
        super().__init__()
        if soh_model.version != 0:
            raise TwinError("SOH model must carry version 0")
        self.soh_model = soh_model
        self.soh_digest = model_digest(soh_model)
        self.registry = ModelRegistry(serialize_model(soh_model))
        self.registry.add_soc(serialize_model(soc_model))
        self.soc_learner = soc_learner
        self.rated_capacity = rated_capacity
        self.retrain_window = int(retrain_window)
        self.reducer = np.median if reducer == "median" else np.mean
        self.seed = seed
        start = soc_model.trained_at_soh if soc_model.trained_at_soh is not None else 100.0
        self.trigger = RetrainTrigger(delta, period, start, baseline)
        self.uploaded = []  # recent raw cycles, at most retrain_window long
        self.acked_version = soc_model.version

    def estimate_soh(self, cycle) -> float:
        return float(self.reducer(self.soh_model.predict(cycle.features())))

    def handle(self, msg: TwinMessage) -> list[TwinMessage]:
        self.receive(msg, "edge")
        if msg.kind == MEASUREMENT_BATCH:
            return self._on_batch(msg)
        if msg.kind == ACK:
            if msg.payload.get("accepted"):
                self.acked_version = msg.payload["version"]
            return []
        raise MessageError(f"cloud cannot handle {msg.kind}")

    def _on_batch(self, msg) -> list[TwinMessage]:
        cycle = cycle_from_batch(msg.payload)
        self.uploaded.append(cycle)
        del self.uploaded[:-self.retrain_window]
        t0 = time.perf_counter()
        soh = round(self.estimate_soh(cycle), 6)
        ref = self.trigger.reference
        self.emit(ev.SOH_ESTIMATE, {"infer_s": time.perf_counter() - t0},
                  cycle_index=cycle.cycle_index, soh_pct=soh, reference=ref)
        reasons = self.trigger.check(soh)
        update = None
        if reasons:
            self.emit(ev.TRIGGER_FIRED, cycle_index=cycle.cycle_index, soh_pct=soh,
                      reference=ref, reasons=reasons)
            update = self._retrain(soh)
            self.trigger.reset(soh, reasons)
        out = [self.send(SOH_ESTIMATE, {"cycle_index": cycle.cycle_index, "soh_pct": soh,
                                        "update_follows": update is not None})]
        if update is not None:
            out.append(self.send(MODEL_UPDATE, {"artifact": update}))
            self.emit(ev.MODEL_SHIPPED, version=update["version"], msg_id=out[-1].msg_id)
        return out

    def _retrain(self, soh: float) -> dict:
        version = self.registry.latest_soc_version + 1
        window = list(self.uploaded)
        self.emit(ev.RETRAIN_STARTED, version=version,
                  cycles=[c.cycle_index for c in window])
        t0 = time.perf_counter()
        labeled = []
        for c in window:
            try:
                labeled.append(label_cycle(c, self.rated_capacity))
            except LabelingError as e:
                raise TwinError(f"cannot label uploaded cycle {c.cycle_index}: {e}") from e
        X, y = stack_cycles(labeled, "soc")
        cfg = LearnerConfig(self.soc_learner.kind, self.soc_learner.params,
                            self.seed + version, self.soc_learner.scale)
        model = train(cfg, X, y, trained_at_soh=round(soh, 2), version=version)
        artifact = serialize_model(model)
        self.registry.add_soc(artifact)
        self.emit(ev.RETRAIN_DONE, {"train_s": time.perf_counter() - t0}, version=version,
                  n_rows=int(len(y)), trained_at_soh=round(soh, 2))
        return artifact


class EdgeNode(Actor):
    name = "edge"

    def __init__(self, model: Regressor | None = None):
        super().__init__()
        self._model = model
        self._swap_lock = threading.Lock()

    @property
    def model(self) -> Regressor | None:
        return self._model

    @property
    def version(self) -> int | None:
        m = self._model
        return None if m is None else m.version

    def infer(self, features) -> tuple[np.ndarray, int]:
        """Predict with one consistent model; returns (predictions, model version)."""
        m = self._model  # single reference read: a concurrent swap cannot split this call
        if m is None:
            raise TwinError("no SOC model installed on the edge")
        return m.predict(features), m.version

    def step(self, cycle) -> tuple[np.ndarray, TwinMessage]:
        t0 = time.perf_counter()
        pred, version = self.infer(cycle.features())
        self.emit(ev.SOC_INFERENCE, {"infer_s": time.perf_counter() - t0},
                  cycle_index=cycle.cycle_index, model_version=version, n_samples=len(cycle))
        batch = self.send(MEASUREMENT_BATCH, batch_payload(cycle))
        self.emit(ev.UPLOAD, cycle_index=cycle.cycle_index, msg_id=batch.msg_id)
        return pred, batch

    def handle(self, msg: TwinMessage) -> list[TwinMessage]:
        self.receive(msg, "cloud")
        if msg.kind == SOH_ESTIMATE:
            self.last_soh = msg.payload["soh_pct"]
            return []
        if msg.kind == MODEL_UPDATE:
            return [self.apply_model_update(msg)]
        raise MessageError(f"edge cannot handle {msg.kind}")

    def apply_model_update(self, msg: TwinMessage) -> TwinMessage:
        """Install the shipped model if it is valid and newer; always answer with an Ack."""
        current = self.version
        try:
            art = msg.payload["artifact"]
            claimed = int(art["version"])
        except (KeyError, TypeError, ValueError):
            return self._reject(msg, current, None, "malformed ModelUpdate")
        if current is not None and claimed <= current:
            return self._reject(msg, current, claimed,
                                f"stale version {claimed} (installed {current})")
        try:
            model = deserialize_model(art)
        except ArtifactError as e:
            return self._reject(msg, current, claimed, f"corrupt artifact: {e}")
        with self._swap_lock:
            if self.version is not None and model.version <= self.version:
                return self._reject(msg, self.version, claimed, "stale version")
            self._model = model
        self.emit(ev.MODEL_SWAPPED, version=model.version, previous=current,
                  trained_at_soh=model.trained_at_soh)
        return self.send(ACK, {"ack_msg_id": msg.msg_id, "accepted": True,
                               "version": model.version})

    def _reject(self, msg, current, claimed, reason) -> TwinMessage:
        self.emit(ev.MODEL_REJECTED, version=claimed, installed=current, reason=reason)
        return self.send(ACK, {"ack_msg_id": msg.msg_id, "accepted": False,
                               "version": current, "reason": reason})
