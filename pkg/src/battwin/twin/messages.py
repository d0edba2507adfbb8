"""Wire envelope exchanged between the edge and cloud actors.

On the wire each message is one line of JSON::

    {"msg_id": 7, "kind": "SohEstimate", "clock": 31, "payload": {...}}

``msg_id`` increases strictly per sender.  ``clock`` is the sender's
Lamport clock; it lets the two actors' event logs be merged into one
order that does not depend on the transport.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..ingest import Cycle

MEASUREMENT_BATCH = "MeasurementBatch"
SOH_ESTIMATE = "SohEstimate"
MODEL_UPDATE = "ModelUpdate"
ACK = "Ack"
# transport control, not part of the twin protocol proper
SHUTDOWN = "Shutdown"
LOG_DUMP = "LogDump"

KINDS = (MEASUREMENT_BATCH, SOH_ESTIMATE, MODEL_UPDATE, ACK, SHUTDOWN, LOG_DUMP)


class MessageError(ValueError):
    pass


@dataclass(frozen=True)
class TwinMessage:
    msg_id: int
    kind: str
    payload: dict
    clock: int = 0

    def to_json(self) -> str:
        return json.dumps({"msg_id": self.msg_id, "kind": self.kind, "clock": self.clock,
                           "payload": self.payload}, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line) -> "TwinMessage":
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise MessageError(f"undecodable message: {e}") from None
        if not isinstance(d, dict) or d.get("kind") not in KINDS:
            raise MessageError(f"unknown message kind {d.get('kind') if isinstance(d, dict) else d!r}")
        try:
            return cls(int(d["msg_id"]), d["kind"], dict(d["payload"]), int(d.get("clock", 0)))
        except (KeyError, TypeError, ValueError) as e:
            raise MessageError(f"malformed envelope: {e}") from None


def batch_payload(cycle: Cycle) -> dict:
    return {
        "battery_id": cycle.battery_id,
        "cycle_index": cycle.cycle_index,
        "relative_time": cycle.relative_time.tolist(),
        "voltage": cycle.voltage.tolist(),
        "current": cycle.current.tolist(),
        "temperature": cycle.temperature.tolist(),
    }


def cycle_from_batch(payload: dict) -> Cycle:
    try:
        c = Cycle(str(payload["battery_id"]), int(payload["cycle_index"]),
                  payload["relative_time"], payload["voltage"], payload["current"],
                  payload["temperature"])
    except (KeyError, TypeError, ValueError) as e:
        raise MessageError(f"malformed MeasurementBatch: {e}") from None
    if len(c) == 0:
        raise MessageError("MeasurementBatch has no samples")
    if not all(np.all(np.isfinite(a)) for a in (c.relative_time, c.voltage, c.current, c.temperature)):
        raise MessageError("MeasurementBatch contains non-finite values")
    if np.any(np.diff(c.relative_time) <= 0):
        raise MessageError("MeasurementBatch time is not strictly increasing")
    return c
