"""Bootstrapping and replaying the twin over a transport.

Two transports carry the same newline-delimited JSON messages:

* ``inproc`` - the cloud actor lives in this process; every message is
  still encoded and decoded so both paths exercise the wire format.
* ``socket`` - the cloud actor runs in a child process behind a TCP
  socket on localhost.
"""

from __future__ import annotations

import os
import pickle
import socket
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..labeling import LabeledDataset, stack_cycles
from ..learners import EvalReport, LearnerConfig, deserialize_model, error_report, serialize_model
from ..learners import train
from .actors import CloudNode, EdgeNode, TwinError, model_digest
from .config import TwinConfig
from .log import TwinEvent, TwinRunLog
from .messages import (LOG_DUMP, MEASUREMENT_BATCH, MODEL_UPDATE, SHUTDOWN, SOH_ESTIMATE,
                       TwinMessage)


def _with_seed(cfg: LearnerConfig, seed: int) -> LearnerConfig:
    return LearnerConfig(cfg.kind, cfg.params, seed, cfg.scale)


def bootstrap(historical: LabeledDataset, nominal, cfg: TwinConfig,
              rated_capacity: float | None = None) -> tuple[CloudNode, EdgeNode]:
    """Train the frozen SOH model (v0) and the initial SOC model (v1).

    The SOC model reaches the edge through the artifact encoding, as any
    later update would.
    """
    nominal = list(nominal)
    if not nominal:
        raise TwinError("bootstrap needs at least one nominal cycle")
    hist = list(historical.cycles())
    if not hist:
        raise TwinError("bootstrap needs historical aged data")
    if len({round(lc.soh, 6) for lc in hist}) < 2:
        raise TwinError("historical data must span more than one SOH level")
    X, y = stack_cycles(hist, "soh")
    soh_model = train(_with_seed(cfg.soh_learner, cfg.seed), X, y, version=0)
    Xn, yn = stack_cycles(nominal, "soc")
    start_soh = round(float(np.mean([lc.soh for lc in nominal])), 2)
    soc_model = train(_with_seed(cfg.soc_learner, cfg.seed + 1), Xn, yn,
                      trained_at_soh=start_soh, version=1)
    cloud = CloudNode(soh_model, soc_model, cfg.soc_learner,
                      rated_capacity or historical.rated_capacity,
                      delta=cfg.soh_trigger_delta, period=cfg.period_trigger,
                      retrain_window=cfg.retrain_window, baseline=cfg.trigger_baseline,
                      reducer=cfg.soh_reducer, seed=cfg.seed)
    edge = EdgeNode(deserialize_model(serialize_model(soc_model)))
    return cloud, edge


class InProcessLink:
    def __init__(self, cloud: CloudNode):
        self.cloud = cloud

    def request(self, msg: TwinMessage) -> list[TwinMessage]:
        replies = self.cloud.handle(TwinMessage.from_json(msg.to_json()))
        return [TwinMessage.from_json(r.to_json()) for r in replies]

    def close(self) -> tuple[list[TwinEvent], str]:
        return list(self.cloud.events), model_digest(self.cloud.soh_model)


def serve(cloud: CloudNode, srv: socket.socket) -> None:
    """Accept one edge connection on ``srv`` and serve it until Shutdown."""
    sock, _ = srv.accept()
    srv.close()
    with sock, sock.makefile("r", encoding="utf-8") as rf, \
            sock.makefile("w", encoding="utf-8", newline="\n") as wf:
        for line in rf:
            msg = TwinMessage.from_json(line)
            if msg.kind == SHUTDOWN:
                dump = {"events": [e.to_dict(include_timing=True) for e in cloud.events],
                        "soh_digest": model_digest(cloud.soh_model)}
                wf.write(TwinMessage(0, LOG_DUMP, dump).to_json() + "\n")
                wf.flush()
                return
            try:
                replies = cloud.handle(msg)
            except Exception as e:  # report and stop; the edge raises on its side
                err = {"error": f"{type(e).__name__}: {e}"}
                wf.write(TwinMessage(0, LOG_DUMP, err).to_json() + "\n")
                wf.flush()
                return
            for r in replies:
                wf.write(r.to_json() + "\n")
            wf.flush()


class SocketLink:
    """Runs the cloud in a child interpreter; the actor state travels by pickle on stdin."""

    def __init__(self, cloud: CloudNode, timeout: float = 300.0):
        src = str(Path(__file__).resolve().parents[2])
        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(filter(None, [src, env.get("PYTHONPATH")]))
        self.proc = subprocess.Popen([sys.executable, "-m", "battwin.twin.server"],
                                     stdin=subprocess.PIPE, stdout=subprocess.PIPE, env=env)
        try:
            self.proc.stdin.write(pickle.dumps(cloud))
            self.proc.stdin.close()
            port = self.proc.stdout.readline().strip()
            if not port:
                raise TwinError("cloud process did not start")
            self.sock = socket.create_connection(("127.0.0.1", int(port)), timeout=timeout)
        except BaseException:
            self.proc.kill()
            self.proc.wait()
            raise
        self.rf = self.sock.makefile("r", encoding="utf-8")
        self.wf = self.sock.makefile("w", encoding="utf-8", newline="\n")

    def _read(self) -> TwinMessage:
        line = self.rf.readline()
        if not line:
            raise TwinError("cloud closed the connection")
        msg = TwinMessage.from_json(line)
        if msg.kind == LOG_DUMP and "error" in msg.payload:
            raise TwinError(f"cloud failed: {msg.payload['error']}")
        return msg

    def request(self, msg: TwinMessage) -> list[TwinMessage]:
        self.wf.write(msg.to_json() + "\n")
        self.wf.flush()
        if msg.kind != MEASUREMENT_BATCH:
            return []
        first = self._read()
        if first.kind != SOH_ESTIMATE:
            raise TwinError(f"expected SohEstimate, got {first.kind}")
        out = [first]
        if first.payload.get("update_follows"):
            upd = self._read()
            if upd.kind != MODEL_UPDATE:
                raise TwinError(f"expected ModelUpdate, got {upd.kind}")
            out.append(upd)
        return out

    def close(self) -> tuple[list[TwinEvent], str]:
        try:
            self.wf.write(TwinMessage(0, SHUTDOWN, {}).to_json() + "\n")
            self.wf.flush()
            dump = self._read()
            if dump.kind != LOG_DUMP:
                raise TwinError(f"expected LogDump, got {dump.kind}")
            events = [TwinEvent.from_dict(d) for d in dump.payload["events"]]
            return events, dump.payload["soh_digest"]
        finally:
            for f in (self.rf, self.wf, self.sock):
                try:
                    f.close()
                except OSError:
                    pass
            try:
                self.proc.wait(10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
            self.proc.stdout.close()


def make_link(transport: str, cloud: CloudNode):
    if transport == "inproc":
        return InProcessLink(cloud)
    if transport == "socket":
        return SocketLink(cloud)
    raise ValueError(f"unknown transport {transport!r}")


@dataclass(frozen=True)
class CycleReport:
    cycle_index: int
    soh_true: float
    soh_estimate: float
    model_version: int
    report: EvalReport

    def to_dict(self) -> dict:
        return {"cycle_index": self.cycle_index, "soh_true": self.soh_true,
                "soh_estimate": self.soh_estimate, "model_version": self.model_version,
                **self.report.to_dict()}


@dataclass
class TwinRunResult:
    log: TwinRunLog
    cycles: list[CycleReport]
    soh_digest_start: str
    soh_digest_end: str
    start_reference: float
    config: TwinConfig
    predictions: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def n_retrains(self) -> int:
        return len(self.log.of_kind("retrain_done"))

    @property
    def n_model_updates(self) -> int:
        return len(self.log.of_kind("model_shipped"))

    @property
    def mean_soc_mae(self) -> float:
        return float(np.mean([c.report.mae_pct for c in self.cycles]))

    def summary(self) -> dict:
        return {
            "n_cycles": len(self.cycles),
            "n_retrains": self.n_retrains,
            "n_model_updates": self.n_model_updates,
            "mean_soc_mae_pct": self.mean_soc_mae,
            "mean_soc_rmse_pct": float(np.mean([c.report.rmse_pct for c in self.cycles])),
            "soh_model_unchanged": self.soh_digest_start == self.soh_digest_end,
            "soh_digest": self.soh_digest_start,
            "final_soc_version": self.cycles[-1].model_version if self.cycles else None,
        }


def split_for_replay(dataset: LabeledDataset, cfg: TwinConfig, historical=None):
    """Pick the replayed battery, the historical data and the nominal cycles."""
    if not dataset.batteries:
        raise TwinError("dataset has no batteries")
    battery = cfg.battery or next(iter(dataset.batteries))
    if battery not in dataset.batteries:
        raise TwinError(f"battery {battery!r} not in dataset")
    if historical is None:
        ids = cfg.historical_batteries or [b for b in dataset.batteries if b != battery]
        if not ids:
            raise TwinError("no historical battery: supply one or a second battery in the dataset")
        historical = dataset.select(ids)
    first = next(iter(historical.batteries.values()))
    nominal = first[: cfg.nominal_cycles]
    return battery, historical, nominal


def run_twin(dataset: LabeledDataset, cfg: TwinConfig = TwinConfig(), historical=None,
             transport: str = "inproc") -> TwinRunResult:
    """Replay one battery's cycles through the edge/cloud loop.

    Each cycle: the edge predicts SOC with its installed model and uploads
    the raw samples; the cloud estimates SOH, maybe retrains and ships a
    model; the edge installs it before the next cycle.  Predictions are
    scored against the Coulomb-counted SOC labels, which the edge never sees.
    """
    battery, historical, nominal = split_for_replay(dataset, cfg, historical)
    cloud, edge = bootstrap(historical, nominal, cfg, dataset.rated_capacity)
    start_ref = cloud.trigger.reference
    digest0 = cloud.soh_digest
    link = make_link(transport, cloud)
    reports, preds = [], {}
    try:
        for lc in dataset.batteries[battery]:
            pred, batch = edge.step(lc.cycle)
            version = edge.version
            soh_est = float("nan")
            for reply in link.request(batch):
                if reply.kind == SOH_ESTIMATE:
                    soh_est = reply.payload["soh_pct"]
                for out in edge.handle(reply):
                    link.request(out)
            preds[lc.cycle_index] = pred
            reports.append(CycleReport(lc.cycle_index, lc.soh, soh_est, version,
                                       error_report(pred, lc.soc)))
    finally:
        cloud_events, digest1 = link.close()
    return TwinRunResult(TwinRunLog.merge(edge.events, cloud_events), reports, digest0, digest1,
                         start_ref, cfg, preds)
