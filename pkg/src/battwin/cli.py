"""Command-line entry point: ``battwin <command> ...``.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
Primary outputs are deterministic for fixed inputs and seed; wall-clock
timings live only in the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .ingest import TraceFormatError, parse_traces, validate_dataset, write_dataset
from .labeling import (LabelingError, build_labeled_dataset, read_labeled, write_labeled,
                       write_removed_log)
from .learners import NO_TIME, ArtifactError, LearnerConfig, dumps_model, error_report, kfold_cv
from .learners import train as fit
from .synth import SynthParams, generate_fleet, linear_schedule
from .twin import TwinConfig, TwinError, check_invariants, evaluate_staleness, run_twin
from .twin.messages import MessageError

log = logging.getLogger("battwin")

DEFAULT_RATED_CAPACITY = 2.1


class CliError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: dict = field(default_factory=dict)   # path -> sha256
    outputs: dict = field(default_factory=dict)  # name -> {path, sha256}
    timings: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, name, path) -> None:
        self.outputs[name] = {"path": Path(path).name, "sha256": sha256_file(path)}

    def normalized(self) -> dict:
        """Manifest without wall-clock data, for reproducibility comparison."""
        d = asdict(self)
        d.pop("timings")
        return d

    def write(self, out_dir: Path) -> Path:
        p = out_dir / "manifest.json"
        p.write_text(_dump(asdict(self)))
        return p

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_json(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(d, dict):
        raise CliError(f"{path}: expected a JSON object")
    return d


def parse_params(text: str | None) -> dict:
    """``"n_trees=10,max_depth=4"`` or a JSON object -> dict."""
    if not text:
        return {}
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise CliError(f"bad --params item {item!r}; expected key=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v.strip()
    return out


def _learner_config(args, default_scale: bool) -> LearnerConfig:
    base = _load_json(args.config) if args.config else {}
    kind = args.learner or base.get("kind", "rf")
    params = {**base.get("params", {}), **parse_params(args.params)}
    seed = args.seed if args.seed is not None else int(base.get("seed", 0))
    scale = base.get("scale", default_scale)
    return LearnerConfig(kind, params, seed, scale)


def _read_labeled(args):
    path = Path(args.labeled)
    ld = read_labeled(path, args.rated_capacity)
    return ld, path


def cmd_synth(args) -> int:
    out = _out_dir(args)
    sched = linear_schedule(args.soh_start, args.soh_stop, args.cycles)
    batteries = args.battery_id or ["SYN"]
    params = [SynthParams(soh_schedule=sched, noise_sigma=args.noise, seed=(args.seed or 0) + k,
                          battery_id=b, sample_period=args.sample_period)
              for k, b in enumerate(batteries)]
    d = generate_fleet(params)
    path = out / "traces.csv"
    write_dataset(d, path)
    m = RunManifest("synth", {"batteries": batteries, "soh_start": args.soh_start,
                              "soh_stop": args.soh_stop, "cycles": args.cycles,
                              "noise": args.noise, "sample_period": args.sample_period},
                    args.seed)
    m.add_output("traces", path)
    m.write(out)
    print(f"synthesized {len(d.batteries)} batteries, {d.n_cycles} cycles -> {path}")
    return 0


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    t0 = time.perf_counter()
    d = parse_traces(args.input, args.rated_capacity, args.rated_voltage)
    if args.batteries:
        wanted = [b.strip() for b in args.batteries.split(",") if b.strip()]
        try:
            d = d.select(wanted)
        except KeyError as e:
            raise CliError(f"{args.input}: {e.args[0]}") from None
    for v in validate_dataset(d):
        print(f"warning: {args.input}: {v}", file=sys.stderr)
    path = out / "dataset.csv"
    write_dataset(d, path)
    m = RunManifest("ingest", {"rated_capacity": args.rated_capacity,
                               "rated_voltage": args.rated_voltage,
                               "batteries": sorted(d.batteries)}, args.seed)
    m.add_input(args.input)
    m.add_output("dataset", path)
    m.timings["total_s"] = time.perf_counter() - t0
    m.write(out)
    for bid, cycles in d.batteries.items():
        print(f"{bid}: {len(cycles)} cycles")
    print(f"ingested {len(d.batteries)} batteries, {d.n_cycles} cycles")
    return 0


def cmd_label(args) -> int:
    out = _out_dir(args)
    t0 = time.perf_counter()
    d = parse_traces(args.dataset, args.rated_capacity)
    ld = build_labeled_dataset(d, args.epsilon)
    lab, rem = out / "labeled.csv", out / "removed.json"
    write_labeled(ld, lab)
    write_removed_log(ld, rem)
    m = RunManifest("label", {"epsilon": args.epsilon, "rated_capacity": args.rated_capacity},
                    args.seed)
    m.add_input(args.dataset)
    m.add_output("labeled", lab)
    m.add_output("removed", rem)
    m.timings["total_s"] = time.perf_counter() - t0
    m.write(out)
    for bid, cycles in ld.batteries.items():
        sohs = [lc.soh for lc in cycles]
        print(f"{bid}: {len(cycles)} cycles kept, SOH {max(sohs):.2f}% -> {min(sohs):.2f}%")
    print(f"removed {len(ld.removed_cycles)} cycles")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    ld, path = _read_labeled(args)
    cfg = _learner_config(args, default_scale=args.target == "soc")
    features = list(NO_TIME) if args.no_time else None
    X, y = ld.arrays(args.target, features)
    m = RunManifest("train", {"target": args.target, "learner": cfg.to_dict(),
                              "kfold": args.kfold, "no_time": args.no_time}, cfg.seed)
    m.add_input(path)
    report = {"target": args.target, "learner": cfg.to_dict(), "n_rows": int(len(y)),
              "features": "no_time" if args.no_time else "all"}
    if args.kfold:
        cv = kfold_cv(X, y, args.kfold, cfg, seed=cfg.seed)
        report["cv_folds"] = [r.metrics() for r in cv.folds]
        report["cv_aggregate"] = cv.aggregate.metrics()
        m.timings["cv_train_s_mean"] = cv.aggregate.train_time_s
        m.timings["cv_infer_s_mean"] = cv.aggregate.infer_time_s
        agg = cv.aggregate
    t0 = time.perf_counter()
    model = fit(cfg, X, y)
    m.timings["train_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    in_sample = error_report(model.predict(X), y)
    m.timings["infer_s"] = time.perf_counter() - t0
    report["in_sample"] = in_sample.metrics()
    mp, rp = out / "model.json", out / "report.json"
    mp.write_text(dumps_model(model) + "\n")
    rp.write_text(_dump(report))
    m.add_output("model", mp)
    m.add_output("report", rp)
    m.write(out)
    shown = agg if args.kfold else in_sample
    label = f"{args.kfold}-fold CV" if args.kfold else "in-sample"
    print(f"{cfg.kind} {args.target} ({label}): RMSE {shown.rmse_pct:.3f}%  MSE "
          f"{shown.mse_pct2:.3f}  MAE {shown.mae_pct:.3f}%  MaxErr {shown.max_err_pct:.3f}%")
    return 0


def _twin_config(args) -> TwinConfig:
    base = _load_json(args.config) if args.config else {}
    if args.delta is not None:
        base["soh_trigger_delta"] = None if args.delta <= 0 else args.delta
    if args.period is not None:
        base["period_trigger"] = args.period or None
    if args.seed is not None:
        base["seed"] = args.seed
    if args.battery is not None:
        base["battery"] = args.battery
    try:
        return TwinConfig.from_dict(base)
    except (TypeError, ValueError) as e:
        raise CliError(f"{args.config or 'config'}: {e}") from None


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    ld, path = _read_labeled(args)
    cfg = _twin_config(args)
    t0 = time.perf_counter()
    res = run_twin(ld, cfg, transport=args.transport)
    elapsed = time.perf_counter() - t0
    problems = check_invariants(res.log, cfg.soh_trigger_delta, cfg.trigger_baseline,
                                res.start_reference)
    if res.soh_digest_start != res.soh_digest_end:
        problems.append("SOH model changed during the run")
    lp, cp, sp = out / "run_log.jsonl", out / "cycles.json", out / "summary.json"
    res.log.write(lp)
    cp.write_text(_dump([{k: v for k, v in c.to_dict().items() if not k.endswith("time_s")}
                         for c in res.cycles]))
    # transport is recorded in the manifest only, so outputs compare across transports
    summary = {**res.summary(), "invariant_violations": problems}
    sp.write_text(_dump(summary))
    m = RunManifest("simulate", {**cfg.to_dict(), "transport": args.transport}, cfg.seed)
    m.add_input(path)
    for name, p in (("run_log", lp), ("cycles", cp), ("summary", sp)):
        m.add_output(name, p)
    m.timings["total_s"] = elapsed
    m.timings["events"] = res.log.to_jsonl(include_timing=True).count("\n")
    m.write(out)
    print(f"{summary['n_cycles']} cycles, {summary['n_retrains']} retrains, "
          f"mean SOC MAE {summary['mean_soc_mae_pct']:.3f}%, "
          f"SOH model unchanged: {summary['soh_model_unchanged']}")
    if problems:
        for p in problems:
            print(f"invariant violated: {p}", file=sys.stderr)
        return 1
    return 0


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_staleness(args) -> int:
    out = _out_dir(args)
    ld, path = _read_labeled(args)
    cfg = _learner_config(args, default_scale=True)
    bands = _floats(args.train_bands)
    res = evaluate_staleness(ld, bands, args.eval_band, cfg, battery=args.battery,
                             cycles_per_band=args.cycles_per_band, max_gap=args.max_gap)
    tp, cp = out / "staleness.json", out / "curves.csv"
    table = res.to_dict()
    for row in table["rows"]:
        row.pop("train_time_s")
        row.pop("infer_time_s")
    tp.write_text(_dump(table))
    res.write_curves(cp)
    m = RunManifest("evaluate-staleness", {"train_bands": bands, "eval_band": args.eval_band,
                                           "learner": cfg.to_dict(), "battery": res.battery_id},
                    cfg.seed)
    m.add_input(path)
    m.add_output("staleness", tp)
    m.add_output("curves", cp)
    m.timings["train_s"] = [r.report.train_time_s for r in res.rows]
    m.write(out)
    print(f"eval cycle {res.eval_cycle_index} (SOH {res.eval_soh:.2f}%)")
    print("band     RMSE%    MAE%  MaxErr%")
    for r in res.rows:
        print(f"{r.train_band:5g}  {r.report.rmse_pct:7.3f} {r.report.mae_pct:7.3f} "
              f"{r.report.max_err_pct:8.3f}")
    return 0


def _table(rows, cols) -> str:
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        lines.append("| " + " | ".join(f"{r[c]:.3f}" if isinstance(r[c], float) else str(r[c])
                                       for c in cols) + " |")
    return "\n".join(lines)


def cmd_report(args) -> int:
    """Collect the reports of earlier runs into one JSON document and Markdown tables."""
    out = _out_dir(args)
    train_rows, stale, sims = [], [], []
    for run in args.runs:
        run = Path(run)
        mpath = run / "manifest.json"
        if not mpath.exists():
            raise CliError(f"{mpath}: no manifest (not a battwin output directory)")
        man = RunManifest.read(mpath)
        for name, o in man.outputs.items():
            p = run / o["path"]
            if sha256_file(p) != o["sha256"]:
                raise CliError(f"{p}: contents do not match its manifest hash")
        if man.command == "train":
            r = _load_json(run / "report.json")
            metrics = r.get("cv_aggregate", r["in_sample"])
            train_rows.append({"run": run.name, "target": r["target"],
                               "learner": r["learner"]["kind"], "features": r["features"],
                               **{k: metrics[k] for k in ("rmse_pct", "mse_pct2", "mae_pct",
                                                          "max_err_pct")}})
        elif man.command == "evaluate-staleness":
            s = _load_json(run / "staleness.json")
            for row in s["rows"]:
                stale.append({"run": run.name, "train_band": row["train_band"],
                              "eval_soh": s["eval_soh"], "rmse_pct": row["rmse_pct"],
                              "mae_pct": row["mae_pct"], "max_err_pct": row["max_err_pct"]})
        elif man.command == "simulate":
            s = _load_json(run / "summary.json")
            sims.append({"run": run.name, "n_cycles": s["n_cycles"],
                         "n_retrains": s["n_retrains"], "mean_soc_mae_pct": s["mean_soc_mae_pct"],
                         "soh_model_unchanged": s["soh_model_unchanged"]})
    doc = {"train": train_rows, "staleness": stale, "simulate": sims}
    p = out / "report.json"
    p.write_text(_dump(doc))
    m = RunManifest("report", {"runs": [str(r) for r in args.runs]}, args.seed)
    for r in args.runs:
        m.add_input(Path(r) / "manifest.json")
    m.add_output("report", p)
    m.write(out)
    if train_rows:
        print(_table(train_rows, ["run", "target", "learner", "features", "rmse_pct", "mse_pct2",
                                  "mae_pct", "max_err_pct"]) + "\n")
    if stale:
        print(_table(stale, ["run", "train_band", "eval_soh", "rmse_pct", "mae_pct",
                             "max_err_pct"]) + "\n")
    if sims:
        print(_table(sims, ["run", "n_cycles", "n_retrains", "mean_soc_mae_pct",
                            "soh_model_unchanged"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--config", default=None, help="JSON config file; flags override it")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="battwin", description="EV battery SOC/SOH digital twin")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic aging trace CSV")
    s.add_argument("--soh-start", type=float, default=100.0)
    s.add_argument("--soh-stop", type=float, default=70.0)
    s.add_argument("--cycles", type=int, default=31)
    s.add_argument("--noise", type=float, default=0.0, help="voltage noise sigma [V]")
    s.add_argument("--sample-period", type=float, default=10.0)
    s.add_argument("--battery-id", action="append", help="repeat for several batteries")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", parents=[common], help="parse and validate a trace CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--rated-capacity", type=float, default=DEFAULT_RATED_CAPACITY)
    s.add_argument("--rated-voltage", type=float, default=4.2)
    s.add_argument("--batteries", default=None, help="comma-separated battery ids to keep")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("label", parents=[common], help="Coulomb-count SOC/SOH and clean SOH")
    s.add_argument("--dataset", required=True)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--rated-capacity", type=float, default=DEFAULT_RATED_CAPACITY)
    s.set_defaults(func=cmd_label)

    def learner_flags(s):
        s.add_argument("--labeled", required=True)
        s.add_argument("--learner", default=None, help="rf | gbt | mlp (default rf)")
        s.add_argument("--params", default=None, help="key=value,... or a JSON object")
        s.add_argument("--rated-capacity", type=float, default=DEFAULT_RATED_CAPACITY)

    s = sub.add_parser("train", parents=[common], help="train a SOC or SOH model")
    learner_flags(s)
    s.add_argument("--target", choices=("soc", "soh"), default="soc")
    s.add_argument("--kfold", type=int, default=0)
    s.add_argument("--no-time", action="store_true", help="drop relative_time from the features")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", parents=[common], help="replay a battery through the twin")
    s.add_argument("--labeled", required=True)
    s.add_argument("--transport", choices=("inproc", "socket"), default="inproc")
    s.add_argument("--delta", type=float, default=None, help="SOH trigger delta; <= 0 disables")
    s.add_argument("--period", type=int, default=None, help="period trigger; 0 disables")
    s.add_argument("--battery", default=None)
    s.add_argument("--rated-capacity", type=float, default=DEFAULT_RATED_CAPACITY)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate-staleness", parents=[common],
                       help="SOC error of models trained at other SOH bands")
    learner_flags(s)
    s.add_argument("--train-bands", default="100,95,85,75")
    s.add_argument("--eval-band", type=float, default=75.0)
    s.add_argument("--battery", default=None)
    s.add_argument("--cycles-per-band", type=int, default=1)
    s.add_argument("--max-gap", type=float, default=2.5)
    s.set_defaults(func=cmd_staleness)

    s = sub.add_parser("report", parents=[common], help="tabulate earlier run directories")
    s.add_argument("runs", nargs="+", help="output directories of earlier commands")
    s.set_defaults(func=cmd_report)
    return p


ERRORS = (CliError, TraceFormatError, LabelingError, TwinError, ArtifactError, MessageError,
          ValueError, OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ERRORS as e:
        print(f"battwin {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
