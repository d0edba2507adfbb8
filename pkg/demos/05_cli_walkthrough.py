"""
Command-line walkthrough
========================

The ``battwin`` command chains the same steps through files: synthesize
traces, ingest and validate them, label, train, replay through the twin,
measure staleness and tabulate.  Every step writes a ``manifest.json``
with input and output hashes next to its outputs.
"""

import tempfile
from pathlib import Path

from battwin.cli import main

root = Path(tempfile.mkdtemp(prefix="battwin-demo-"))


def step(*argv):
    argv = [str(a) for a in argv]
    print(f"\n$ battwin {' '.join(argv)}")
    code = main(argv)
    if code:
        raise SystemExit(code)


step("synth", "--out", root / "synth", "--battery-id", "REP", "--battery-id", "HIST",
     "--soh-stop", 80, "--cycles", 21, "--noise", 0.002, "--sample-period", 30)
step("ingest", "--out", root / "ingest", "--input", root / "synth/traces.csv")
step("label", "--out", root / "label", "--dataset", root / "ingest/dataset.csv")
labeled = root / "label/labeled.csv"
step("train", "--out", root / "train", "--labeled", labeled, "--target", "soh",
     "--params", "n_trees=20,max_depth=null,feature_subsample=all", "--kfold", 5)
step("simulate", "--out", root / "sim", "--labeled", labeled, "--battery", "REP")
step("evaluate-staleness", "--out", root / "stale", "--labeled", labeled, "--battery", "REP",
     "--train-bands", "100,90,80", "--eval-band", 80)
step("report", "--out", root / "report", root / "train", root / "sim", root / "stale")
print(f"\noutputs under {root}")
