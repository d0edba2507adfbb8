import os
from collections import defaultdict

import numpy as np
import pytest

from battwin.labeling import build_labeled_dataset
from battwin.synth import SynthParams, generate_fleet, generate_lifetime, linear_schedule

RW_DATA = os.environ.get("BATTWIN_RW_DATA")


@pytest.fixture(scope="session")
def clean_lifetime():
    """Noise-free 100 -> 70 lifetime, 31 cycles."""
    return generate_lifetime(SynthParams(sample_period=20.0))


@pytest.fixture(scope="session")
def aging_labeled():
    """Noisy 100 -> 70 lifetime used by the learner-level properties."""
    p = SynthParams(soh_schedule=linear_schedule(100, 70, 31), noise_sigma=0.002,
                    sample_period=20.0, seed=3)
    return build_labeled_dataset(generate_lifetime(p))


@pytest.fixture(scope="session")
def twin_fleet():
    """A replay battery (100 -> 80) plus an older historical battery (100 -> 70)."""
    rep = SynthParams(battery_id="REP", soh_schedule=linear_schedule(100, 80, 41),
                      sample_period=20.0, noise_sigma=0.002, seed=1)
    hist = SynthParams(battery_id="HIST", soh_schedule=linear_schedule(100, 70, 31),
                       sample_period=20.0, noise_sigma=0.002, seed=2)
    return build_labeled_dataset(generate_fleet([rep, hist]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance summary: one line per criterion ----

_criteria = {}
_outcomes = defaultdict(list)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[_criteria[report.nodeid]].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(set(_criteria.values())):
        num, title = key
        outs = _outcomes.get(key, [])
        if not outs:
            status = "NOT RUN"
        elif "failed" in outs:
            status = "FAIL"
        elif all(o == "skipped" for o in outs):
            status = "SKIP"
        else:
            status = "PASS"
        tr.write_line(f"AC{num:02d} {status:7s} {title}")
