import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from battwin.ingest import Cycle, Dataset
from battwin.labeling import (LabelingError, build_labeled_dataset, clean_monotonic,
                              compute_soh, coulomb_count, cycle_capacity, read_labeled,
                              read_removed_log, write_labeled, write_removed_log)


def const_cycle(current, duration, dt=1.0, idx=0, bid="B"):
    t = np.arange(0.0, duration + dt / 2, dt)
    return Cycle(bid, idx, t, np.full(len(t), 3.7), np.full(len(t), current), np.full(len(t), 24.0))


def test_half_capacity():
    soc = coulomb_count(const_cycle(1.05, 3600), 2.1)
    assert soc[0] == 100.0
    assert soc[-1] == pytest.approx(50.0, rel=1e-9)


def test_zero_current():
    c = const_cycle(0.0, 100)
    np.testing.assert_array_equal(coulomb_count(c, 2.1), 100.0)
    assert cycle_capacity(c) == 0.0


def test_piecewise_current_against_rectangle_oracle():
    t = np.arange(0.0, 5401.0)
    i = np.where(t < 3600, 0.5, 1.0)
    i[3600] = 0.5  # the step lands between 3600 and 3601 s
    c = Cycle("B", 0, t, np.full(len(t), 3.7), i, np.full(len(t), 24.0))
    # left-rectangle sum at 1 s resolution; the two rules differ only on the
    # step interval, by 0.25 A*s (about 0.0033 % of 2.1 Ah)
    drawn = float(np.sum(i[:-1] * np.diff(t))) / 3600.0
    soc = coulomb_count(c, 2.1)
    assert soc[-1] == pytest.approx(100 * (2.1 - drawn) / 2.1, abs=0.005)
    assert soc[-1] == pytest.approx(100 * (2.1 - 0.5 - 0.5) / 2.1, abs=0.01)


def test_capacity_and_soh_examples():
    assert cycle_capacity(const_cycle(1.05, 7200)) == pytest.approx(2.1, rel=1e-12)
    assert compute_soh(2.1, 2.1) == 100.0
    assert compute_soh(1.68, 2.1) == pytest.approx(80.0)
    assert compute_soh(1.47, 2.1) == pytest.approx(70.0)
    assert compute_soh(2.2, 2.1) > 100  # not clamped


@pytest.mark.parametrize("cap, rated", [(0, 2.1), (-1, 2.1), (2.1, 0)])
def test_soh_rejects_nonpositive(cap, rated):
    with pytest.raises(LabelingError):
        compute_soh(cap, rated)


def test_coulomb_errors():
    with pytest.raises(LabelingError):
        coulomb_count(const_cycle(1.0, 10), 0.0)
    with pytest.raises(LabelingError, match="empty"):
        coulomb_count(Cycle("B", 0, [], [], [], []), 2.1)
    with pytest.raises(LabelingError, match="charge current"):
        coulomb_count(const_cycle(-0.5, 10), 2.1)


def test_small_negative_current_treated_as_zero():
    c = const_cycle(-0.005, 100)
    np.testing.assert_array_equal(coulomb_count(c, 2.1), 100.0)


def test_soc_clamped_at_zero():
    soc = coulomb_count(const_cycle(2.1, 4000), 2.1)
    assert soc.min() == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=2, max_size=60),
       st.lists(st.floats(0.01, 50), min_size=1, max_size=59),
       st.floats(0.1, 10))
def test_soc_non_increasing_and_bounded(currents, dts, cap):
    n = min(len(currents), len(dts) + 1)
    t = np.concatenate(([0.0], np.cumsum(dts[: n - 1])))
    c = Cycle("B", 0, t, np.full(n, 3.7), currents[:n], np.full(n, 24.0))
    soc = coulomb_count(c, cap)
    assert np.all(np.diff(soc) <= 0)
    assert soc[0] <= 100 and soc[-1] >= 0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5), st.floats(100, 20000), st.floats(0.5, 5))
def test_constant_current_closed_form(i, duration, q):
    c = const_cycle(i, duration, dt=duration / 97)
    soc = coulomb_count(c, q)
    expected = np.clip(100 * (q - i * c.relative_time / 3600) / q, 0, 100)
    inside = expected > 1e-3
    np.testing.assert_allclose(soc[inside], expected[inside], rtol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 5), st.floats(10, 10000), st.floats(0.1, 10))
def test_soh_capacity_round_trip(i, duration, rated):
    c = const_cycle(i, duration, dt=duration / 50)
    cap = cycle_capacity(c)
    assert compute_soh(cap, rated) * rated / 100 == pytest.approx(cap, rel=1e-9)


def test_clean_example():
    kept, removed = clean_monotonic([(0, 100), (1, 98), (2, 99), (3, 97)], 0.0)
    assert kept == [0, 1, 3] and removed == [2]


def test_clean_already_monotone():
    pairs = [(k, 100 - k) for k in range(10)]
    assert clean_monotonic(pairs, 0.0) == (list(range(10)), [])


def test_clean_epsilon_tolerates_small_rise():
    kept, removed = clean_monotonic([(0, 100), (1, 98), (2, 98.05), (3, 97)], 0.1)
    assert removed == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(50, 110), min_size=1, max_size=40))
def test_clean_property(sohs):
    pairs = list(enumerate(sohs))
    kept, removed = clean_monotonic(pairs, 0.0)
    assert kept[0] == 0
    assert sorted(kept + removed) == list(range(len(sohs)))
    vals = [sohs[k] for k in kept]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def synthetic_caps(caps):
    cycles = []
    for k, cap in enumerate(caps):
        cycles.append(const_cycle(1.0, cap * 3600, dt=36.0, idx=k))
    return Dataset({"B": cycles})


def test_three_cycle_oracle():
    ld = build_labeled_dataset(synthetic_caps([2.1, 2.0, 1.9]))
    sohs = [round(lc.soh, 2) for lc in ld.batteries["B"]]
    assert sohs == [100.0, 95.24, 90.48]
    assert ld.removed_cycles == []
    for lc in ld.batteries["B"]:
        assert lc.soh == pytest.approx(100 * lc.available_capacity / 2.1)


def test_spike_removed():
    ld = build_labeled_dataset(synthetic_caps([2.1, 2.0, 2.05, 1.9]))
    (r,) = ld.removed_cycles
    assert (r.battery_id, r.cycle_index, r.reason) == ("B", 2, "soh_monotonicity")
    assert [lc.cycle_index for lc in ld.batteries["B"]] == [0, 1, 3]


def test_large_epsilon_removes_nothing():
    ld = build_labeled_dataset(synthetic_caps([2.1, 2.0, 2.05, 1.9]), epsilon=200)
    assert ld.removed_cycles == []


def test_empty_battery_raises():
    with pytest.raises(LabelingError):
        build_labeled_dataset(Dataset({"B": []}))


def test_labeled_persistence_round_trip(tmp_path, aging_labeled):
    p, r = tmp_path / "l.csv", tmp_path / "r.json"
    ld = build_labeled_dataset(synthetic_caps([2.1, 2.0, 2.05, 1.9]))
    write_labeled(ld, p)
    write_removed_log(ld, r)
    back = read_labeled(p, 2.1, r)
    assert back.batteries["B"] == ld.batteries["B"]
    assert back.removed_cycles == ld.removed_cycles
    assert json.loads(r.read_text()) == [
        {"battery_id": "B", "cycle_index": 2, "reason": "soh_monotonicity"}]
    assert read_removed_log(r) == ld.removed_cycles


def test_arrays_feature_selection(aging_labeled):
    X, y = aging_labeled.arrays("soh")
    X3, y3 = aging_labeled.arrays("soh", (0, 1, 2))
    assert X.shape[1] == 4 and X3.shape[1] == 3
    np.testing.assert_array_equal(X[:, :3], X3)
    np.testing.assert_array_equal(y, y3)
    with pytest.raises(ValueError):
        aging_labeled.arrays("capacity")
