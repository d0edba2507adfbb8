"""The vectorized CART grower against a plain recursive oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from battwin.learners.tree import Tree, grow_tree, midpoint


def oracle_tree(X, y, max_depth=None, msl=1, depth=0):
    """Exhaustive recursive CART; returns a nested dict."""
    n = len(y)
    leaf = {"value": float(np.mean(y))}
    if n < 2 * msl or np.all(y == y[0]) or (max_depth is not None and depth >= max_depth):
        return leaf
    best = None
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f].tolist()))
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2
            if thr >= b:
                thr = a
            go = X[:, f] <= thr
            nl = int(go.sum())
            if nl < msl or n - nl < msl:
                continue
            L, R = float(y[go].sum()), float(y[~go].sum())
            score = L * L / nl + R * R / (n - nl)
            if best is None or score > best[0]:
                best = (score, f, thr, go)
    if best is None:
        return leaf
    _, f, thr, go = best
    return {"feature": f, "threshold": thr,
            "left": oracle_tree(X[go], y[go], max_depth, msl, depth + 1),
            "right": oracle_tree(X[~go], y[~go], max_depth, msl, depth + 1)}


def to_nested(t: Tree, k=0):
    if t.feature[k] < 0:
        return {"value": float(t.value[k])}
    return {"feature": int(t.feature[k]), "threshold": float(t.threshold[k]),
            "left": to_nested(t, t.left[k]), "right": to_nested(t, t.right[k])}


@st.composite
def small_problem(draw):
    n = draw(st.integers(1, 50))
    d = draw(st.integers(1, 4))
    # coarse grids force ties in both features and scores
    X = np.array(draw(st.lists(st.lists(st.integers(0, 6), min_size=d, max_size=d),
                               min_size=n, max_size=n)), dtype=float) * 0.5
    # integer targets keep every sum exact, so "equal score" means equal
    y = np.array(draw(st.lists(st.integers(-20, 20), min_size=n, max_size=n)), dtype=float)
    return X, y


@settings(max_examples=300, deadline=None)
@given(small_problem(), st.sampled_from([None, 0, 1, 3]), st.integers(1, 4))
def test_matches_exhaustive_oracle(prob, max_depth, msl):
    X, y = prob
    t = grow_tree(X, y, max_depth=max_depth, min_samples_leaf=msl)
    assert to_nested(t) == oracle_tree(X, y, max_depth, msl)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 50), st.integers(0, 2**32 - 1))
def test_full_depth_interpolates_distinct_inputs(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = rng.normal(size=n)
    t = grow_tree(X, y)
    np.testing.assert_array_equal(t.predict(X), y)


def test_ties_prefer_lowest_feature_then_threshold():
    X = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float)
    y = np.array([0, 0, 5, 5], dtype=float)
    t = grow_tree(X, y)
    assert t.feature[0] == 0 and t.threshold[0] == 1.5
    # two thresholds give the same score; the lower one wins
    X = np.array([[0], [1], [2]], dtype=float)
    y = np.array([0, 1, 2], dtype=float)
    t = grow_tree(X, y, max_depth=1)
    assert t.threshold[0] == 0.5


def test_midpoint_of_adjacent_floats():
    a = 1.0
    b = np.nextafter(a, 2.0)
    assert midpoint(a, b) == a
    assert midpoint(1.0, 2.0) == 1.5


def test_constant_target_is_single_leaf():
    X = np.arange(20.0).reshape(10, 2)
    t = grow_tree(X, np.full(10, 42.0))
    assert t.n_nodes == 1 and t.predict(X)[0] == 42.0


def test_depth_and_leaf_limits():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 2))
    y = rng.normal(size=200)
    t = grow_tree(X, y, max_depth=3)
    assert t.depth() <= 3 and t.n_leaves <= 8
    t = grow_tree(X, y, min_samples_leaf=30)
    counts = np.bincount(t.apply(X), minlength=t.n_nodes)[t.feature < 0]
    assert counts.min() >= 30


def test_dict_round_trip_and_validation():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 2))
    t = grow_tree(X, rng.normal(size=40), max_depth=3)
    back = Tree.from_dict(t.to_dict(), 2)
    np.testing.assert_array_equal(back.predict(X), t.predict(X))
    d = t.to_dict()
    d["left"][0] = 0
    with pytest.raises(ValueError):
        Tree.from_dict(d, 2)
    with pytest.raises(ValueError, match="feature"):
        Tree.from_dict(t.to_dict(), 1)
    d = t.to_dict()
    d["leaf_value"] = d["leaf_value"][:-1]
    with pytest.raises(ValueError):
        Tree.from_dict(d, 2)
