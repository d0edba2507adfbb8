import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from battwin.learners import (ArtifactError, LearnerConfig, MinMaxScaler, NotFittedError,
                              deserialize_model, dumps_model, fit_scaler, serialize_model,
                              train, train_gradient_boosted, train_mlp, train_random_forest)
from battwin.learners.boosting import bin_features, fit_boosting, quantile_edges
from battwin.learners.forest import Forest, fit_forest, resolve_max_features
from battwin.learners.mlp import TrainingDivergedError, fit_mlp, forward, init_layers, loss_and_grads
from battwin.learners.tree import Tree, grow_tree


def toy(n=300, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, d))
    y = 10 * X[:, 0] + 5 * np.sin(3 * X[:, 1]) + rng.normal(0, 0.1, n)
    return X, y


# ---- scaler ----

def test_scaler_examples():
    s = fit_scaler([[3.0], [4.2]])
    assert s.min_[0] == 3.0 and s.max_[0] == 4.2
    assert s.transform([[3.6]])[0, 0] == pytest.approx(0.5)
    assert s.transform([[3.0]])[0, 0] == 0.0 and s.transform([[4.2]])[0, 0] == 1.0
    assert s.transform([[4.2 + 0.2 * 1.2]])[0, 0] == pytest.approx(1.2)


def test_scaler_single_row_and_constant():
    s = fit_scaler([[1.0, 2.0]])
    np.testing.assert_array_equal(s.min_, s.max_)
    np.testing.assert_array_equal(s.transform([[5.0, -3.0]]), [[0.0, 0.0]])


def test_scaler_errors():
    with pytest.raises(NotFittedError):
        MinMaxScaler().transform([[1.0]])
    with pytest.raises(ValueError):
        fit_scaler(np.empty((0, 2)))
    with pytest.raises(ValueError):
        MinMaxScaler([1.0], [0.0])


# ---- random forest ----

def test_constant_target():
    X, _ = toy(60)
    m = train_random_forest(X, np.full(60, 42.0), {"n_trees": 5})
    np.testing.assert_allclose(m.predict(toy(20, seed=9)[0]), 42.0, atol=1e-9)


def test_single_tree_without_bootstrap_is_cart():
    X, y = toy(50)
    f = fit_forest(X, y, {"n_trees": 1, "max_depth": None, "min_samples_leaf": 1,
                          "feature_subsample": "all", "bootstrap": False}, seed=3)
    t = grow_tree(X, y)
    (ft,) = f.trees
    for a in ("feature", "threshold", "left", "right", "value"):
        np.testing.assert_array_equal(getattr(ft, a), getattr(t, a))
    np.testing.assert_array_equal(f.predict(X), y)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_forest_is_mean_of_trees(seed, n_trees):
    X, y = toy(80, seed=seed)
    f = fit_forest(X, y, {"n_trees": n_trees, "max_depth": 6}, seed=seed)
    Xq = toy(30, seed=seed + 1)[0]
    each = f.predict_each(Xq)
    assert each.shape == (n_trees, 30)
    # same summation order as the oracle: sequential over trees
    acc = np.zeros(30)
    for row in each:
        acc += row
    np.testing.assert_array_equal(f.predict(Xq), acc / n_trees)
    np.testing.assert_allclose(f.predict(Xq), each.mean(axis=0), rtol=1e-12)


def test_identical_stumps():
    stump = Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                 np.array([10.0]))
    assert Forest((stump,) * 4).predict(np.zeros((3, 2))).tolist() == [10.0] * 3


def test_forest_deterministic_and_seed_sensitive():
    X, y = toy(200)
    a = dumps_model(train_random_forest(X, y, {"n_trees": 5}, seed=1))
    b = dumps_model(train_random_forest(X, y, {"n_trees": 5}, seed=1))
    c = dumps_model(train_random_forest(X, y, {"n_trees": 5}, seed=2))
    assert a == b and a != c


def test_forest_fits_signal():
    X, y = toy(600)
    Xt, yt = toy(300, seed=1)
    m = train_random_forest(X, y, {"n_trees": 30})
    assert np.sqrt(np.mean((m.predict(Xt) - yt) ** 2)) < 0.25 * np.std(yt)


@pytest.mark.parametrize("spec, d, k", [("sqrt", 4, 2), ("all", 4, 4), (None, 3, 3), (0.5, 4, 2),
                                        (3, 4, 3)])
def test_resolve_max_features(spec, d, k):
    assert resolve_max_features(spec, d) == k


@pytest.mark.parametrize("params", [{"n_trees": 0}, {"min_samples_leaf": 0}, {"max_depth": -1},
                                    {"feature_subsample": "log"}, {"feature_subsample": 9}])
def test_forest_rejects_bad_params(params):
    X, y = toy(20)
    with pytest.raises(ValueError):
        train_random_forest(X, y, params)


# ---- gradient boosting ----

def test_zero_iterations_predict_mean():
    X, y = toy(50)
    m = train_gradient_boosted(X, y, {"n_iterations": 0})
    np.testing.assert_allclose(m.predict(toy(10, seed=4)[0]), y.mean())


@pytest.mark.parametrize("lr", [0.1, 0.5, 1.0])
def test_training_mse_non_increasing(lr):
    X, y = toy(200)
    b = fit_boosting(X, y, {"n_iterations": 100, "learning_rate": lr, "min_samples_leaf": 5}, 0)
    mse = np.array(b.train_mse)
    assert len(mse) == 101
    assert np.all(np.diff(mse) <= 1e-12 * mse[0])
    assert mse[-1] < 0.1 * mse[0]
    # the recorded loss is the loss of the model actually returned
    assert np.mean((b.predict(X) - y) ** 2) == pytest.approx(mse[-1], rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=200), st.integers(2, 16))
def test_bins_agree_with_thresholds(vals, n_bins):
    col = np.array(vals, dtype=float) * 0.3
    edges = quantile_edges(col, n_bins)
    assert len(edges) <= n_bins - 1 or len(np.unique(col)) <= n_bins
    b = bin_features(col[:, None], [edges])[:, 0]
    for k, e in enumerate(edges):
        np.testing.assert_array_equal(b <= k, col <= e)


def test_leaf_budget_respected():
    X, y = toy(400)
    b = fit_boosting(X, y, {"n_iterations": 5, "max_leaves": 7, "max_depth": 3,
                            "min_samples_leaf": 1}, 0)
    for t in b.trees:
        assert t.n_leaves <= 7 and t.depth() <= 3


def test_boosting_fits_signal():
    X, y = toy(600)
    Xt, yt = toy(300, seed=1)
    m = train_gradient_boosted(X, y)
    assert np.sqrt(np.mean((m.predict(Xt) - yt) ** 2)) < 0.25 * np.std(yt)


@pytest.mark.parametrize("params", [{"n_bins": 1}, {"learning_rate": 0}, {"max_leaves": 1},
                                    {"n_iterations": -1}])
def test_boosting_rejects_bad_params(params):
    X, y = toy(20)
    with pytest.raises(ValueError):
        train_gradient_boosted(X, y, params)


# ---- MLP ----

def flat(layers):
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in layers])


def unflat(vec, like):
    out, k = [], 0
    for W, b in like:
        Wn = vec[k:k + W.size].reshape(W.shape)
        k += W.size
        bn = vec[k:k + b.size]
        k += b.size
        out.append((Wn, bn))
    return out


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    layers = init_layers([3, 3, 3, 1], rng)  # two hidden layers of three units
    layers = [(W, rng.normal(0, 0.5, b.shape)) for W, b in layers]
    X = rng.normal(size=(8, 3))
    y = rng.normal(size=8)
    _, grads = loss_and_grads(layers, X, y)
    g = flat(grads)
    theta = flat(layers)
    h = 1e-5
    num = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        lp, _ = loss_and_grads(unflat(theta + e, layers), X, y)
        lm, _ = loss_and_grads(unflat(theta - e, layers), X, y)
        num[k] = (lp - lm) / (2 * h)
    rel = np.max(np.abs(g - num)) / max(np.max(np.abs(num)), 1e-12)
    assert rel < 1e-4


def test_zero_network_outputs_zero():
    layers = [(np.zeros((4, 5)), np.zeros(5)), (np.zeros((5, 1)), np.zeros(1))]
    out, _ = forward(layers, np.random.default_rng(0).normal(size=(6, 4)))
    np.testing.assert_array_equal(out, 0.0)


def test_mlp_learns_and_is_deterministic():
    X, y = toy(400)
    p = {"hidden_layers": 2, "hidden_width": 16, "epochs": 150, "batch_size": 32,
         "learning_rate": 1e-2}
    a = train_mlp(X, y, p, seed=4)
    b = train_mlp(X, y, p, seed=4)
    assert dumps_model(a) == dumps_model(b)
    Xt, yt = toy(200, seed=1)
    assert np.sqrt(np.mean((a.predict(Xt) - yt) ** 2)) < 0.4 * np.std(yt)
    assert a.model.loss_history[-1] < a.model.loss_history[0]


def test_mlp_sgd_option():
    X, y = toy(100)
    m = fit_mlp(X, y, {"hidden_layers": 1, "hidden_width": 8, "epochs": 20,
                       "optimizer": "sgd", "learning_rate": 0.05}, 0)
    assert np.all(np.isfinite(m.predict(X)))


def test_mlp_divergence_reported():
    X, y = toy(100)
    with pytest.raises(TrainingDivergedError):
        fit_mlp(X * 1e3, y, {"hidden_layers": 0, "epochs": 50, "optimizer": "sgd",
                             "learning_rate": 1e3}, 0)
    with pytest.raises(ValueError, match="not finite"):
        fit_mlp(X, y * 1e300, {"hidden_layers": 1, "epochs": 1}, 0)


# ---- artifacts ----

LEARNERS = [("random_forest", {"n_trees": 3}), ("gradient_boosted", {"n_iterations": 5}),
            ("mlp", {"hidden_layers": 2, "hidden_width": 4, "epochs": 3})]


@pytest.mark.parametrize("kind, params", LEARNERS)
def test_artifact_round_trip_exact(kind, params):
    X, y = toy(150)
    m = train(LearnerConfig(kind, params, 5, scale=True), X, y, trained_at_soh=87.5, version=4)
    Xq = np.random.default_rng(11).uniform(-2, 2, size=(100, 4))
    text = dumps_model(m)
    back = deserialize_model(text)
    np.testing.assert_array_equal(back.predict(Xq), m.predict(Xq))
    assert (back.kind, back.trained_at_soh, back.version, back.seed) == (kind, 87.5, 4, 5)
    assert dumps_model(back) == text
    doc = json.loads(text)
    assert {"schema_version", "kind", "hyperparameters", "trained_at_soh", "version", "seed",
            "scaler", "payload"} <= doc.keys()


def test_artifact_corruption_detected():
    X, y = toy(60)
    m = train_random_forest(X, y, {"n_trees": 2}, scale=True)
    text = dumps_model(m)
    with pytest.raises(ArtifactError, match="not valid JSON"):
        deserialize_model(text[: len(text) // 2])
    doc = serialize_model(m)
    doc["schema_version"] = 99
    with pytest.raises(ArtifactError, match="schema_version"):
        deserialize_model(doc)
    doc = serialize_model(m)
    doc["payload"]["trees"][0]["leaf_value"][0] += 1.0
    with pytest.raises(ArtifactError, match="checksum"):
        deserialize_model(doc)
    doc = serialize_model(m)
    del doc["scaler"]
    with pytest.raises(ArtifactError, match="missing"):
        deserialize_model(doc)
    doc = serialize_model(m)
    doc["n_features"] = 2
    with pytest.raises(ArtifactError):
        deserialize_model(doc)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_artifact_byte_flip_never_silent(pos_seed):
    X, y = toy(40)
    m = train_random_forest(X, y, {"n_trees": 2, "max_depth": 3})
    text = dumps_model(m)
    k = pos_seed % len(text)
    flipped = text[:k] + ("0" if text[k] != "0" else "1") + text[k + 1:]
    try:
        back = deserialize_model(flipped)
    except ArtifactError:
        return
    # a flip that survives must have hit metadata that does not change predictions
    np.testing.assert_array_equal(back.predict(X), m.predict(X))


def test_dimension_mismatch():
    X, y = toy(40)
    m = train_random_forest(X, y, {"n_trees": 2})
    with pytest.raises(ValueError, match="4 features"):
        m.predict(np.zeros((3, 3)))


@pytest.mark.parametrize("X, y", [(np.empty((0, 2)), np.empty(0)), (np.zeros((3, 2)), np.zeros(2)),
                                  (np.array([[np.nan, 1.0]]), np.zeros(1))])
def test_train_rejects_bad_data(X, y):
    with pytest.raises(ValueError):
        train_random_forest(X, y)


def test_aliases():
    assert LearnerConfig("rf").kind == "random_forest"
    assert LearnerConfig("lgb").kind == "gradient_boosted"
    assert LearnerConfig("dnn").kind == "mlp"
    with pytest.raises(ValueError):
        LearnerConfig("svm")
