"""Bagged CART regression forest."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tree import Tree, grow_tree

DEFAULTS = {
    "n_trees": 100,
    "max_depth": 16,
    "min_samples_leaf": 2,
    "feature_subsample": "sqrt",
    "bootstrap": True,
}


def resolve_max_features(spec, d: int) -> int:
    if spec is None or spec == "all":
        return d
    if spec == "sqrt":
        return max(1, int(round(math.sqrt(d))))
    if isinstance(spec, float) and 0 < spec <= 1:
        return max(1, int(round(spec * d)))
    k = int(spec)
    if not 1 <= k <= d:
        raise ValueError(f"feature_subsample={spec!r} outside [1, {d}]")
    return k


def check_params(p: dict) -> dict:
    out = {**DEFAULTS, **p}
    if int(out["n_trees"]) < 1:
        raise ValueError("n_trees must be >= 1")
    if out["max_depth"] is not None and int(out["max_depth"]) < 0:
        raise ValueError("max_depth must be >= 0 or None")
    if int(out["min_samples_leaf"]) < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    fs = out["feature_subsample"]
    if not (fs in (None, "sqrt", "all") or isinstance(fs, (int, float))):
        raise ValueError(f"feature_subsample={fs!r} not understood")
    if isinstance(fs, (int, float)) and fs <= 0:
        raise ValueError("feature_subsample must be positive")
    return out


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[Tree, ...]

    def predict_each(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, n_rows) matrix of per-tree predictions."""
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)

    def to_payload(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_payload(cls, payload: dict, n_features: int) -> "Forest":
        trees = payload["trees"]
        if not trees:
            raise ValueError("forest has no trees")
        return cls(tuple(Tree.from_dict(t, n_features) for t in trees))


def fit_forest(X, y, params: dict, seed: int) -> Forest:
    p = check_params(params)
    n, d = X.shape
    k = resolve_max_features(p["feature_subsample"], d)
    depth = None if p["max_depth"] is None else int(p["max_depth"])
    children = np.random.SeedSequence(seed).spawn(int(p["n_trees"]))
    trees = []
    for ss in children:
        rng = np.random.default_rng(ss)
        if p["bootstrap"]:
            idx = rng.integers(0, n, size=n)
            Xb, yb = X[idx], y[idx]
        else:
            Xb, yb = X, y
        trees.append(grow_tree(Xb, yb, depth, int(p["min_samples_leaf"]), k, rng))
    return Forest(tuple(trees))
