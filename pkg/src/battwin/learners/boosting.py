"""Least-squares gradient boosting with histogram-binned, leaf-wise trees.

Features are bucketed once into equal-frequency bins.  Each stage fits a
tree to the current residuals, always splitting the leaf with the largest
gain until ``max_leaves`` is reached or no leaf below ``max_depth`` can
improve.  Leaf values are mean residuals; the ensemble output is
``base + learning_rate * sum(tree(x))``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .tree import Tree

DEFAULTS = {
    "n_iterations": 100,
    "learning_rate": 0.1,
    "max_leaves": 31,
    "max_depth": 8,
    "n_bins": 64,
    "min_samples_leaf": 20,
}


def check_params(p: dict) -> dict:
    out = {**DEFAULTS, **p}
    if int(out["n_iterations"]) < 0:
        raise ValueError("n_iterations must be >= 0")
    if not 0 < float(out["learning_rate"]) <= 1:
        raise ValueError("learning_rate must be in (0, 1]")
    if int(out["max_leaves"]) < 2:
        raise ValueError("max_leaves must be >= 2")
    if int(out["max_depth"]) < 1:
        raise ValueError("max_depth must be >= 1")
    if int(out["n_bins"]) < 2:
        raise ValueError("n_bins must be >= 2")
    if int(out["min_samples_leaf"]) < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    return out


def quantile_edges(col: np.ndarray, n_bins: int) -> np.ndarray:
    """Upper bin edges (excluding the last, open-ended bin).

    ``searchsorted(edges, x, side="left")`` gives the bin of ``x``, so
    ``bin(x) <= b`` exactly when ``x <= edges[b]``.
    """
    distinct = np.unique(col)
    if len(distinct) <= n_bins:
        cand = distinct
    else:
        cand = np.unique(np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1], method="inverted_cdf"))
    # cut points sit midway between a candidate and the next larger distinct value
    nxt = distinct[np.minimum(np.searchsorted(distinct, cand, side="right"), len(distinct) - 1)]
    keep = nxt > cand
    edges = 0.5 * (cand[keep] + nxt[keep])
    edges = np.where(edges >= nxt[keep], cand[keep], edges)
    return np.unique(edges)


def bin_features(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    return np.column_stack([np.searchsorted(e, X[:, f], side="left") for f, e in enumerate(edges)])


@dataclass(order=True)
class _Candidate:
    neg_gain: float
    node: int
    feature: int = field(compare=False)
    bin: int = field(compare=False)
    rows: np.ndarray = field(compare=False, repr=False)
    depth: int = field(compare=False)


def _best_split(xb, r, rows, n_bins_per_feat, msl):
    """Best (gain, feature, bin) for the rows of one leaf, or None."""
    n = rows.size
    if n < 2 * msl:
        return None
    rr = r[rows]
    total = rr.sum()
    best = None
    for f, nb in enumerate(n_bins_per_feat):
        if nb < 2:
            continue
        b = xb[rows, f]
        cnt = np.bincount(b, minlength=nb)[:-1].cumsum()
        s = np.bincount(b, weights=rr, minlength=nb)[:-1].cumsum()
        ok = (cnt >= msl) & (n - cnt >= msl)
        if not ok.any():
            continue
        nl = cnt[ok]
        sl = s[ok]
        gain = sl * sl / nl + (total - sl) ** 2 / (n - nl) - total * total / n
        k = int(np.argmax(gain))
        g = float(gain[k])
        if best is None or g > best[0]:
            best = (g, f, int(np.flatnonzero(ok)[k]))
    return best


def grow_leafwise(xb, r, edges, n_bins_per_feat, max_leaves, max_depth, msl):
    """Fit one tree to residuals ``r``; returns (Tree, leaf index of every row)."""
    n = r.size
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [float(r.mean())]
    leaf_of = np.zeros(n, dtype=np.int64)
    heap: list[_Candidate] = []

    def push(node, rows, depth):
        if depth >= max_depth:
            return
        best = _best_split(xb, r, rows, n_bins_per_feat, msl)
        if best is not None and best[0] > 0:
            heapq.heappush(heap, _Candidate(-best[0], node, best[1], best[2], rows, depth))

    push(0, np.arange(n), 0)
    n_leaves = 1
    while heap and n_leaves < max_leaves:
        c = heapq.heappop(heap)
        go_left = xb[c.rows, c.feature] <= c.bin
        lrows, rrows = c.rows[go_left], c.rows[~go_left]
        lid = len(feature)
        for rows in (lrows, rrows):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(r[rows].mean()))
        feature[c.node] = c.feature
        threshold[c.node] = float(edges[c.feature][c.bin])
        left[c.node], right[c.node] = lid, lid + 1
        leaf_of[lrows] = lid
        leaf_of[rrows] = lid + 1
        n_leaves += 1
        push(lid, lrows, c.depth + 1)
        push(lid + 1, rrows, c.depth + 1)

    tree = Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value))
    return tree, leaf_of


@dataclass(frozen=True, eq=False)
class BoostedTrees:
    base: float
    learning_rate: float
    trees: tuple[Tree, ...]
    train_mse: tuple[float, ...] = ()  # per stage, index 0 = constant model; not serialized

    def predict(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.predict(X)
        return self.base + self.learning_rate * acc

    def to_payload(self) -> dict:
        return {"base": self.base, "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_payload(cls, payload: dict, n_features: int) -> "BoostedTrees":
        base = float(payload["base"])
        lr = float(payload["learning_rate"])
        if not np.isfinite(base) or not 0 < lr <= 1:
            raise ValueError("invalid boosting base or learning rate")
        return cls(base, lr, tuple(Tree.from_dict(t, n_features) for t in payload["trees"]))


def fit_boosting(X, y, params: dict, seed: int) -> BoostedTrees:
    """Stagewise least-squares boosting.  ``seed`` is recorded but unused:
    fitting is fully deterministic (no row or feature subsampling)."""
    p = check_params(params)
    lr = float(p["learning_rate"])
    edges = [quantile_edges(X[:, f], int(p["n_bins"])) for f in range(X.shape[1])]
    nb = [len(e) + 1 for e in edges]
    xb = bin_features(X, edges)
    base = float(y.mean())
    pred = np.full(y.size, base)
    mse = [float(np.mean((y - pred) ** 2))]
    trees = []
    for _ in range(int(p["n_iterations"])):
        r = y - pred
        tree, leaf_of = grow_leafwise(xb, r, edges, nb, int(p["max_leaves"]),
                                      int(p["max_depth"]), int(p["min_samples_leaf"]))
        trees.append(tree)
        pred = pred + lr * tree.value[leaf_of]
        mse.append(float(np.mean((y - pred) ** 2)))
    return BoostedTrees(base, lr, tuple(trees), tuple(mse))
