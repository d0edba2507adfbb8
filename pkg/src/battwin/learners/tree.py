"""Array-backed regression trees and an exact CART grower.

Trees are stored as parallel node arrays.  A node with ``feature == -1`` is
a leaf; otherwise rows with ``x[feature] <= threshold`` go to ``left``.

The grower works breadth-first: every node of the current depth is split
in one vectorized pass per feature, using per-feature orderings of the
active rows that are kept grouped by node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                d[self.left[k]] = d[self.right[k]] = d[k] + 1
        return int(d.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            nd = node[active]
            f = self.feature[nd]
            inner = f >= 0
            active, nd, f = active[inner], nd[inner], f[inner]
            if not active.size:
                break
            go_left = X[active, f] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf_value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, n_features: int) -> "Tree":
        feature = np.asarray(d["feature"], dtype=np.int64)
        threshold = np.asarray(d["threshold"], dtype=np.float64)
        left = np.asarray(d["left"], dtype=np.int64)
        right = np.asarray(d["right"], dtype=np.int64)
        value = np.asarray(d["leaf_value"], dtype=np.float64)
        n = len(feature)
        if n == 0 or any(a.shape != (n,) for a in (threshold, left, right, value)):
            raise ValueError("tree node arrays are empty or of unequal length")
        inner = feature >= 0
        if np.any(feature >= n_features) or np.any(feature < -1):
            raise ValueError("tree feature index out of range")
        kids = np.concatenate([left[inner], right[inner]])
        if np.any(kids < 0) or np.any(kids >= n):
            raise ValueError("tree child index out of range")
        # children must come after their parent, which also rules out cycles
        idx = np.flatnonzero(inner)
        if np.any(left[inner] <= idx) or np.any(right[inner] <= idx):
            raise ValueError("tree child precedes its parent")
        if len(np.unique(kids)) != len(kids):
            raise ValueError("tree node has more than one parent")
        if not (np.all(np.isfinite(value)) and np.all(np.isfinite(threshold[inner]))):
            raise ValueError("tree contains non-finite values")
        return cls(feature, threshold, left, right, value)


def midpoint(a: float, b: float) -> float:
    """Split threshold between consecutive distinct values ``a < b``."""
    t = 0.5 * (a + b)
    # adjacent floats: the midpoint may round up onto b
    return a if t >= b else t


def _choose_features(rng, m, d, k):
    if k >= d:
        return np.ones((m, d), dtype=bool)
    order = np.argsort(rng.random((m, d)), axis=1)
    mask = np.zeros((m, d), dtype=bool)
    np.put_along_axis(mask, order[:, :k], True, axis=1)
    return mask


def grow_tree(X, y, max_depth=None, min_samples_leaf=1, max_features=None, rng=None) -> Tree:
    """Grow an exact variance-reduction CART tree.

    Splits maximize ``L^2/n_L + R^2/n_R`` (sums of targets in each child);
    ties go to the lowest feature index, then the lowest threshold.  A node
    becomes a leaf when it is pure, too small to give both children
    ``min_samples_leaf`` rows, at ``max_depth``, or has no valid split among
    its sampled features.

    Parameters
    ----------
    X : (n, d) ndarray
    y : (n,) ndarray
    max_depth : int or None
        None grows until the other stopping rules apply.
    min_samples_leaf : int
    max_features : int or None
        Number of features sampled (without replacement) per node.
        None uses all features.
    rng : numpy.random.Generator, optional
        Only consulted when ``max_features < d``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    k_feat = d if max_features is None else int(max_features)
    if k_feat < d and rng is None:
        rng = np.random.default_rng(0)
    msl = int(min_samples_leaf)
    depth_cap = np.inf if max_depth is None else int(max_depth)

    cap = 2 * n - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    n_nodes = 1
    frontier = np.array([0])  # node ids at the current depth
    perms = [np.argsort(X[:, f], kind="stable") for f in range(d)]
    counts = np.array([n])
    depth = 0

    while frontier.size:
        m = frontier.size
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        ends = starts + counts
        ids = np.repeat(np.arange(m), counts)
        rows0 = perms[0]
        ys0 = y[rows0]
        seg_sum = np.add.reduceat(ys0, starts)
        value[frontier] = seg_sum / counts
        seg_min = np.minimum.reduceat(ys0, starts)
        seg_max = np.maximum.reduceat(ys0, starts)
        splittable = (counts >= 2 * msl) & (seg_min < seg_max) & (depth < depth_cap)
        if not splittable.any():
            break
        fmask = _choose_features(rng, m, d, k_feat)

        best_score = np.full(m, -np.inf)
        best_feat = np.full(m, -1)
        best_thr = np.zeros(m)
        pos = np.arange(len(ids))
        n_left = pos - starts[ids] + 1
        n_right = counts[ids] - n_left
        size_ok = (n_left >= msl) & (n_right >= msl)
        size_ok[ends - 1] = False
        for f in range(d):
            use = splittable & fmask[:, f]
            if not use.any():
                continue
            rows = perms[f]
            xs = X[rows, f]
            cs = np.cumsum(y[rows])
            base = np.concatenate(([0.0], cs))[starts]
            lsum = cs - base[ids]
            rsum = seg_sum[ids] - lsum
            ok = size_ok & use[ids]
            ok[:-1] &= xs[:-1] < xs[1:]
            score = np.full(len(ids), -np.inf)
            q = np.flatnonzero(ok)
            score[q] = lsum[q] * lsum[q] / n_left[q] + rsum[q] * rsum[q] / n_right[q]
            seg_best = np.maximum.reduceat(score, starts)
            hit = q[score[q] == seg_best[ids[q]]]
            if not hit.size:
                continue
            # first hit of each node = lowest threshold
            first = np.ones(hit.size, dtype=bool)
            first[1:] = ids[hit[1:]] != ids[hit[:-1]]
            p = hit[first]
            nodes = ids[p]
            better = seg_best[nodes] > best_score[nodes]
            nodes, p = nodes[better], p[better]
            a, b = xs[p], xs[p + 1]
            t = 0.5 * (a + b)
            best_score[nodes] = seg_best[nodes]
            best_feat[nodes] = f
            best_thr[nodes] = np.where(t >= b, a, t)

        split = np.flatnonzero(best_feat >= 0)
        if not split.size:
            break
        parents = frontier[split]
        kids = n_nodes + 2 * np.arange(split.size)
        n_nodes += 2 * split.size
        feature[parents] = best_feat[split]
        threshold[parents] = best_thr[split]
        left[parents] = kids
        right[parents] = kids + 1
        child_local = np.full(m, -1)
        child_local[split] = 2 * np.arange(split.size)

        # route active rows to children; rows in new leaves drop out
        go_left = X[rows0, best_feat[ids].clip(0)] <= best_thr[ids]
        cl = child_local[ids]
        new_local = np.where(cl < 0, -1, cl + (~go_left))
        row_child = np.full(n, -1)
        row_child[rows0] = new_local
        for f in range(d):
            nid = row_child[perms[f]]
            keep = nid >= 0
            pf, nid = perms[f][keep], nid[keep]
            perms[f] = pf[np.argsort(nid, kind="stable")]
        counts = np.bincount(new_local[new_local >= 0], minlength=2 * split.size)
        frontier = np.sort(np.concatenate([kids, kids + 1]))
        depth += 1

    return Tree(feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
                value[:n_nodes])
