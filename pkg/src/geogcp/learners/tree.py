"""CART regression trees on top of the backend kernels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels

_MAX_SEED = np.iinfo(np.uint64).max


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array encoding of a fitted regression tree.

    Node 0 is the root and nodes are stored in depth-first preorder. Leaves
    have ``feature == -1``; internal nodes send ``x[feature] <= threshold``
    left. ``weight`` is the (bootstrap-weighted) training count per node and
    ``gain`` the weighted SSE decrease of the split (0 at leaves).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])

    def predict(self, X, backend=None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        k = get_kernels(backend)
        return k.predict_tree(self.feature, self.threshold, self.left, self.right, self.value, X)

    def predict_with_column(self, X, rows, column, replacement, backend=None) -> np.ndarray:
        """Predict ``X[rows]`` as if column ``column`` held ``replacement``."""
        k = get_kernels(backend)
        return k.predict_tree_override(
            self.feature, self.threshold, self.left, self.right, self.value,
            X, np.ascontiguousarray(rows, dtype=np.intp), int(column),
            np.ascontiguousarray(replacement, dtype=np.float64),
        )

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in TREE_FIELDS}

    def same_as(self, other: "Tree") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in TREE_FIELDS)


TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "weight", "gain")


class Presorted:
    """Design matrix prepared once for repeated tree growth.

    Holds the row-major matrix for prediction, its transpose for column
    scans and the per-column stable argsort used by the kernels.
    """

    def __init__(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        if X.shape[0] == 0 or X.shape[1] == 0:
            raise ValueError("X is empty")
        if not np.isfinite(X).all():
            raise ValueError("X contains missing or non-finite values")
        self.X = np.ascontiguousarray(X)
        self.Xt = np.ascontiguousarray(X.T)
        self.order = np.argsort(self.Xt, axis=1, kind="stable").astype(np.int32)

    @property
    def shape(self):
        return self.X.shape

    def subset(self, rows=None, cols=None) -> "Presorted":
        """Restrict to ``rows`` (boolean mask) and/or ``cols`` without re-sorting."""
        out = Presorted.__new__(Presorted)
        X, Xt, order = self.X, self.Xt, self.order
        if cols is not None:
            cols = np.asarray(cols, dtype=np.intp)
            X, Xt, order = X[:, cols], Xt[cols], order[cols]
        if rows is not None:
            rows = np.asarray(rows, dtype=bool)
            new_pos = np.cumsum(rows, dtype=np.int64) - 1
            keep = rows[order]
            order = new_pos[order[keep].reshape(order.shape[0], -1)].astype(np.int32)
            X, Xt = X[rows], Xt[:, rows]
        out.X = np.ascontiguousarray(X)
        out.Xt = np.ascontiguousarray(Xt)
        out.order = np.ascontiguousarray(order)
        return out


def grow(data: Presorted, y, weights, *, min_leaf=5, mtry=None, max_depth=None,
         seed=0, backend=None) -> Tree:
    """Grow one tree on a presorted design with per-row integer weights."""
    n, p = data.shape
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if not np.isfinite(y).all():
        raise ValueError("y contains missing or non-finite values")
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    mtry = p if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must be in [1, {p}], got {mtry}")
    depth = -1 if max_depth is None else int(max_depth)
    k = get_kernels(backend)
    arrays = k.build_tree(data.Xt, y, weights, data.order, float(min_leaf), mtry, depth,
                          np.uint64(int(seed) & int(_MAX_SEED)))
    return Tree(*arrays)


def fit_tree(X, y, *, min_leaf=5, mtry=None, max_depth=None, rng=None, backend=None) -> Tree:
    """Fit a CART regression tree by greedy SSE reduction.

    ``rng`` may be an int seed or a ``numpy.random.Generator``; it drives the
    per-node candidate-feature draw when ``mtry`` is below the column count.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise ValueError("X is empty")
    n = X.shape[0]
    if n < 2 * min_leaf:
        raise ValueError(f"need at least {2 * min_leaf} rows for min_leaf={min_leaf}, got {n}")
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, _MAX_SEED, dtype=np.uint64, endpoint=True))
    else:
        seed = 0 if rng is None else int(rng)
    return grow(Presorted(X), y, np.ones(n), min_leaf=min_leaf, mtry=mtry,
                max_depth=max_depth, seed=seed, backend=backend)
