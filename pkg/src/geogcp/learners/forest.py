"""Random forest regression with out-of-bag prediction and permutation importance."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .tree import Presorted, Tree, grow


def tree_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one ensemble member (schedule independent)."""
    return np.random.default_rng([int(seed), int(index), int(stream)])


def _pmap(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int | None = None
    min_leaf: int = 5
    max_depth: int | None = None
    seed: int = 0
    bootstrap: bool = True

    def resolved_mtry(self, p: int) -> int:
        return max(1, math.ceil(p / 3)) if self.mtry is None else min(int(self.mtry), p)


@dataclass(eq=False)
class ForestModel:
    trees: list
    inbag: np.ndarray  # (n_trees, n_train) bootstrap multiplicities
    params: ForestParams
    feature_names: list = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, X, threads=1) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got shape {X.shape}")
        preds = _pmap(lambda t: t.predict(X), self.trees, threads)
        total = np.zeros(X.shape[0])
        for p in preds:
            total += p
        return total / self.n_trees


@dataclass
class OOBPrediction:
    prediction: np.ndarray  # NaN where no tree left the row out
    coverage: np.ndarray  # number of trees for which the row was out of bag

    @property
    def uncovered(self) -> np.ndarray:
        return self.coverage == 0


@dataclass
class ImportanceVector:
    names: list
    scores: np.ndarray
    stderr: np.ndarray

    def ranked(self):
        """(name, score) pairs by descending score, ties broken by name."""
        order = sorted(range(len(self.names)), key=lambda i: (-self.scores[i], self.names[i]))
        return [(self.names[i], float(self.scores[i])) for i in order]

    def as_dict(self) -> dict:
        return dict(zip(self.names, map(float, self.scores)))


def fit_forest(X, y, params: ForestParams | None = None, *, feature_names=None,
               threads=1, data: Presorted | None = None, backend=None, **overrides) -> ForestModel:
    """Fit a bagged ensemble of CART trees.

    Tree ``i`` draws its bootstrap and its split-feature stream from
    ``tree_rng(seed, i)``, so the fitted model does not depend on ``threads``.
    """
    params = params or ForestParams()
    if overrides:
        params = ForestParams(**{**params.__dict__, **overrides})
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    data = data if data is not None else Presorted(X)
    n, p = data.shape
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if n < 2 * params.min_leaf:
        raise ValueError(f"need at least {2 * params.min_leaf} rows, got {n}")
    mtry = params.resolved_mtry(p)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValueError("feature_names length does not match X")

    def one(i):
        rng = tree_rng(params.seed, i)
        if params.bootstrap:
            counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.int32)
        else:
            counts = np.ones(n, dtype=np.int32)
        kseed = int(rng.integers(0, np.iinfo(np.uint64).max, dtype=np.uint64, endpoint=True))
        tree = grow(data, y, counts, min_leaf=params.min_leaf, mtry=mtry,
                    max_depth=params.max_depth, seed=kseed, backend=backend)
        return tree, counts

    out = _pmap(one, range(params.n_trees), threads)
    trees = [t for t, _ in out]
    inbag = np.vstack([c for _, c in out])
    return ForestModel(trees=trees, inbag=inbag, params=params, feature_names=names)


def oob_predict(model: ForestModel, X, threads=1) -> OOBPrediction:
    """Average, for each training row, only the trees that did not see it."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = model.inbag.shape[1]
    if X.shape[0] != n:
        raise ValueError(f"X must be the training matrix ({n} rows), got {X.shape[0]}")

    def one(t):
        rows = np.nonzero(model.inbag[t] == 0)[0]
        return rows, model.trees[t].predict_with_column(X, rows, -1, np.empty(len(rows)))

    total = np.zeros(n)
    coverage = np.zeros(n, dtype=np.int64)
    for rows, pred in _pmap(one, range(model.n_trees), threads):
        total[rows] += pred
        coverage[rows] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        prediction = np.where(coverage > 0, total / np.maximum(coverage, 1), np.nan)
    return OOBPrediction(prediction=prediction, coverage=coverage)


def permutation_importance(model: ForestModel, X, y, rng=0, threads=1) -> ImportanceVector:
    """Mean increase in per-tree OOB absolute error when a column is shuffled.

    Each tree shuffles a column among its own out-of-bag rows. Columns a tree
    never splits on cannot change its predictions and contribute exactly 0.
    """
    seed = int(rng.integers(0, 2**63)) if isinstance(rng, np.random.Generator) else int(rng)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if model.inbag.shape[1] != n or p != model.n_features:
        raise ValueError("X does not match the training matrix of the model")

    def one(t):
        tree = model.trees[t]
        rows = np.nonzero(model.inbag[t] == 0)[0]
        contrib = np.zeros(p)
        if rows.size == 0:
            return None
        yo = y[rows]
        base = float(np.mean(np.abs(tree.predict_with_column(X, rows, -1, np.empty(rows.size)) - yo)))
        gen = tree_rng(seed, t, 1)
        for j in tree.used_features():
            shuffled = X[rows, j][gen.permutation(rows.size)]
            pred = tree.predict_with_column(X, rows, int(j), shuffled)
            contrib[j] = float(np.mean(np.abs(pred - yo))) - base
        return contrib

    per_tree = [c for c in _pmap(one, range(model.n_trees), threads) if c is not None]
    if not per_tree:
        return ImportanceVector(list(model.feature_names), np.zeros(p), np.full(p, np.nan))
    stack = np.vstack(per_tree)
    scores = stack.mean(axis=0)
    if len(per_tree) > 1:
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(per_tree))
    else:
        stderr = np.full(p, np.nan)
    return ImportanceVector(list(model.feature_names), scores, stderr)


def impurity_importance(model: ForestModel) -> ImportanceVector:
    """Total split gain per feature averaged over trees (secondary diagnostic)."""
    p = model.n_features
    per_tree = np.zeros((model.n_trees, p))
    for t, tree in enumerate(model.trees):
        internal = tree.feature >= 0
        np.add.at(per_tree[t], tree.feature[internal], tree.gain[internal])
    scores = per_tree.mean(axis=0)
    stderr = per_tree.std(axis=0, ddof=1) / math.sqrt(model.n_trees) if model.n_trees > 1 else np.full(p, np.nan)
    return ImportanceVector(list(model.feature_names), scores, stderr)
