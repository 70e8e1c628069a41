"""Least-squares gradient boosting with shallow CART trees."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import Presorted, grow


@dataclass(frozen=True)
class GBParams:
    n_rounds: int = 500
    learning_rate: float = 0.1
    max_depth: int = 3
    min_leaf: int = 1
    seed: int = 0


@dataclass(eq=False)
class GBModel:
    initial: float
    trees: list
    params: GBParams
    feature_names: list = field(default_factory=list)

    @property
    def shrinkage(self) -> float:
        return self.params.learning_rate

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.initial)
        for tree in self.trees:
            out += self.shrinkage * tree.predict(X)
        return out


def fit_gb(X, y, params: GBParams | None = None, *, feature_names=None,
           data: Presorted | None = None, backend=None, **overrides) -> GBModel:
    """Boost depth-limited trees on the running residuals.

    Every round sees all rows and all columns; ``seed`` only feeds the
    kernel's candidate shuffle, which cannot change the chosen split.
    """
    params = params or GBParams()
    if overrides:
        params = GBParams(**{**params.__dict__, **overrides})
    if params.n_rounds < 0:
        raise ValueError("n_rounds must be >= 0")
    y = np.asarray(y, dtype=np.float64)
    initial = float(np.mean(y))
    names = list(feature_names) if feature_names is not None else None
    if params.n_rounds == 0:
        p = np.asarray(X).shape[1]
        return GBModel(initial, [], params, names or [f"x{j}" for j in range(p)])
    data = data if data is not None else Presorted(X)
    n, p = data.shape
    names = names or [f"x{j}" for j in range(p)]
    ones = np.ones(n)
    fitted = np.full(n, initial)
    trees = []
    for t in range(params.n_rounds):
        resid = y - fitted
        tree = grow(data, resid, ones, min_leaf=params.min_leaf, mtry=p,
                    max_depth=params.max_depth, seed=params.seed + t, backend=backend)
        trees.append(tree)
        fitted += params.learning_rate * tree.predict(data.X)
    return GBModel(initial, trees, params, names)
