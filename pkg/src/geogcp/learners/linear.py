"""Ordinary least squares via column-pivoted QR."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg


class RankDeficientError(ValueError):
    """Raised when design columns are linearly dependent."""

    def __init__(self, dependent):
        self.dependent = list(dependent)
        super().__init__("rank-deficient design; dependent columns: " + ", ".join(map(str, self.dependent)))


@dataclass(eq=False)
class OLSModel:
    intercept: float
    coef: np.ndarray
    feature_names: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return self.intercept + X @ self.coef


def fit_ols(X, y, *, feature_names=None, rcond=1e-10) -> OLSModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(p)]
    if n <= p:
        raise ValueError(f"OLS needs more rows than features ({n} <= {p})")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("OLS input contains missing or non-finite values")
    A = np.column_stack([np.ones(n), X])
    # unit-norm columns so the rank test is scale free
    scale = np.linalg.norm(A, axis=0)
    zero = scale == 0
    scale[zero] = 1.0
    As = A / scale
    Q, R, piv = linalg.qr(As, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rcond * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < p + 1:
        labels = ["intercept"] + names
        bad = sorted(int(c) for c in piv[rank:])
        raise RankDeficientError([labels[c] for c in bad])
    beta_s = np.empty(p + 1)
    beta_s[piv] = linalg.solve_triangular(R, Q.T @ y)
    beta = beta_s / scale
    return OLSModel(intercept=float(beta[0]), coef=beta[1:], feature_names=names)
