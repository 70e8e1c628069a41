"""Metrics, k-fold harness and per-cell diagnostic fields."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .learners import ForestParams, GBParams, Presorted, fit_forest, fit_gb, fit_ols, oob_predict

MODELS = ("RF", "GB", "ML", "MEAN")
NORMALIZATIONS = ("sample", "global")


def nmae(pred, y, y_ref=None) -> float:
    """Mean absolute error over the sample SD (ddof=1) of ``y_ref`` (default ``y``)."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape:
        raise ValidationError(f"prediction shape {pred.shape} != target shape {y.shape}")
    ref = y if y_ref is None else np.asarray(y_ref, dtype=np.float64)
    if ref.size < 2:
        raise ValidationError("nMAE needs at least 2 reference values")
    sd = float(np.std(ref, ddof=1))
    if not sd > 0:
        raise ValidationError("nMAE undefined: reference SD is zero")
    return float(np.mean(np.abs(pred - y)) / sd)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise ValidationError("pearson needs two equally long inputs of length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(np.dot(da, da)))
    sb = math.sqrt(float(np.dot(db, db)))
    if sa == 0 or sb == 0:
        raise ValidationError("correlation undefined for a constant input")
    return float(np.clip(np.dot(da, db) / (sa * sb), -1.0, 1.0))


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0] >> 1)


@dataclass(frozen=True)
class ModelSpec:
    """Which regressor to fit and with what hyperparameters."""

    kind: str = "RF"
    forest: ForestParams = field(default_factory=ForestParams)
    boosting: GBParams = field(default_factory=GBParams)

    def __post_init__(self):
        if self.kind not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {self.kind!r}")

    def fit(self, X, y, seed=0, feature_names=None, threads=1):
        if self.kind == "RF":
            return fit_forest(X, y, replace(self.forest, seed=seed), feature_names=feature_names, threads=threads)
        if self.kind == "GB":
            return fit_gb(X, y, replace(self.boosting, seed=seed), feature_names=feature_names)
        if self.kind == "ML":
            return fit_ols(X, y, feature_names=feature_names)
        return _MeanModel(float(np.mean(y)))


@dataclass(frozen=True)
class _MeanModel:
    value: float

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.value)


@dataclass(frozen=True)
class EvalReport:
    sample: str
    model: str
    mode: str  # oob | kfold
    nmae: float
    corr: float
    n_cells: int
    seed: int
    n_features: int = 0
    normalization: str = "sample"

    def row(self) -> dict:
        return {"sample": self.sample, "model": self.model, "mode": self.mode, "n_features": self.n_features,
                "nmae": self.nmae, "corr": self.corr, "n_cells": self.n_cells, "seed": self.seed,
                "normalization": self.normalization}


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Seeded shuffle dealt round-robin into ``k`` folds (sizes differ by <= 1)."""
    if k < 2:
        raise ValidationError("k must be >= 2")
    if n < k:
        raise ValidationError(f"need at least k={k} rows, got {n}")
    perm = np.random.default_rng([int(seed), 0x6B666F6C64]).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def _metrics(pred, y, y_ref, normalization):
    ref = y_ref if normalization == "global" and y_ref is not None else None
    try:
        c = pearson(pred, y)
    except ValidationError:
        c = float("nan")
    return nmae(pred, y, ref), c


def kfold_predict(spec: ModelSpec, X, y, k=5, seed=0, folds=None, threads=1) -> np.ndarray:
    """Out-of-fold predictions; fold ``f`` trains a model seeded from (seed, f)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = fold_assignment(len(y), k, seed) if folds is None else np.asarray(folds)
    pred = np.empty(len(y))
    for f in range(int(folds.max()) + 1):
        test = folds == f
        model = spec.fit(X[~test], y[~test], seed=_seed(seed, f), threads=threads)
        pred[test] = model.predict(X[test])
    return pred


def kfold_eval(spec: ModelSpec, X, y, k: int = 5, seed: int = 0, *, sample: str = "all", y_ref=None,
               normalization: str = "sample", threads: int = 1, folds=None):
    """k-fold cross-validated metrics and the concatenated out-of-fold predictions."""
    if normalization not in NORMALIZATIONS:
        raise ValidationError(f"normalization must be one of {NORMALIZATIONS}")
    y = np.asarray(y, dtype=np.float64)
    if float(np.std(y if normalization == "sample" or y_ref is None else y_ref)) == 0.0:
        raise ValidationError("nMAE undefined: target SD is zero")
    pred = kfold_predict(spec, X, y, k, seed, folds, threads)
    score, corr = _metrics(pred, y, y_ref, normalization)
    return EvalReport(sample, spec.kind, "kfold", score, corr, int(y.size), int(seed),
                      int(np.shape(X)[1]), normalization), pred


def oob_eval(params: ForestParams, X, y, *, sample: str = "all", y_ref=None, normalization: str = "sample",
             threads: int = 1, data: Presorted | None = None):
    """Out-of-bag metrics of one forest fitted on all rows."""
    model = fit_forest(X, y, params, threads=threads, data=data)
    oob = oob_predict(model, X, threads=threads)
    covered = ~oob.uncovered
    y = np.asarray(y, dtype=np.float64)
    ref = y_ref if normalization == "global" else None
    score = nmae(oob.prediction[covered], y[covered], ref if ref is not None else y[covered])
    try:
        corr = pearson(oob.prediction[covered], y[covered])
    except ValidationError:
        corr = float("nan")
    return EvalReport(sample, "RF", "oob", score, corr, int(covered.sum()), int(params.seed),
                      int(np.shape(X)[1]), normalization), oob.prediction


# --------------------------------------------------------------------------- fields


@dataclass(frozen=True, eq=False)
class DiagnosticField:
    cell_id: np.ndarray
    values: np.ndarray
    kind: str  # prediction | delta | residual | predictor

    def mean_over(self, mask) -> float:
        return float(np.mean(self.values[mask]))


def _aligned(*fields):
    ids = None
    arrays = []
    for f in fields:
        if isinstance(f, DiagnosticField):
            if ids is not None and not np.array_equal(ids, f.cell_id):
                raise ValidationError("fields are defined on different cells")
            ids = f.cell_id if ids is None else ids
            arrays.append(np.asarray(f.values, dtype=np.float64))
        else:
            arrays.append(np.asarray(f, dtype=np.float64))
    n = {a.shape for a in arrays}
    if len(n) != 1:
        raise ValidationError("fields are defined on different cells")
    if ids is None:
        ids = np.arange(arrays[0].shape[0], dtype=np.int64)
    return ids, arrays


def delta_field(pred_prev, pred_next, y, cell_id=None) -> DiagnosticField:
    """|prev - y| - |next - y| per cell; positive where the added predictor helped."""
    ids, (a, b, t) = _aligned(pred_prev, pred_next, y)
    ids = ids if cell_id is None else np.asarray(cell_id)
    return DiagnosticField(ids, np.abs(a - t) - np.abs(b - t), "delta")


def residual_field(pred, y, cell_id=None) -> DiagnosticField:
    """Prediction minus observation per cell (the negative of the unexplained term)."""
    ids, (p, t) = _aligned(pred, y)
    ids = ids if cell_id is None else np.asarray(cell_id)
    return DiagnosticField(ids, p - t, "residual")


@dataclass
class CorrelationTable:
    names: list
    corr: np.ndarray  # NaN marks an undefined correlation
    pairwise: np.ndarray | None = None

    def rows(self):
        return [(n, None if np.isnan(c) else float(c)) for n, c in zip(self.names, self.corr)]


def predictor_correlations(X, y, names, pairwise: bool = False) -> CorrelationTable:
    """One-to-one Pearson correlation of each named predictor with ``y``."""
    names = list(names)
    cols = [X.column(n) for n in names]
    y = np.asarray(y, dtype=np.float64)

    def safe(a, b):
        try:
            return pearson(a, b)
        except ValidationError:
            return float("nan")

    corr = np.array([safe(c, y) for c in cols])
    pw = None
    if pairwise:
        pw = np.array([[safe(a, b) for b in cols] for a in cols])
    return CorrelationTable(names, corr, pw)


# --------------------------------------------------------------------------- export

REPORT_COLUMNS = ("sample", "model", "mode", "n_features", "nmae", "corr", "n_cells", "seed", "normalization")


def _num(v):
    if isinstance(v, float):
        return "NA" if v != v else f"{v:.6f}"
    return str(v)


def write_reports(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.row()
            w.writerow([_num(row[c]) for c in REPORT_COLUMNS])


def format_reports(reports) -> str:
    """Plain-text comparison table: one line per (sample, model, mode)."""
    head = f"{'sample':<8} {'vars':>4} {'model':<5} {'mode':<6} {'nMAE':>7} {'CORR':>7} {'cells':>6}"
    lines = [head, "-" * len(head)]
    for r in reports:
        corr = "   n/a" if r.corr != r.corr else f"{r.corr:7.3f}"
        lines.append(f"{r.sample:<8} {r.n_features:>4} {r.model:<5} {r.mode:<6} {r.nmae:7.3f} {corr:>7} {r.n_cells:>6}")
    return "\n".join(lines)


def write_field(fieldv: DiagnosticField, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", fieldv.kind])
        for cid, v in zip(fieldv.cell_id, fieldv.values):
            w.writerow([int(cid), "NA" if v != v else repr(float(v))])


def read_field(path) -> DiagnosticField:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    vals = np.array([np.nan if r[1] == "NA" else float(r[1]) for r in rows])
    return DiagnosticField(ids, vals, header[1])


def write_correlations(table: CorrelationTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predictor", "corr"] + (table.names if table.pairwise is not None else []))
        for i, (n, c) in enumerate(zip(table.names, table.corr)):
            row = [n, "undefined" if np.isnan(c) else f"{c:.6f}"]
            if table.pairwise is not None:
                row += ["undefined" if np.isnan(v) else f"{v:.6f}" for v in table.pairwise[i]]
            w.writerow(row)
