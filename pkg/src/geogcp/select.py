"""Three-stage predictor selection.

Stage A ranks every predictor with one large forest. Stage B repeatedly
fits forests on random 20-predictor subsets and averages each predictor's
normalised importance over the subsets that contained it. The two top-10
lists are pooled and ranked by greedy forward selection under k-fold MAE,
which also yields the per-step accuracy curve.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError
from .evaluation import fold_assignment, nmae, pearson
from .learners import ForestParams, Presorted, fit_forest, impurity_importance, permutation_importance
from .learners.forest import _pmap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelectParams:
    top: int = 10
    full_trees: int = 1000
    n_real: int = 300
    vars_per_real: int = 20
    real_trees: int = 300
    k: int = 5
    inner_trees: int = 300
    curve_trees: int = 1000
    max_steps: int = 10
    min_leaf: int = 5
    importance: str = "permutation"  # or "impurity"
    forward_mtry: str = "all"  # forward-selection forests split on every chosen predictor; "default" uses ceil(p/3)

    def __post_init__(self):
        if self.importance not in ("permutation", "impurity"):
            raise ValidationError("importance must be 'permutation' or 'impurity'")
        if self.forward_mtry not in ("all", "default"):
            raise ValidationError("forward_mtry must be 'all' or 'default'")
        for name in ("top", "full_trees", "n_real", "vars_per_real", "real_trees", "inner_trees",
                     "curve_trees", "max_steps", "min_leaf"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.k < 2:
            raise ValidationError("k must be >= 2")


@dataclass
class StageResult:
    names: list
    scores: list
    counts: list | None = None  # stage B: realisations containing each predictor


@dataclass
class SelectionReport:
    stage_a: StageResult
    stage_b: StageResult
    pooled: list
    final: list
    curve: list  # (step, predictor, nmae, corr)
    seed: int
    sample: str = "all"
    oof: np.ndarray | None = field(default=None, repr=False)  # (steps, n) out-of-fold predictions

    def __post_init__(self):
        if len(set(self.final)) != len(self.final) or not set(self.final) <= set(self.pooled):
            raise ValidationError("final list must be a duplicate-free subset of the pooled candidates")
        if len(self.curve) != len(self.final):
            raise ValidationError("curve length must equal the final list length")

    @property
    def nmae_curve(self) -> np.ndarray:
        return np.array([c[2] for c in self.curve])


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0] >> 1)


def _importance(model, X, y, seed, kind, threads):
    if kind == "impurity":
        return impurity_importance(model)
    return permutation_importance(model, X, y, rng=seed, threads=threads)


def _ranked(names, scores, top):
    order = sorted(range(len(names)), key=lambda i: (-scores[i], names[i]))[:top]
    return [names[i] for i in order], [float(scores[i]) for i in order]


def stage_full_rf(X, y, names, seed: int = 0, params: SelectParams | None = None, threads: int = 1,
                  data: Presorted | None = None) -> StageResult:
    """Rank all predictors by the importance from one large forest."""
    params = params or SelectParams()
    names = list(names)
    if len(names) < params.top:
        logger.warning("only %d predictors available; returning all of them", len(names))
    fp = ForestParams(n_trees=params.full_trees, min_leaf=params.min_leaf, seed=_seed(seed, 1))
    model = fit_forest(X, y, fp, feature_names=names, threads=threads, data=data)
    imp = _importance(model, X, y, _seed(seed, 11), params.importance, threads)
    top, scores = _ranked(names, imp.scores, params.top)
    return StageResult(top, scores)


def stage_subsample(X, y, names, seed: int = 0, params: SelectParams | None = None, threads: int = 1,
                    data: Presorted | None = None) -> StageResult:
    """Average normalised importance over forests fitted on random predictor subsets.

    Normalised importance is the realisation's importance vector clipped at
    zero and divided by its sum.
    """
    params = params or SelectParams()
    names = list(names)
    p = len(names)
    m = params.vars_per_real
    if p < m:
        raise ValidationError(f"stage B needs at least {m} predictors, got {p}")
    data = data if data is not None else Presorted(X)
    y = np.asarray(y, dtype=np.float64)

    def one(r):
        cols = np.sort(np.random.default_rng([int(seed), 2, r]).choice(p, m, replace=False))
        sub = data.subset(cols=cols)
        fp = ForestParams(n_trees=params.real_trees, min_leaf=params.min_leaf, seed=_seed(seed, 2, r))
        model = fit_forest(sub.X, y, fp, data=sub)
        imp = np.clip(_importance(model, sub.X, y, _seed(seed, 12, r), params.importance, 1).scores, 0.0, None)
        total = imp.sum()
        return cols, (imp / total if total > 0 else np.zeros(m))

    acc = np.zeros(p)
    count = np.zeros(p, dtype=np.int64)
    for cols, norm in _pmap(one, range(params.n_real), threads):
        acc[cols] += norm
        count[cols] += 1
    seen = count > 0
    agg = np.where(seen, acc / np.maximum(count, 1), -np.inf)
    idx = [i for i in range(p) if seen[i]]
    top, scores = _ranked([names[i] for i in idx], [agg[i] for i in idx], params.top)
    counts = [int(count[names.index(n)]) for n in top]
    return StageResult(top, scores, counts)


def pool(stage_a: StageResult, stage_b: StageResult) -> list:
    out = []
    for n in list(stage_a.names) + list(stage_b.names):
        if n not in out:
            out.append(n)
    return out


def _cv_predict(fold_data, y, folds, cols, n_trees, min_leaf, seed, threads, mtry=None):
    pred = np.empty(y.size)
    for f, (train_data, test_X) in enumerate(fold_data):
        sub = train_data.subset(cols=cols)
        fp = ForestParams(n_trees=n_trees, min_leaf=min_leaf, seed=_seed(seed, 3, f),
                          mtry=len(cols) if mtry == "all" else None)
        model = fit_forest(sub.X, y[folds != f], fp, data=sub, threads=threads)
        pred[folds == f] = model.predict(test_X[:, cols])
    return pred


def pool_and_rank(stage_a: StageResult, stage_b: StageResult, X, y, names, k: int | None = None,
                  seed: int = 0, params: SelectParams | None = None, threads: int = 1):
    """Greedy forward selection over the pooled candidates.

    One fold partition is drawn and reused for every candidate, and every
    candidate evaluation in fold ``f`` uses the same forest seed, so the
    comparisons at each step are paired. With ``forward_mtry="all"`` the
    forests try every chosen predictor at each split, so an uninformative
    addition cannot dilute the informative ones and the curve stays flat once
    the drivers are in. Returns (final names, curve, oof).
    """
    params = params or SelectParams()
    k = params.k if k is None else k
    names = list(names)
    candidates = pool(stage_a, stage_b)
    if not candidates:
        raise ValidationError("no pooled candidates")
    cand_idx = [names.index(c) for c in candidates]
    Xc = np.ascontiguousarray(np.asarray(X, dtype=np.float64)[:, cand_idx])
    y = np.asarray(y, dtype=np.float64)
    folds = fold_assignment(y.size, k, _seed(seed, 4))
    full = Presorted(Xc)
    fold_data = [(full.subset(rows=folds != f), Xc[folds == f]) for f in range(k)]

    chosen: list = []
    remaining = list(range(len(candidates)))
    n_steps = min(params.max_steps, params.top, len(candidates))
    for step in range(n_steps):
        def score(j):
            pred = _cv_predict(fold_data, y, folds, chosen + [j], params.inner_trees, params.min_leaf,
                               _seed(seed, 5, step), 1, params.forward_mtry)
            return float(np.mean(np.abs(pred - y)))
        maes = _pmap(score, remaining, threads)
        best = remaining[int(np.argmin(maes))]
        chosen.append(best)
        remaining.remove(best)

    curve, oof = [], []
    for step in range(len(chosen)):
        cols = chosen[: step + 1]
        pred = _cv_predict(fold_data, y, folds, cols, params.curve_trees, params.min_leaf, _seed(seed, 6), threads,
                           params.forward_mtry)
        try:
            corr = pearson(pred, y)
        except ValidationError:
            corr = float("nan")
        curve.append((step + 1, candidates[cols[-1]], nmae(pred, y), corr))
        oof.append(pred)
    return [candidates[j] for j in chosen], curve, np.vstack(oof)


def run_selection(X, y, names, seed: int = 0, params: SelectParams | None = None, threads: int = 1,
                  sample: str = "all") -> SelectionReport:
    params = params or SelectParams()
    X = np.ascontiguousarray(X, dtype=np.float64)
    data = Presorted(X)
    a = stage_full_rf(X, y, names, seed, params, threads, data)
    b = stage_subsample(X, y, names, seed, params, threads, data)
    final, curve, oof = pool_and_rank(a, b, X, y, names, params.k, seed, params, threads)
    return SelectionReport(a, b, pool(a, b), final, curve, int(seed), sample, oof)


def write_selection(report: SelectionReport, path) -> None:
    """One CSV holding both stage tables, the pooled set and the curve."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["table", "rank", "predictor", "score", "count", "nmae", "corr"])
        for i, (n, s) in enumerate(zip(report.stage_a.names, report.stage_a.scores), 1):
            w.writerow(["stage_a", i, n, f"{s:.9g}", "", "", ""])
        counts = report.stage_b.counts or [""] * len(report.stage_b.names)
        for i, (n, s, c) in enumerate(zip(report.stage_b.names, report.stage_b.scores, counts), 1):
            w.writerow(["stage_b", i, n, f"{s:.9g}", c, "", ""])
        for i, n in enumerate(report.pooled, 1):
            w.writerow(["pooled", i, n, "", "", "", ""])
        for step, n, e, c in report.curve:
            w.writerow(["curve", step, n, "", "", f"{e:.6f}", "NA" if c != c else f"{c:.6f}"])


def read_selection(path) -> SelectionReport:
    tables = {"stage_a": [], "stage_b": [], "pooled": [], "curve": []}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            tables[row["table"]].append(row)
    a = StageResult([r["predictor"] for r in tables["stage_a"]], [float(r["score"]) for r in tables["stage_a"]])
    b = StageResult([r["predictor"] for r in tables["stage_b"]], [float(r["score"]) for r in tables["stage_b"]],
                    [int(r["count"]) for r in tables["stage_b"] if r["count"] != ""] or None)
    curve = [(int(r["rank"]), r["predictor"], float(r["nmae"]), float("nan") if r["corr"] == "NA" else float(r["corr"]))
             for r in tables["curve"]]
    return SelectionReport(a, b, [r["predictor"] for r in tables["pooled"]], [c[1] for c in curve], curve, 0)


def params_dict(params: SelectParams) -> dict:
    return asdict(params)


def expected_inclusions(params: SelectParams, p: int) -> float:
    """Expected number of stage-B realisations containing a given predictor."""
    return params.n_real * params.vars_per_real / p


def overlap(a, b) -> int:
    return len(set(a) & set(b))


__all__ = ["SelectParams", "StageResult", "SelectionReport", "stage_full_rf", "stage_subsample", "pool",
           "pool_and_rank", "run_selection", "write_selection", "read_selection", "expected_inclusions",
           "overlap"]
