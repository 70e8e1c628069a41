"""Climate statistics, gradient exceedances and the model-ready feature matrix.

Predictor names follow a small grammar::

    <VAR> <STAT>           STAT in Mean | bottom Q | Median | top Q | SD | SD S
    <VAR> <+|->ve (<s>)    step-s gradient exceedance frequency, s in 1..5
    <geography name>       e.g. "Latitude", "Distance to Major River"

Quantiles interpolate linearly at position (n-1)q; standard deviations use
the n-1 divisor; "SD S" is the SD of the 12 climatological monthly means.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .binfmt import KIND_FEATURES, read_geof, write_geof
from .errors import ValidationError
from .gridstore import GEOGRAPHY, CellTable, VariableSeries, make_series

CLIMATE_VARIABLES = ("MSLP", "UV10", "T2", "DT", "D2", "TP", "RH", "SR", "SUND")
# base 'gradient' threshold per variable in storage units; MSLP is stored in hPa
GRADIENT_BASE = {"MSLP": 7.5, "UV10": 2.5, "T2": 5.0, "DT": 2.5, "D2": 7.0,
                 "TP": 5.0, "RH": 20.0, "SR": 100.0, "SUND": 3.0}
CADENCE = {"MSLP": "six_hourly", "UV10": "six_hourly", "T2": "daily", "DT": "daily", "D2": "daily",
           "TP": "daily", "RH": "daily", "SR": "daily", "SUND": "daily",
           "TMIN": "six_hourly", "TMAX": "six_hourly"}
ESCALATION = {"six_hourly": 0.10, "daily": 0.15}
MAX_STEP = 5
MISSING_LIMIT = 0.05

STAT_LABELS = {"mean": "Mean", "q1": "bottom Q", "median": "Median", "q3": "top Q", "sd": "SD", "sd_s": "SD S"}
_LABEL_STATS = {v: k for k, v in STAT_LABELS.items()}
_GEO_KEYS = {v: k for k, v in GEOGRAPHY.items()}
_GRAD_RE = re.compile(r"^(\w+) ([+-])ve \((\d+)\)$")

# the ten all-grid-point predictors ranked in the reference study, in rank order
REFERENCE_TOP10 = ("Latitude", "MSLP SD S", "Distance to Major River", "D2 SD S", "Distance to River",
                   "Distance to Ocean", "Distance to Lake", "MSLP SD", "MSLP bottom Q", "TP SD")


@dataclass(frozen=True)
class FeatureSpec:
    """One predictor: a geography attribute, a summary statistic or a gradient."""

    variable: str  # climate variable id, or geography key for kind == "geo"
    kind: str  # geo | mean | q1 | median | q3 | sd | sd_s | grad
    sign: str | None = None  # "+" or "-" for grad
    step: int | None = None

    def __post_init__(self):
        if self.kind == "geo":
            if self.variable not in GEOGRAPHY:
                raise ValidationError(f"unknown geography attribute {self.variable!r}")
            return
        if self.variable not in CLIMATE_VARIABLES:
            raise ValidationError(f"unknown variable {self.variable!r}")
        if self.kind == "grad":
            if self.sign not in ("+", "-"):
                raise ValidationError("gradient sign must be '+' or '-'")
            if self.step is None or not 1 <= self.step <= MAX_STEP:
                raise ValidationError(f"gradient step must be in [1, {MAX_STEP}]")
        elif self.kind not in STAT_LABELS:
            raise ValidationError(f"unknown statistic {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "geo":
            return GEOGRAPHY[self.variable]
        if self.kind == "grad":
            return f"{self.variable} {self.sign}ve ({self.step})"
        return f"{self.variable} {STAT_LABELS[self.kind]}"

    @property
    def cadence(self) -> str | None:
        return None if self.kind == "geo" else CADENCE[self.variable]

    def threshold(self, escalation: str = "compound") -> float:
        """Step-escalated exceedance threshold for a gradient spec."""
        if self.kind != "grad":
            raise ValueError("threshold only applies to gradient features")
        return gradient_threshold(GRADIENT_BASE[self.variable], ESCALATION[self.cadence], self.step, escalation)

    @classmethod
    def parse(cls, name: str) -> "FeatureSpec":
        name = name.strip()
        if name in _GEO_KEYS:
            return cls(_GEO_KEYS[name], "geo")
        m = _GRAD_RE.match(name)
        if m:
            return cls(m.group(1), "grad", m.group(2), int(m.group(3)))
        var, _, label = name.partition(" ")
        if label in _LABEL_STATS:
            return cls(var, _LABEL_STATS[label])
        raise ValidationError(f"cannot parse predictor name {name!r}")


def gradient_threshold(base: float, escalation: float, step: int, mode: str = "compound") -> float:
    if base <= 0:
        raise ValidationError("base threshold must be > 0")
    if mode == "compound":
        return base * (1.0 + escalation) ** (step - 1)
    if mode == "additive":
        return base * (1.0 + escalation * (step - 1))
    raise ValueError(f"escalation mode must be 'compound' or 'additive', got {mode!r}")


def default_specs() -> list:
    """Full census: 10 geography + 9 variables x (6 statistics + 10 gradients) = 154."""
    specs = [FeatureSpec(k, "geo") for k in GEOGRAPHY]
    for var in CLIMATE_VARIABLES:
        specs += [FeatureSpec(var, k) for k in STAT_LABELS]
        specs += [FeatureSpec(var, "grad", sign, s) for sign in "+-" for s in range(1, MAX_STEP + 1)]
    return specs


def parse_specs(names) -> list:
    return [FeatureSpec.parse(n) for n in names]


# --------------------------------------------------------------------------- statistics


def _constant_rows(v):
    with np.errstate(invalid="ignore"):
        return np.nanmax(v, axis=1) == np.nanmin(v, axis=1)


def summary_stats_matrix(values: np.ndarray) -> dict:
    """Row-wise mean, quartiles, median and SD ignoring NaN samples."""
    v = np.atleast_2d(np.asarray(values, dtype=np.float64))
    has_nan = np.isnan(v).any()
    with np.errstate(invalid="ignore", divide="ignore"):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if has_nan:
                mean = np.nanmean(v, axis=1)
                q = np.nanquantile(v, [0.25, 0.5, 0.75], axis=1, method="linear")
                sd = np.nanstd(v, axis=1, ddof=1)
            else:
                mean = np.mean(v, axis=1)
                q = np.quantile(v, [0.25, 0.5, 0.75], axis=1, method="linear")
                sd = np.std(v, axis=1, ddof=1)
    sd = np.where(_constant_rows(v), 0.0, sd)
    return {"mean": mean, "q1": q[0], "median": q[1], "q3": q[2], "sd": sd}


def summary_stats(series) -> tuple:
    """(mean, q1, median, q3, sd) of one series; NaN samples are skipped."""
    x = np.asarray(series, dtype=np.float64)
    x = x[~np.isnan(x)]
    if x.size < 2:
        raise ValidationError(f"summary statistics need >= 2 samples, got {x.size}")
    st = summary_stats_matrix(x[None, :])
    return tuple(float(st[k][0]) for k in ("mean", "q1", "median", "q3", "sd"))


def monthly_climatology(values: np.ndarray, months: np.ndarray) -> np.ndarray:
    """(cells, 12) mean of all samples in each calendar month, NaN-aware."""
    v = np.atleast_2d(np.asarray(values, dtype=np.float64))
    months = np.asarray(months)
    out = np.full((v.shape[0], 12), np.nan)
    if months.size == 0:
        return out
    valid = ~np.isnan(v)
    vz = np.where(valid, v, 0.0)
    # sum contiguous runs of one month, then fold runs onto calendar months
    starts = np.concatenate([[0], np.nonzero(np.diff(months))[0] + 1])
    run_tot = np.add.reduceat(vz, starts, axis=1)
    run_cnt = np.add.reduceat(valid.astype(np.float64), starts, axis=1)
    run_month = months[starts]
    for m in range(1, 13):
        sel = run_month == m
        if not sel.any():
            continue
        cnt = run_cnt[:, sel].sum(axis=1)
        tot = run_tot[:, sel].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, m - 1] = np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan)
    return out


def seasonal_sd_matrix(values: np.ndarray, months: np.ndarray) -> np.ndarray:
    """Row-wise SD (ddof=1) of the 12 monthly means; NaN if a month is absent."""
    v = np.atleast_2d(np.asarray(values, dtype=np.float64))
    clim = monthly_climatology(v, months)
    sd = np.std(clim, axis=1, ddof=1)
    return np.where(_constant_rows(v), 0.0, sd)


def seasonal_sd(series, months) -> float:
    x = np.asarray(series, dtype=np.float64)
    months = np.asarray(months)
    present = set(np.unique(months[~np.isnan(x)]).tolist())
    absent = sorted(set(range(1, 13)) - present)
    if absent:
        raise ValidationError(f"seasonal SD needs all 12 calendar months; absent: {absent}")
    return float(seasonal_sd_matrix(x[None, :], months)[0])


def _step_diff(v, step):
    if v.shape[1] < step + 1:
        raise ValidationError(f"series of {v.shape[1]} samples too short for step {step}")
    return v[:, step:] - v[:, :-step]


def _exceed_freq(d, threshold, sign, n_valid):
    with np.errstate(invalid="ignore"):
        hit = d >= threshold if sign == "+" else d <= -threshold
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n_valid > 0, np.count_nonzero(hit, axis=1) / np.maximum(n_valid, 1), np.nan)


def gradient_matrix(values: np.ndarray, step: int, threshold: float, sign: str) -> np.ndarray:
    """Row-wise fraction of valid (t, t+step) pairs whose change crosses the threshold."""
    v = np.atleast_2d(np.asarray(values, dtype=np.float64))
    d = _step_diff(v, step)
    return _exceed_freq(d, threshold, sign, d.shape[1] - np.count_nonzero(np.isnan(d), axis=1))


def gradient_exceedance(series, spec: FeatureSpec, cadence: str | None = None,
                        escalation: str = "compound") -> float:
    """Exceedance frequency of one series for a gradient ``spec``."""
    if spec.kind != "grad":
        raise ValidationError("spec is not a gradient feature")
    if cadence is not None and cadence != spec.cadence:
        raise ValidationError(f"{spec.variable} gradients are defined on {spec.cadence} data, got {cadence}")
    x = np.asarray(series, dtype=np.float64)
    return float(gradient_matrix(x[None, :], spec.step, spec.threshold(escalation), spec.sign)[0])


def daily_excursion(tmin: VariableSeries, tmax: VariableSeries, missing_limit: float = MISSING_LIMIT) -> VariableSeries:
    """Daily temperature excursion: max of the day's Tmax minus min of its Tmin.

    Days are computed from the samples present; a cell whose input samples
    are more than ``missing_limit`` missing gets an all-missing DT row.
    """
    if tmin.cadence != tmax.cadence or tmin.cadence != "six_hourly":
        raise ValidationError("daily excursion needs six-hourly Tmin and Tmax")
    if (tmin.start != tmax.start or tmin.n_steps != tmax.n_steps
            or not np.array_equal(tmin.cell_id, tmax.cell_id)):
        raise ValidationError("Tmin and Tmax series are not aligned")
    days = tmax.days
    starts = np.concatenate([[0], np.nonzero(np.diff(days))[0] + 1])
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        hi = np.fmax.reduceat(tmax.values, starts, axis=1)
        lo = np.fmin.reduceat(tmin.values, starts, axis=1)
    dt = hi - lo
    if np.any(dt < 0):
        raise ValidationError("Tmax below Tmin within a day")
    frac = (tmin.missing | tmax.missing).mean(axis=1)
    dt[frac > missing_limit, :] = np.nan
    stamps = np.asarray(days[starts], dtype="datetime64[D]").astype("datetime64[s]")
    return make_series("DT", "daily", stamps, tmax.cell_id, dt)


# --------------------------------------------------------------------------- matrix


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Cells x named predictors; NaN entries are flagged in ``missing``."""

    cell_id: np.ndarray
    names: list
    values: np.ndarray

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValidationError("predictor names must be unique")
        if self.values.shape != (self.cell_id.shape[0], len(self.names)):
            raise ValidationError("feature values do not match cells x names")

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def shape(self):
        return self.values.shape

    def column(self, name) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select(self, names) -> "FeatureMatrix":
        names = list(names)
        missing = [n for n in names if n not in self.names]
        if missing:
            raise ValidationError(f"unknown predictor(s): {', '.join(missing)}")
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(self.cell_id, names, self.values[:, idx])

    def rows(self, mask) -> "FeatureMatrix":
        return FeatureMatrix(self.cell_id[mask], list(self.names), self.values[mask])

    def align(self, cell_ids) -> "FeatureMatrix":
        pos = np.searchsorted(self.cell_id, cell_ids)
        pos = np.clip(pos, 0, self.cell_id.size - 1)
        if not np.array_equal(self.cell_id[pos], np.asarray(cell_ids)):
            raise ValidationError("feature matrix lacks requested cells")
        return FeatureMatrix(self.cell_id[pos], list(self.names), self.values[pos])

    def complete_rows(self) -> np.ndarray:
        return ~self.missing.any(axis=1)

    def renamed(self, mapping) -> "FeatureMatrix":
        return FeatureMatrix(self.cell_id, [mapping.get(n, n) for n in self.names], self.values)


def _variable_features(series: VariableSeries, specs, escalation, missing_limit):
    v = series.values
    out = {}
    kinds = {s.kind for s in specs}
    if kinds & {"mean", "q1", "median", "q3", "sd"}:
        out.update(summary_stats_matrix(v))
    if "sd_s" in kinds:
        out["sd_s"] = seasonal_sd_matrix(v, series.months)
    for step in sorted({s.step for s in specs if s.kind == "grad"}):
        d = _step_diff(v, step)
        n_valid = d.shape[1] - np.count_nonzero(np.isnan(d), axis=1)
        for s in specs:
            if s.kind == "grad" and s.step == step:
                out[s] = _exceed_freq(d, s.threshold(escalation), s.sign, n_valid)
        del d
    cols = [out[s] if s.kind == "grad" else out[s.kind] for s in specs]
    mat = np.column_stack(cols)
    flagged = series.missing.mean(axis=1) > missing_limit
    mat[flagged, :] = np.nan
    return mat


def build_feature_matrix(cells: CellTable, series: Mapping, specs=None, *,
                         escalation: str = "compound", missing_limit: float = MISSING_LIMIT) -> FeatureMatrix:
    """Derive every requested predictor for every cell.

    ``series`` maps variable id to :class:`VariableSeries`; it is read one
    variable at a time so lazily generated mappings stay memory bounded. DT is
    derived from TMIN/TMAX when not supplied directly.
    """
    specs = default_specs() if specs is None else [FeatureSpec.parse(s) if isinstance(s, str) else s for s in specs]
    if not specs:
        raise ValidationError("feature spec list is empty")
    n = len(cells)
    values = np.full((n, len(specs)), np.nan)
    by_var = {}
    for j, s in enumerate(specs):
        if s.kind == "geo":
            values[:, j] = cells.geography[s.variable]
        else:
            by_var.setdefault(s.variable, []).append(j)
    for var, cols in by_var.items():
        if var in series:
            ser = series[var]
        elif var == "DT" and "TMIN" in series and "TMAX" in series:
            ser = daily_excursion(series["TMIN"].aligned(cells), series["TMAX"].aligned(cells), missing_limit)
        else:
            raise ValidationError(f"no series loaded for variable {var}")
        if ser.cadence != CADENCE[var]:
            raise ValidationError(f"{var} must be {CADENCE[var]}, got {ser.cadence}")
        ser = ser.aligned(cells)
        values[:, cols] = _variable_features(ser, [specs[j] for j in cols], escalation, missing_limit)
        del ser
    return FeatureMatrix(cells.cell_id.copy(), [s.name for s in specs], values)


def write_features(fm: FeatureMatrix, path, format: str | None = None) -> None:
    binary = format == "binary" or (format is None and str(path).endswith((".geof", ".bin")))
    if binary:
        write_geof(path, KIND_FEATURES, fm.cell_id, fm.values, {"columns": fm.names})
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id"] + fm.names)
        for i, cid in enumerate(fm.cell_id):
            w.writerow([int(cid)] + ["NA" if v != v else repr(float(v)) for v in fm.values[i]])


def read_features(path, format: str | None = None) -> FeatureMatrix:
    binary = format == "binary" or (format is None and str(path).endswith((".geof", ".bin")))
    if binary:
        _, ids, values, meta = read_geof(path, KIND_FEATURES)
        return FeatureMatrix(ids, list(meta["columns"]), values)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids, rows = [], []
        for row in reader:
            if row:
                ids.append(int(row[0]))
                rows.append([np.nan if c in ("NA", "") else float(c) for c in row[1:]])
    order = np.argsort(ids, kind="stable")
    return FeatureMatrix(np.asarray(ids, dtype=np.int64)[order], header[1:],
                         np.asarray(rows, dtype=np.float64).reshape(len(ids), len(header) - 1)[order])
