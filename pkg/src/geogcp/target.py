"""Per-capita GCP target: log10 transform, exclusions and tercile partition."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .gridstore import EconomyTable

REASONS = ("missing_years", "gcp_below_1_usd", "zero_population", "nonpositive_minus_sigma")
TERCILES = ("bottom", "middle", "top")
SAMPLES = ("all", "top", "middle", "bottom")


@dataclass(frozen=True, eq=False)
class TargetVector:
    """log10 GCP per capita (USD/person) for every cell of the economy table.

    Excluded cells hold NaN and a non-empty ``reason``; ``tercile`` is -1 for
    excluded cells and 0/1/2 (bottom/middle/top) once :func:`tercile_split`
    has run.
    """

    cell_id: np.ndarray
    log_gcp_pc: np.ndarray
    reason: np.ndarray  # object array of str, "" when included
    tercile: np.ndarray | None = None
    thresholds: tuple | None = None

    @property
    def included(self) -> np.ndarray:
        return self.reason == ""

    @property
    def n_included(self) -> int:
        return int(self.included.sum())

    def values(self) -> np.ndarray:
        return self.log_gcp_pc[self.included]

    def sample_mask(self, sample: str) -> np.ndarray:
        """Mask over entries for one of the four analysis samples."""
        if sample == "all":
            return self.included.copy()
        if sample not in TERCILES:
            raise ValueError(f"sample must be one of {SAMPLES}, got {sample!r}")
        if self.tercile is None:
            raise ValueError("tercile labels not assigned; run tercile_split first")
        return self.tercile == TERCILES.index(sample)

    def labels(self) -> np.ndarray:
        out = np.full(self.cell_id.shape, "", dtype=object)
        if self.tercile is not None:
            for k, name in enumerate(TERCILES):
                out[self.tercile == k] = name
        return out


def _per_cell_years(econ: EconomyTable, years):
    """(cell ids, gcp matrix, population matrix, complete flag) over ``years``."""
    years = list(years)
    cells = econ.cells
    n, k = cells.size, len(years)
    gcp = np.full((n, k), np.nan)
    pop = np.full((n, k), np.nan)
    ci = np.searchsorted(cells, econ.cell_id)
    ymap = {y: j for j, y in enumerate(years)}
    yj = np.array([ymap.get(int(y), -1) for y in econ.year], dtype=np.int64)
    ok = yj >= 0
    gcp[ci[ok], yj[ok]] = econ.gcp[ok]
    pop[ci[ok], yj[ok]] = econ.population[ok]
    complete = ~np.isnan(gcp).any(axis=1)
    return cells, gcp, pop, complete


def _exclusions(gcp, pop, complete):
    reason = np.full(gcp.shape[0], "", dtype=object)
    with np.errstate(invalid="ignore"):
        below = np.any(gcp < 1.0, axis=1)
        zero = np.any(pop == 0, axis=1)
    reason[zero] = "zero_population"
    reason[below] = "gcp_below_1_usd"
    reason[~complete] = "missing_years"
    return reason


def _gcp_pc(gcp, pop, reason):
    with np.errstate(divide="ignore", invalid="ignore"):
        pc = gcp / pop
    pc[reason != ""] = np.nan
    return pc


def build_target(econ: EconomyTable, years=None) -> TargetVector:
    """log10 of the mean over ``years`` of gcp/population, per cell.

    Cells lacking any configured year, with gcp below 1 USD in any year, or
    with zero population in any year are excluded with a reason.
    """
    years = tuple(econ.years if years is None else years)
    cells, gcp, pop, complete = _per_cell_years(econ, years)
    reason = _exclusions(gcp, pop, complete)
    pc = _gcp_pc(gcp, pop, reason)
    with np.errstate(invalid="ignore", divide="ignore"):
        target = np.log10(np.mean(pc, axis=1))
    target[reason != ""] = np.nan
    return TargetVector(cells, target, reason)


def tercile_split(target: TargetVector) -> TargetVector:
    """Label included cells bottom/middle/top at the 1/3 and 2/3 quantiles.

    Quantiles use linear interpolation at position (n-1)q; a value equal to
    a threshold goes to the lower tercile.
    """
    inc = target.included
    vals = target.log_gcp_pc[inc]
    if vals.size < 3:
        raise ValidationError(f"tercile split needs >= 3 included cells, got {vals.size}")
    t1, t2 = np.quantile(vals, [1.0 / 3.0, 2.0 / 3.0], method="linear")
    lab = np.full(target.cell_id.shape, -1, dtype=np.int64)
    v = target.log_gcp_pc
    lab[inc & (v <= t1)] = 0
    lab[inc & (v > t1) & (v <= t2)] = 1
    lab[inc & (v > t2)] = 2
    return replace(target, tercile=lab, thresholds=(float(t1), float(t2)))


@dataclass(frozen=True, eq=False)
class StationarityTargets:
    mean: TargetVector
    plus: TargetVector
    minus: TargetVector
    sigma: np.ndarray  # per-cell sample SD of yearly gcp_pc (NaN where excluded)


def stationarity_probe(econ: EconomyTable, years=None) -> StationarityTargets:
    """Mean target and its +/- one-standard-deviation alternatives.

    The SD is the sample SD (ddof=1) of the yearly per-capita values, applied
    before the log; cells where mean - SD <= 0 drop out of the minus variant.
    """
    years = tuple(econ.years if years is None else years)
    if len(years) < 2:
        raise ValidationError(">=2 years required for the stationarity probe")
    cells, gcp, pop, complete = _per_cell_years(econ, years)
    reason = _exclusions(gcp, pop, complete)
    pc = _gcp_pc(gcp, pop, reason)
    mean = np.mean(pc, axis=1)
    sigma = np.std(pc, axis=1, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t_mean = np.log10(mean)
        t_plus = np.log10(mean + sigma)
        lo = mean - sigma
        t_minus = np.where(lo > 0, np.log10(np.where(lo > 0, lo, 1.0)), np.nan)
    minus_reason = reason.copy()
    minus_reason[(reason == "") & ~(lo > 0)] = "nonpositive_minus_sigma"
    for arr in (t_mean, t_plus):
        arr[reason != ""] = np.nan
    t_minus[minus_reason != ""] = np.nan
    sigma = np.where(reason == "", sigma, np.nan)
    return StationarityTargets(TargetVector(cells, t_mean, reason), TargetVector(cells, t_plus, reason.copy()),
                               TargetVector(cells, t_minus, minus_reason), sigma)


def write_target(target: TargetVector, path) -> None:
    labels = target.labels()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "log_gcp_pc", "mask", "reason", "tercile"])
        for i, cid in enumerate(target.cell_id):
            inc = target.reason[i] == ""
            w.writerow([int(cid), repr(float(target.log_gcp_pc[i])) if inc else "NA",
                        "included" if inc else "excluded", target.reason[i], labels[i]])
        if target.thresholds is not None:
            fh.write(f"# tercile_thresholds,{target.thresholds[0]!r},{target.thresholds[1]!r}\n")


def read_target(path) -> TargetVector:
    ids, vals, reasons, labels = [], [], [], []
    thresholds = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if row[0].startswith("#"):
                if row[0] == "# tercile_thresholds":
                    thresholds = (float(row[1]), float(row[2]))
                continue
            if lineno == 1:
                continue
            ids.append(int(row[0]))
            vals.append(float(row[1]) if row[1] != "NA" else np.nan)
            reasons.append(row[3])
            labels.append(TERCILES.index(row[4]) if row[4] in TERCILES else -1)
    tercile = np.asarray(labels, dtype=np.int64) if thresholds is not None else None
    return TargetVector(np.asarray(ids, dtype=np.int64), np.asarray(vals, dtype=np.float64),
                        np.asarray(reasons, dtype=object), tercile, thresholds)
