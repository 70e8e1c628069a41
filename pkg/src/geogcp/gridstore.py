"""Grid cells, economy records and climate series: data model and ingestion.

CSV conventions: UTF-8, one header row, ``.`` decimal separator, ISO-8601
timestamps, missing samples written as ``NA`` (an empty field is read as
missing too). Binary files use the ``GEOF`` container from :mod:`binfmt`.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binfmt import KIND_SERIES, KIND_TABLE, read_geof, write_geof
from .errors import ValidationError

logger = logging.getLogger(__name__)

# geography attribute key -> predictor name
GEOGRAPHY = {
    "latitude": "Latitude",
    "elevation": "Elevation",
    "dist_coast_1": "Distance to coast 1",
    "dist_coast_2": "Distance to coast 2",
    "dist_lake": "Distance to Lake",
    "dist_major_river": "Distance to Major River",
    "dist_river": "Distance to River",
    "dist_ocean": "Distance to Ocean",
    "vegetation": "Vegetation category",
    "soil": "Soil category",
}
DISTANCES = ("dist_coast_1", "dist_coast_2", "dist_lake", "dist_major_river", "dist_river", "dist_ocean")
CATEGORY_RANGES = {"vegetation": (0, 31), "soil": (0, 250)}
CELL_COLUMNS = ("cell_id", "lat", "lon") + tuple(k for k in GEOGRAPHY if k != "latitude")

VARIABLES = ("MSLP", "UV10", "T2", "TMIN", "TMAX", "D2", "TP", "RH", "SR", "SUND", "DT")
CADENCES = {"six_hourly": np.timedelta64(6, "h"), "daily": np.timedelta64(1, "D")}
DEFAULT_YEARS = (1990, 1995, 2000, 2005)
MISSING_TOKENS = {"", "NA", "NaN", "nan"}


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"format must be 'csv' or 'binary', got {fmt!r}")
        return fmt
    return "binary" if Path(path).suffix.lower() in (".geof", ".bin") else "csv"


def _require(path):
    if not Path(path).exists():
        raise FileNotFoundError(f"input not found: {path}")


def _float(text, line, column):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"line {line}, column {column}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ValidationError(f"line {line}, column {column}: non-finite value {text!r}")
    return value


def _int(text, line, column):
    value = _float(text, line, column)
    if value != int(value):
        raise ValidationError(f"line {line}, column {column}: expected an integer, got {text!r}")
    return int(value)


def _read_csv(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ValidationError(f"{path}: header lacks column(s) {', '.join(missing)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
            rows.append((lineno, dict(zip(header, (c.strip() for c in row)))))
    return header, rows


# --------------------------------------------------------------------------- cells


@dataclass(frozen=True, eq=False)
class CellTable:
    """Grid cells sorted by ``cell_id`` with their Table-2 style attributes."""

    cell_id: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    geography: dict

    def __post_init__(self):
        validate_cells(self)

    def __len__(self):
        return int(self.cell_id.shape[0])

    def index_of(self, cell_ids) -> np.ndarray:
        pos = np.searchsorted(self.cell_id, cell_ids)
        pos = np.clip(pos, 0, len(self) - 1)
        if not np.array_equal(self.cell_id[pos], np.asarray(cell_ids)):
            raise ValidationError("unknown cell id(s) requested")
        return pos

    def subset(self, cell_ids) -> "CellTable":
        pos = self.index_of(np.sort(np.asarray(cell_ids, dtype=np.int64)))
        return CellTable(self.cell_id[pos], self.lat[pos], self.lon[pos],
                         {k: v[pos] for k, v in self.geography.items()})


def validate_cells(cells: CellTable) -> None:
    ids = cells.cell_id
    if ids.ndim != 1 or cells.lat.shape != ids.shape or cells.lon.shape != ids.shape:
        raise ValidationError("cell arrays must be 1-D and equally long")
    if np.any(np.diff(ids) <= 0):
        dup = ids[:-1][np.diff(ids) == 0]
        if dup.size:
            raise ValidationError(f"duplicate cell {int(dup[0])}")
        raise ValidationError("cell ids must be sorted")
    if set(cells.geography) != set(GEOGRAPHY):
        raise ValidationError(f"geography must hold exactly {sorted(GEOGRAPHY)}")
    if np.any(np.abs(cells.lat) > 90) or np.any((cells.lon < -180) | (cells.lon >= 180)):
        raise ValidationError("lat must lie in [-90, 90] and lon in [-180, 180)")
    for name, arr in (("lat", cells.lat), ("lon", cells.lon)):
        off = arr - 0.5
        if np.any(np.abs(off - np.round(off)) > 1e-9):
            bad = int(ids[np.argmax(np.abs(off - np.round(off)) > 1e-9)])
            raise ValidationError(f"cell {bad}: {name} is not a 1-degree cell centre")
    key = np.round(cells.lat * 2).astype(np.int64) * 1000 + np.round(cells.lon * 2).astype(np.int64)
    if np.unique(key).size != key.size:
        raise ValidationError("two cells share the same (lat, lon)")
    for name in DISTANCES:
        if np.any(cells.geography[name] < 0):
            raise ValidationError(f"{name} must be >= 0")
    for name, (lo, hi) in CATEGORY_RANGES.items():
        v = cells.geography[name]
        if np.any((v < lo) | (v > hi)) or np.any(v != np.round(v)):
            raise ValidationError(f"{name} category out of range [{lo}, {hi}]")
    if not np.array_equal(cells.geography["latitude"], cells.lat):
        raise ValidationError("latitude attribute must equal lat")


def make_cells(cell_id, lat, lon, **attrs) -> CellTable:
    """Build a CellTable from columns in any order (sorted by cell id)."""
    cell_id = np.asarray(cell_id, dtype=np.int64)
    order = np.argsort(cell_id, kind="stable")
    lat = np.asarray(lat, dtype=np.float64)[order]
    geo = {"latitude": lat}
    for key in GEOGRAPHY:
        if key == "latitude":
            continue
        if key not in attrs:
            raise ValidationError(f"missing geography attribute {key}")
        geo[key] = np.asarray(attrs[key], dtype=np.float64)[order]
    return CellTable(cell_id[order], lat, np.asarray(lon, dtype=np.float64)[order], geo)


def load_cells(path, format: str | None = None) -> CellTable:
    """Read a cell table from CSV or GEOF and validate it."""
    _require(path)
    if _infer_format(path, format) == "binary":
        _, ids, values, meta = read_geof(path, KIND_TABLE)
        cols = dict(zip(meta["columns"], values.T))
        missing = [c for c in CELL_COLUMNS[1:] if c not in cols]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
        return _cells_from_columns(ids, cols)
    header, rows = _read_csv(path, CELL_COLUMNS)
    cols = {c: [] for c in CELL_COLUMNS}
    ids = []
    seen = set()
    for lineno, rec in rows:
        cid = _int(rec["cell_id"], lineno, "cell_id")
        if cid in seen:
            raise ValidationError(f"line {lineno}: duplicate cell {cid}")
        seen.add(cid)
        ids.append(cid)
        for c in CELL_COLUMNS[1:]:
            v = _float(rec[c], lineno, c)
            if c in CATEGORY_RANGES:
                lo, hi = CATEGORY_RANGES[c]
                if v != int(v) or not lo <= v <= hi:
                    raise ValidationError(f"line {lineno}, column {c}: category {rec[c]} out of range [{lo}, {hi}]")
            elif c in DISTANCES and v < 0:
                raise ValidationError(f"line {lineno}, column {c}: negative distance {rec[c]}")
            cols[c].append(v)
        if "latitude" in rec and _float(rec["latitude"], lineno, "latitude") != cols["lat"][-1]:
            raise ValidationError(f"line {lineno}, column latitude: differs from lat")
    return _cells_from_columns(np.asarray(ids, dtype=np.int64), {c: np.asarray(v) for c, v in cols.items() if c != "cell_id"})


def _cells_from_columns(ids, cols):
    attrs = {k: cols[k] for k in CELL_COLUMNS[3:]}
    return make_cells(ids, cols["lat"], cols["lon"], **attrs)


def write_cells(cells: CellTable, path, format: str | None = None) -> None:
    cols = [cells.lat, cells.lon] + [cells.geography[k] for k in CELL_COLUMNS[3:]]
    if _infer_format(path, format) == "binary":
        write_geof(path, KIND_TABLE, cells.cell_id, np.column_stack(cols), {"table": "cells", "columns": list(CELL_COLUMNS[1:])})
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_COLUMNS)
        for i, cid in enumerate(cells.cell_id):
            w.writerow([int(cid)] + [_fmt(c[i], integer=k in CATEGORY_RANGES) for k, c in zip(CELL_COLUMNS[1:], cols)])


def _fmt(value, integer=False):
    if value != value:
        return "NA"
    if integer:
        return str(int(value))
    return repr(float(value))


# --------------------------------------------------------------------------- economy


@dataclass(frozen=True, eq=False)
class EconomyTable:
    """GCP (USD) and population per (cell, year), sorted by cell then year."""

    cell_id: np.ndarray
    year: np.ndarray
    gcp: np.ndarray
    population: np.ndarray
    years: tuple = DEFAULT_YEARS
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.gcp < 0) or np.any(self.population < 0):
            raise ValidationError("gcp and population must be >= 0")
        key = self.cell_id * 10000 + self.year
        if np.any(np.diff(key) <= 0):
            raise ValidationError("economy records must be unique per (cell_id, year) and sorted")
        if not np.isin(self.year, self.years).all():
            raise ValidationError("economy years outside the configured list")

    def __len__(self):
        return int(self.cell_id.shape[0])

    @property
    def cells(self) -> np.ndarray:
        return np.unique(self.cell_id)

    def scaled(self, factor: float) -> "EconomyTable":
        return EconomyTable(self.cell_id, self.year, self.gcp * factor, self.population, self.years)


def make_economy(cell_id, year, gcp, population, years=DEFAULT_YEARS, known_cells=None) -> EconomyTable:
    cell_id = np.asarray(cell_id, dtype=np.int64)
    year = np.asarray(year, dtype=np.int64)
    gcp = np.asarray(gcp, dtype=np.float64)
    population = np.asarray(population, dtype=np.float64)
    if np.any(gcp < 0):
        raise ValidationError(f"negative gcp for cell {int(cell_id[np.argmax(gcp < 0)])}")
    if np.any(population < 0):
        raise ValidationError(f"negative population for cell {int(cell_id[np.argmax(population < 0)])}")
    keep = np.isin(year, np.asarray(years))
    counts = {"read": int(cell_id.size), "retained": int(keep.sum()), "dropped_years": int((~keep).sum())}
    cell_id, year, gcp, population = cell_id[keep], year[keep], gcp[keep], population[keep]
    order = np.lexsort((year, cell_id))
    cell_id, year, gcp, population = cell_id[order], year[order], gcp[order], population[order]
    dup = (np.diff(cell_id) == 0) & (np.diff(year) == 0)
    if dup.any():
        i = int(np.argmax(dup))
        raise ValidationError(f"duplicate economy record for cell {int(cell_id[i])}, year {int(year[i])}")
    if known_cells is not None:
        unknown = np.setdiff1d(np.unique(cell_id), np.asarray(known_cells))
        counts["unknown_cells"] = int(unknown.size)
        if unknown.size:
            logger.warning("economy table references %d cell(s) absent from the cell table (e.g. %d)",
                           unknown.size, int(unknown[0]))
    return EconomyTable(cell_id, year, gcp, population, tuple(int(y) for y in years), counts)


def load_economy(path, years=DEFAULT_YEARS, known_cells=None, format: str | None = None) -> EconomyTable:
    """Read economy records; rows from years outside ``years`` are dropped."""
    _require(path)
    if _infer_format(path, format) == "binary":
        _, ids, values, meta = read_geof(path, KIND_TABLE)
        cols = dict(zip(meta["columns"], values.T))
        return make_economy(ids, cols["year"], cols["gcp_usd"], cols["population"], years, known_cells)
    _, rows = _read_csv(path, ("cell_id", "year", "gcp_usd", "population"))
    cid, yr, gcp, pop = [], [], [], []
    for lineno, rec in rows:
        cid.append(_int(rec["cell_id"], lineno, "cell_id"))
        yr.append(_int(rec["year"], lineno, "year"))
        g = _float(rec["gcp_usd"], lineno, "gcp_usd")
        p = _float(rec["population"], lineno, "population")
        if g < 0:
            raise ValidationError(f"line {lineno}, column gcp_usd: negative gcp {rec['gcp_usd']}")
        if p < 0:
            raise ValidationError(f"line {lineno}, column population: negative population {rec['population']}")
        gcp.append(g)
        pop.append(p)
    return make_economy(cid, yr, gcp, pop, years, known_cells)


def write_economy(econ: EconomyTable, path, format: str | None = None) -> None:
    if _infer_format(path, format) == "binary":
        values = np.column_stack([econ.year.astype(np.float64), econ.gcp, econ.population])
        write_geof(path, KIND_TABLE, econ.cell_id, values,
                   {"table": "economy", "columns": ["year", "gcp_usd", "population"]})
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "year", "gcp_usd", "population"])
        for c, y, g, p in zip(econ.cell_id, econ.year, econ.gcp, econ.population):
            w.writerow([int(c), int(y), repr(float(g)), repr(float(p))])


# --------------------------------------------------------------------------- series


@dataclass(frozen=True, eq=False)
class VariableSeries:
    """One climate variable sampled at a uniform cadence for every cell.

    ``values`` is cells x time steps; NaN marks a missing sample and
    ``missing`` exposes the flags explicitly.
    """

    variable_id: str
    cadence: str
    start: np.datetime64
    cell_id: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.variable_id not in VARIABLES:
            raise ValidationError(f"unknown variable {self.variable_id!r}")
        if self.cadence not in CADENCES:
            raise ValidationError(f"unknown cadence {self.cadence!r}")
        if self.values.ndim != 2 or self.values.shape[0] != self.cell_id.shape[0]:
            raise ValidationError("series values must be (cells, steps)")
        if np.isinf(self.values).any():
            raise ValidationError("series values must be finite or missing")

    @property
    def step(self) -> np.timedelta64:
        return CADENCES[self.cadence]

    @property
    def n_steps(self) -> int:
        return int(self.values.shape[1])

    @property
    def timestamps(self) -> np.ndarray:
        return np.datetime64(self.start, "s") + np.arange(self.n_steps) * self.step.astype("timedelta64[s]")

    @property
    def months(self) -> np.ndarray:
        """Calendar month (1-12) of every time step."""
        ts = self.timestamps
        return (ts.astype("datetime64[M]").astype(np.int64) % 12 + 1).astype(np.int64)

    @property
    def days(self) -> np.ndarray:
        """Day index (days since epoch) of every time step."""
        return self.timestamps.astype("datetime64[D]").astype(np.int64)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def row(self, cell_id) -> np.ndarray:
        pos = np.searchsorted(self.cell_id, cell_id)
        if pos >= self.cell_id.size or self.cell_id[pos] != cell_id:
            raise KeyError(cell_id)
        return self.values[pos]

    def aligned(self, cells: CellTable) -> "VariableSeries":
        """Restrict/reorder rows to ``cells``; every cell must be present."""
        pos = np.searchsorted(self.cell_id, cells.cell_id)
        pos_c = np.clip(pos, 0, max(self.cell_id.size - 1, 0))
        ok = (pos < self.cell_id.size) & (self.cell_id[pos_c] == cells.cell_id)
        if not ok.all():
            miss = cells.cell_id[~ok]
            raise ValidationError(f"series {self.variable_id} lacks cell(s): " + ", ".join(map(str, miss[:20]))
                                  + (" ..." if miss.size > 20 else ""))
        if pos.size == self.cell_id.size and np.array_equal(pos, np.arange(pos.size)):
            return self
        return VariableSeries(self.variable_id, self.cadence, self.start, cells.cell_id.copy(), self.values[pos_c])


def _check_uniform(timestamps, cadence, where):
    if timestamps.size < 2:
        return
    d = np.diff(timestamps)
    step = CADENCES[cadence].astype("timedelta64[s]")
    if np.any(d <= np.timedelta64(0, "s")):
        raise ValidationError(f"{where}: timestamps are not strictly increasing")
    if np.any(d != step):
        i = int(np.argmax(d != step))
        raise ValidationError(f"{where}: non-uniform cadence at {timestamps[i + 1]} (expected {cadence} spacing)")


def make_series(variable_id, cadence, timestamps, cell_id, values) -> VariableSeries:
    timestamps = np.asarray(timestamps, dtype="datetime64[s]")
    _check_uniform(timestamps, cadence, variable_id)
    cell_id = np.asarray(cell_id, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(cell_id, kind="stable")
    if np.any(np.diff(cell_id[order]) == 0):
        raise ValidationError("duplicate cell column in series")
    return VariableSeries(variable_id, cadence, timestamps[0], cell_id[order], np.ascontiguousarray(values[order]))


def load_series(path, variable_id, cadence, cells: CellTable | None = None, format: str | None = None) -> VariableSeries:
    """Read one variable; rows are timestamps and columns cell ids (CSV) or GEOF."""
    _require(path)
    if _infer_format(path, format) == "binary":
        _, ids, values, meta = read_geof(path, KIND_SERIES)
        if meta.get("variable_id") not in (None, variable_id):
            raise ValidationError(f"{path}: holds {meta['variable_id']}, expected {variable_id}")
        if meta.get("cadence") != cadence:
            raise ValidationError(f"{path}: cadence {meta.get('cadence')}, expected {cadence}")
        if "timestamps" in meta:
            ts = np.asarray(meta["timestamps"], dtype="datetime64[s]")
        else:
            ts = np.datetime64(meta["start"], "s") + np.arange(values.shape[1]) * CADENCES[cadence].astype("timedelta64[s]")
        series = make_series(variable_id, cadence, ts, ids, values)
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0].strip() != "timestamp":
                raise ValidationError(f"{path}: first column must be 'timestamp'")
            ids = [_int(h, 1, h) for h in header[1:]]
            stamps, rows = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ValidationError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
                try:
                    stamps.append(np.datetime64(row[0].strip().replace("Z", ""), "s"))
                except ValueError:
                    raise ValidationError(f"line {lineno}, column timestamp: bad timestamp {row[0]!r}") from None
                rows.append([np.nan if c.strip() in MISSING_TOKENS else _float(c, lineno, header[j + 1])
                             for j, c in enumerate(row[1:])])
        values = np.asarray(rows, dtype=np.float64).T.reshape(len(ids), len(rows))
        series = make_series(variable_id, cadence, np.asarray(stamps), ids, values)
    if cells is not None:
        series = series.aligned(cells)
    return series


def write_series(series: VariableSeries, path, format: str | None = None) -> None:
    if _infer_format(path, format) == "binary":
        meta = {"variable_id": series.variable_id, "cadence": series.cadence,
                "start": str(np.datetime64(series.start, "s"))}
        write_geof(path, KIND_SERIES, series.cell_id, series.values, meta)
        return
    ts = series.timestamps
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + [str(int(c)) for c in series.cell_id])
        for j in range(series.n_steps):
            w.writerow([str(ts[j])] + [_fmt(v) for v in series.values[:, j]])
