"""Synthetic world with a known response, used to verify the whole pipeline.

Every climate series is ``level + seasonal + residual``. The seasonal part is
scaled so that its 12 climatological monthly means have a sample SD equal to
the cell's programmed ``sd_s``. The residual (bounded noise plus isolated
events) is demeaned per calendar month, so it leaves ``SD S`` untouched.
Up and down events are ``1.5 x base`` jumps that decay in two smaller steps;
every other step-1 change stays below the base threshold, so ``VAR +ve (1)``
and ``VAR -ve (1)`` equal the programmed event counts over ``n - 1``.
"""
from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .features import (GRADIENT_BASE, FeatureMatrix, FeatureSpec, build_feature_matrix,
                       monthly_climatology)
from .gridstore import (DEFAULT_YEARS, CellTable, EconomyTable, VariableSeries, make_cells, make_economy,
                        make_series, write_cells, write_economy, write_series)

SERIES_START = "2000-01-01"
# variable -> (cadence, level range, sd_s range, level zonality, sd_s zonality)
# zonality w in [-1, 1]: the cell's position in the range is |w| * u + (1 - |w|) * U(0, 1)
# with u = |lat| / 90 for w > 0 and 1 - |lat| / 90 for w < 0
CLIMATE = {
    "MSLP": ("six_hourly", (1005.0, 1020.0), (0.5, 8.0), 0.0, 0.7),
    "UV10": ("six_hourly", (2.0, 8.0), (0.2, 2.5), 0.5, 0.3),
    "T2": ("daily", (-5.0, 28.0), (0.5, 12.0), -0.8, 0.7),
    "DT": ("daily", (10.0, 16.0), (0.3, 2.5), -0.3, 0.3),
    "D2": ("daily", (-10.0, 20.0), (0.5, 10.0), -0.7, 0.5),
    "TP": ("daily", (5.0, 15.0), (0.2, 4.0), -0.3, 0.0),
    "RH": ("daily", (40.0, 85.0), (1.0, 15.0), 0.0, 0.0),
    "SR": ("daily", (250.0, 600.0), (10.0, 120.0), -0.8, 0.6),
    "SUND": ("daily", (5.0, 12.0), (0.2, 3.0), -0.5, 0.5),
}
SERIES_VARIABLES = ("MSLP", "UV10", "T2", "TMIN", "TMAX", "D2", "TP", "RH", "SR", "SUND")
NOISE_FRACTION = 0.1  # residual noise half-width relative to the base threshold
EVENT_JUMP = 1.5  # event jump relative to the base threshold
EVENT_SPAN = 3
EVENT_RANGE = (0.01, 0.15)  # per-sign event frequency range
TRANSFORMS = ("linear", "quadratic", "step", "interaction")
_STREAMS = {v: i for i, v in enumerate(("cells", "economy", "target") + tuple(CLIMATE))}


@dataclass(frozen=True)
class Driver:
    """One term ``weight * transform(predictor)`` of the log10 response.

    ``center``/``scale`` default to the cell median and SD of the predictor.
    ``step`` is ``1[v > center]``; ``interaction`` multiplies the standardised
    predictor by the standardised ``partner`` predictor(s).
    """

    predictor: str
    weight: float
    transform: str = "linear"
    center: float | None = None
    scale: float | None = None
    partner: str | tuple | None = None

    def __post_init__(self):
        if isinstance(self.partner, list):
            object.__setattr__(self, "partner", tuple(self.partner))
        if self.transform not in TRANSFORMS:
            raise ValidationError(f"unknown transform {self.transform!r}")
        if not math.isfinite(self.weight):
            raise ValidationError("driver weight must be finite")
        if (self.transform == "interaction") != (self.partner is not None):
            raise ValidationError("interaction drivers need a partner predictor (and only they)")
        for name in self.names():
            FeatureSpec.parse(name)

    @property
    def partners(self) -> tuple:
        if self.partner is None:
            return ()
        return (self.partner,) if isinstance(self.partner, str) else tuple(self.partner)

    def names(self):
        return [self.predictor] + list(self.partners)


# three predictors; the interaction term keeps the response out of reach of additive models
DEFAULT_DRIVERS = (
    Driver("Latitude", 1.125, "quadratic", center=0.0, scale=40.0),
    Driver("MSLP SD S", 1.375, "step", center=4.25),
    Driver("Distance to Major River", -1.25, "step", center=300.0),
    Driver("Latitude", 1.6, "interaction", partner=("MSLP SD S", "Distance to Major River")),
)


@dataclass(frozen=True)
class WorldConfig:
    n_cells: int = 2000
    years: tuple = DEFAULT_YEARS
    series_years: int = 4
    drivers: tuple = DEFAULT_DRIVERS
    noise_sd: float = 0.15
    base_level: float = 3.2
    region: tuple | None = None  # (lat_min, lat_max, lon_min, lon_max)
    region_offset: float = 0.0
    year_sd: float = 0.05
    population_range: tuple = (1e2, 1e6)
    lat_range: tuple = (-60.0, 75.0)
    missing_rate: float = 0.0
    flat_climate: bool = False
    event_range: tuple | None = None  # per-sign event frequency range override
    event_range_down: tuple | None = None  # separate range for down events (defaults to event_range)
    zonal: float = 0.0  # 0 makes climate statistics independent of latitude

    def __post_init__(self):
        if self.n_cells < 1:
            raise ValidationError("n_cells must be >= 1")
        if self.noise_sd < 0 or self.year_sd < 0:
            raise ValidationError("noise_sd and year_sd must be >= 0")
        if not 0 <= self.missing_rate < 1:
            raise ValidationError("missing_rate must be in [0, 1)")
        lo, hi = self.lat_range
        n_lattice = int(round(hi - lo)) * 360
        if self.n_cells > n_lattice:
            raise ValidationError(f"lat_range holds only {n_lattice} cells")
        if self.region is None and self.region_offset != 0.0:
            raise ValidationError("region_offset needs a region")

    @property
    def n_days(self) -> int:
        start = np.datetime64(SERIES_START, "D")
        end = np.datetime64(f"{int(SERIES_START[:4]) + self.series_years}-01-01", "D")
        return int((end - start).astype(np.int64))

    def n_steps(self, cadence: str) -> int:
        return self.n_days * (4 if cadence == "six_hourly" else 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["drivers"] = [asdict(x) for x in self.drivers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        if "drivers" in d:
            d["drivers"] = tuple(Driver(**x) for x in d["drivers"])
        for key in ("years", "population_range", "lat_range", "region", "event_range", "event_range_down"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def _rng(seed, stream):
    return np.random.default_rng([int(seed), _STREAMS[stream]])


def _timestamps(cadence, n):
    step = np.timedelta64(6, "h") if cadence == "six_hourly" else np.timedelta64(1, "D")
    return np.datetime64(SERIES_START, "s") + np.arange(n) * step.astype("timedelta64[s]")


def _months(ts):
    return ts.astype("datetime64[M]").astype(np.int64) % 12 + 1


def seasonal_shape(timestamps) -> np.ndarray:
    """Annual sine rescaled so its 12 monthly climatological means have SD 1."""
    day = (timestamps - np.datetime64(SERIES_START, "s")).astype(np.float64) / 86400.0
    g = np.sin(2.0 * np.pi * day / 365.25)
    mg = monthly_climatology(g[None, :], _months(timestamps))[0]
    return g / np.std(mg, ddof=1)


def _event_onsets(rng, n, k):
    # k onsets in [1, n-3], at least EVENT_SPAN apart so events never overlap
    m = (n - 3) - EVENT_SPAN * (k - 1)
    c = np.sort(rng.choice(m + k - 1, size=k, replace=False, shuffle=False))
    return c + (EVENT_SPAN - 1) * np.arange(k) + 1


def _max_events(n):
    return max((n - 1) // EVENT_SPAN, 0)


def _zonal(rng, lo, hi, w, abs_lat, zonal):
    w = w * zonal
    u = abs_lat / 90.0 if w >= 0 else 1.0 - abs_lat / 90.0
    return lo + (hi - lo) * (abs(w) * u + (1.0 - abs(w)) * rng.uniform(0.0, 1.0, abs_lat.size))


def _climate_block(rng, var, abs_lat, ts, flat, missing_rate, event_range=None, zonal=0.0, event_range_down=None):
    """(values, programmed sd_s, programmed +ve (1) and -ve (1) frequencies) for one variable.

    An up event jumps by ``1.5 base`` and decays in two steps of ``0.75 base``;
    a down event mirrors it. Only the jump crosses the step-1 threshold.
    """
    cadence, (lo, hi), (slo, shi), wl, ws = CLIMATE[var]
    n = ts.size
    n_cells = abs_lat.size
    level = _zonal(rng, lo, hi, wl, abs_lat, zonal)
    if flat:
        zero = np.zeros(n_cells)
        return np.repeat(level[:, None], n, axis=1), zero, zero, zero.copy()
    base = GRADIENT_BASE[var]
    sd_s = _zonal(rng, slo, shi, ws, abs_lat, zonal)
    erange = EVENT_RANGE if event_range is None else event_range
    f_up = rng.uniform(*erange, n_cells)
    f_dn = rng.uniform(*(erange if event_range_down is None else event_range_down), n_cells)
    k_up = np.rint(f_up * (n - 1)).astype(np.int64)
    k_dn = np.rint(f_dn * (n - 1)).astype(np.int64)
    over = np.maximum(k_up + k_dn - _max_events(n), 0)
    k_up -= (over + 1) // 2
    k_dn -= over // 2
    k_up, k_dn = np.maximum(k_up, 0), np.maximum(k_dn, 0)
    resid = rng.uniform(-NOISE_FRACTION * base, NOISE_FRACTION * base, (n_cells, n))
    shape = np.array([EVENT_JUMP, EVENT_JUMP / 2.0]) * base
    for i in range(n_cells):
        k = int(k_up[i] + k_dn[i])
        if k == 0:
            continue
        onset = _event_onsets(rng, n, k)
        sign = np.ones(k)
        sign[rng.permutation(k)[: k_dn[i]]] = -1.0
        resid[i, onset] += sign * shape[0]
        resid[i, onset + 1] += sign * shape[1]
    months = _months(ts)
    clim = monthly_climatology(resid, months)
    resid -= clim[:, months - 1]
    values = resid
    values += level[:, None]
    values += sd_s[:, None] * seasonal_shape(ts)[None, :]
    if missing_rate > 0:
        values[rng.random(values.shape) < missing_rate] = np.nan
    return values, sd_s, k_up / (n - 1), k_dn / (n - 1)


class WorldSeries(Mapping):
    """Lazy variable -> VariableSeries mapping; each access regenerates the series."""

    def __init__(self, world: "World"):
        self._world = world
        self._pending = {}  # the unrequested half of a Tmin/Tmax pair

    def __contains__(self, var):
        return var in SERIES_VARIABLES

    def __getitem__(self, var):
        if var not in SERIES_VARIABLES:
            raise KeyError(var)
        if var in self._pending:
            return self._pending.pop(var)
        if var in ("TMIN", "TMAX"):
            tmin, tmax = self._world._temperature_extremes()
            self._pending = {"TMAX": tmax} if var == "TMIN" else {"TMIN": tmin}
            return tmin if var == "TMIN" else tmax
        return self._world.series(var)

    def __iter__(self):
        return iter(SERIES_VARIABLES)

    def __len__(self):
        return len(SERIES_VARIABLES)


@dataclass(eq=False)
class World:
    config: WorldConfig
    seed: int
    cells: CellTable
    economy: EconomyTable
    truth: np.ndarray  # noiseless f(geography, climate) + regional offset, log10 USD/person
    target: np.ndarray  # realised log10 GCP-PC (truth + noise)
    in_region: np.ndarray
    driver_values: dict
    programmed: dict = field(default_factory=dict)  # var -> {"sd_s", "up1", "down1"}

    @property
    def series_map(self) -> WorldSeries:
        return WorldSeries(self)

    def _block(self, var):
        cadence = CLIMATE[var][0]
        ts = _timestamps(cadence, self.config.n_steps(cadence))
        values, sd_s, up, down = _climate_block(_rng(self.seed, var), var, np.abs(self.cells.lat), ts,
                                                self.config.flat_climate, self.config.missing_rate,
                                                self.config.event_range, self.config.zonal,
                                                self.config.event_range_down)
        self.programmed[var] = {"sd_s": sd_s, "up1": up, "down1": down}
        return ts, values

    def series(self, var) -> VariableSeries:
        if var in ("TMIN", "TMAX"):
            tmin, tmax = self._temperature_extremes()
            return tmin if var == "TMIN" else tmax
        ts, values = self._block(var)
        return make_series(var, CLIMATE[var][0], ts, self.cells.cell_id, values)

    def _temperature_extremes(self):
        """Six-hourly Tmin/Tmax whose daily excursion equals the programmed DT series."""
        days_ts, dt = self._block("DT")
        rng = np.random.default_rng([int(self.seed), _STREAMS["DT"], 1])
        n_cells, n_days = dt.shape
        centre = rng.uniform(-5.0, 25.0, n_cells)[:, None] + np.zeros((1, n_days))
        quarter = np.where(np.isnan(dt), 0.0, dt) / 4.0
        u = rng.uniform(0.0, 1.0, (n_cells, n_days, 4)) * quarter[..., None]
        v = rng.uniform(0.0, 1.0, (n_cells, n_days, 4)) * quarter[..., None]
        u[np.arange(n_cells)[:, None], np.arange(n_days)[None, :], rng.integers(0, 4, (n_cells, n_days))] = 0.0
        v[np.arange(n_cells)[:, None], np.arange(n_days)[None, :], rng.integers(0, 4, (n_cells, n_days))] = 0.0
        half = (dt / 2.0)[..., None]
        tmax = (centre[..., None] + half - u).reshape(n_cells, n_days * 4)
        tmin = (centre[..., None] - half + v).reshape(n_cells, n_days * 4)
        ts = _timestamps("six_hourly", n_days * 4)
        return (make_series("TMIN", "six_hourly", ts, self.cells.cell_id, tmin),
                make_series("TMAX", "six_hourly", ts, self.cells.cell_id, tmax))

    def features(self, specs=None) -> FeatureMatrix:
        return build_feature_matrix(self.cells, self.series_map, specs)


def _make_cells(cfg: WorldConfig, rng) -> CellTable:
    lo, hi = cfg.lat_range
    rows = int(round(hi - lo))
    flat = np.sort(rng.choice(rows * 360, size=cfg.n_cells, replace=False))
    lat = hi - 0.5 - flat // 360
    lon = -179.5 + flat % 360
    cell_id = ((89.5 - lat) * 360 + (lon + 179.5)).astype(np.int64)
    n = cfg.n_cells
    return make_cells(
        cell_id, lat, lon,
        elevation=rng.gamma(1.5, 400.0, n),
        dist_coast_1=rng.exponential(300.0, n),
        dist_coast_2=rng.exponential(500.0, n),
        dist_lake=rng.exponential(200.0, n),
        dist_major_river=rng.exponential(400.0, n),
        dist_river=rng.exponential(100.0, n),
        dist_ocean=rng.exponential(600.0, n),
        vegetation=rng.integers(0, 32, n).astype(np.float64),
        soil=rng.integers(0, 251, n).astype(np.float64),
    )


def _standard(v, center, scale):
    c = float(np.median(v)) if center is None else center
    s = float(np.std(v)) if scale is None else scale
    return (v - c) / (s if s > 0 else 1.0), c


def driver_response(drivers, values: dict, n: int | None = None) -> np.ndarray:
    """Sum of weighted driver transforms for predictor columns in ``values``."""
    if n is None:
        n = len(next(iter(values.values()))) if values else 0
    out = np.zeros(n)
    for d in drivers:
        v = values[d.predictor]
        z, c = _standard(v, d.center, d.scale)
        if d.transform == "linear":
            term = z
        elif d.transform == "quadratic":
            term = z * z
        elif d.transform == "step":
            term = (v > c).astype(np.float64)
        else:
            term = z
            for other in d.partners:
                term = term * _standard(values[other], None, None)[0]
        out += d.weight * term
    return out


def generate(config: WorldConfig | None = None, seed: int = 0) -> World:
    """Build cells, economy and (lazy) climate for one seeded world."""
    cfg = config or WorldConfig()
    cells = _make_cells(cfg, _rng(seed, "cells"))
    names = sorted({n for d in cfg.drivers for n in d.names()})
    world = World(cfg, int(seed), cells, None, None, None, None, {})
    if names:
        fm = build_feature_matrix(cells, world.series_map, names)
        if fm.missing.any():
            raise ValidationError("driver predictors are missing for some cells; lower missing_rate")
        driver_values = {n: fm.column(n).copy() for n in names}
    else:
        driver_values = {}
    world.programmed.clear()
    if cfg.region is not None:
        la0, la1, lo0, lo1 = cfg.region
        in_region = (cells.lat >= la0) & (cells.lat <= la1) & (cells.lon >= lo0) & (cells.lon <= lo1)
    else:
        in_region = np.zeros(len(cells), dtype=bool)
    truth = cfg.base_level + driver_response(cfg.drivers, driver_values, len(cells)) + cfg.region_offset * in_region
    trng = _rng(seed, "target")
    target = truth + cfg.noise_sd * trng.standard_normal(len(cells))

    erng = _rng(seed, "economy")
    k = len(cfg.years)
    e = erng.standard_normal((len(cells), k)) * cfg.year_sd
    mult = 1.0 + e - e.mean(axis=1, keepdims=True)
    p0, p1 = cfg.population_range
    pop = np.floor(10.0 ** erng.uniform(math.log10(p0), math.log10(p1), (len(cells), 1)) * (1.0 + 0.01 * np.arange(k)))
    gcp = pop * (10.0 ** target)[:, None] * mult
    world.economy = make_economy(np.repeat(cells.cell_id, k), np.tile(np.asarray(cfg.years), len(cells)),
                                 gcp.ravel(), pop.ravel(), cfg.years)
    world.truth, world.target, world.in_region, world.driver_values = truth, target, in_region, driver_values
    return world


@dataclass
class OracleReport:
    checks: list  # (feature, n_cells, max_abs_error, tolerance, passed)
    mismatches: list  # (feature, cell_id, expected, derived)

    @property
    def ok(self) -> bool:
        return all(c[4] for c in self.checks)

    def summary(self) -> str:
        lines = [f"{'ok' if c[4] else 'FAIL'} {c[0]}: n={c[1]} max_err={c[2]:.3g} tol={c[3]:.3g}" for c in self.checks]
        lines += [f"mismatch {f} cell {cid}: expected {e!r}, derived {g!r}" for f, cid, e, g in self.mismatches[:20]]
        return "\n".join(lines)


def oracle_check(world: World, fm: FeatureMatrix, sd_s_rel: float = 0.02, freq_abs: float = 0.02) -> OracleReport:
    """Compare derived features against the values the world programmed.

    ``programmed`` is filled as series are generated, so derive ``fm`` from
    this world (``world.features()``) before calling.
    """
    fm = fm.align(world.cells.cell_id)
    checks, mismatches = [], []

    def compare(name, expected, tol, relative):
        if name not in fm.names:
            return
        got = fm.column(name)
        err = np.abs(got - expected)
        bound = tol * np.abs(expected) if relative else np.full(expected.shape, tol)
        if world.config.flat_climate:
            bad = got != expected
        else:
            bad = ~(err <= bound) & ~np.isnan(got)
        checks.append((name, int(expected.size), float(np.nanmax(err)) if err.size else 0.0, tol, not bad.any()))
        for i in np.nonzero(bad)[0][:5]:
            mismatches.append((name, int(fm.cell_id[i]), float(expected[i]), float(got[i])))

    for var, prog in sorted(world.programmed.items()):
        compare(f"{var} SD S", prog["sd_s"], sd_s_rel, True)
        compare(f"{var} +ve (1)", prog["up1"], freq_abs, False)
        compare(f"{var} -ve (1)", prog["down1"], freq_abs, False)
        if world.config.flat_climate:
            for label in ("SD",) + tuple(f"{s}ve ({k})" for s in "+-" for k in range(2, 6)):
                compare(f"{var} {label}", np.zeros(len(world.cells)), 0.0, False)
    for key, arr in world.cells.geography.items():
        spec = FeatureSpec(key, "geo")
        compare(spec.name, arr, 0.0, False)
    return OracleReport(checks, mismatches)


def write_world(world: World, outdir, series_format: str = "binary") -> dict:
    """Write cells, economy, every climate series and the truth table; returns the paths."""
    out = Path(outdir)
    (out / "series").mkdir(parents=True, exist_ok=True)
    paths = {"cells": out / "cells.csv", "economy": out / "economy.csv", "truth": out / "truth.csv",
             "world": out / "world.json", "series": {}}
    write_cells(world.cells, paths["cells"])
    write_economy(world.economy, paths["economy"])
    ext = ".geof" if series_format == "binary" else ".csv"
    for var in SERIES_VARIABLES:
        p = out / "series" / f"{var}{ext}"
        write_series(world.series(var), p, series_format)
        paths["series"][var] = p
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        names = sorted(world.driver_values)
        fh.write(",".join(["cell_id", "truth", "target", "in_region"] + [f'"{n}"' for n in names]) + "\n")
        for i, cid in enumerate(world.cells.cell_id):
            row = [str(int(cid)), repr(float(world.truth[i])), repr(float(world.target[i])), str(int(world.in_region[i]))]
            row += [repr(float(world.driver_values[n][i])) for n in names]
            fh.write(",".join(row) + "\n")
    with open(paths["world"], "w", encoding="utf-8") as fh:
        json.dump({"seed": world.seed, "config": world.config.to_dict(),
                   "series": {v: CLIMATE[v if v in CLIMATE else "DT"][0] if v not in ("TMIN", "TMAX") else "six_hourly"
                              for v in SERIES_VARIABLES}}, fh, indent=2, sort_keys=True)
    return paths
