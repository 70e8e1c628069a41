"""Acceptance criteria, one test per criterion.

Each test prints ``ACn PASS|FAIL <measurements>`` as it finishes and the lines
are repeated in the terminal summary. Deselect with ``-m "not acceptance"``.
Worlds and the 5-fold RF runs are cached for the session so that AC3, AC4,
AC5 and AC6 share them.
"""
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from geogcp.cli import main
from geogcp.evaluation import ModelSpec, kfold_eval, nmae, oob_eval, residual_field
from geogcp.features import (FeatureSpec, daily_excursion, gradient_exceedance, seasonal_sd, summary_stats)
from geogcp.gridstore import make_series
from geogcp.learners import ForestParams
from geogcp.render import read_pnm
from geogcp.select import SelectParams, overlap, run_selection
from geogcp.synthworld import DEFAULT_DRIVERS, Driver, WorldConfig, generate
from geogcp.target import stationarity_probe

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

RESULTS = {}
DRIVERS = {"Latitude", "MSLP SD S", "Distance to Major River"}
SEEDS = range(1, 21)
THREADS = os.cpu_count() or 1
# selection effort for the repeated-seed criteria: the full census is 1000 + 300 x 300 trees per seed
ACCEPT_SELECT = SelectParams(full_trees=150, n_real=100, real_trees=30, inner_trees=30, curve_trees=100)


def _record(request, n, ok, detail):
    line = f"AC{n} {'PASS' if ok else 'FAIL'} {detail}"
    RESULTS[n] = line
    tr = request.config.pluginmanager.getplugin("terminalreporter")
    if tr is not None:
        tr.write_line("")
        tr.write_line(line)
    return ok


_WORLDS = {}
_RF = {}


def world(seed):
    """(world, X, names) for the default world; cached."""
    if seed not in _WORLDS:
        w = generate(WorldConfig(), seed)
        fm = w.features()
        _WORLDS[seed] = (w, np.ascontiguousarray(fm.values), list(fm.names))
    return _WORLDS[seed]


def rf_kfold(seed):
    if seed not in _RF:
        w, X, _ = world(seed)
        _RF[seed] = kfold_eval(ModelSpec("RF", ForestParams()), X, w.target, 5, seed=seed, threads=THREADS)
    return _RF[seed]


# --------------------------------------------------------------------------- AC1


def test_ac1_statistic_oracle_equivalence(request):
    g = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = []
    for i in range(1000):
        n = int(g.integers(10, 10_001))
        x = g.normal(0, 5, n) * g.uniform(0.1, 10)
        x[g.random(n) < 0.02] = np.nan
        if np.count_nonzero(~np.isnan(x)) < 2:
            x[:2] = 1.0
        xs = x.tolist()
        got = summary_stats(x)
        want = oracles.summary(xs)
        if not all(oracles.close(a, b) for a, b in zip(got, want)):
            bad.append(("summary", i))
        months = np.resize(np.arange(1, 13), n)
        months = months[np.argsort(g.random(n), kind="stable")] if n < 24 else np.sort(months)
        ok_months = ~np.isnan(x)
        if len(set(months[ok_months].tolist())) == 12:
            if not oracles.close(seasonal_sd(x, months), oracles.seasonal_sd(xs, months.tolist())):
                bad.append(("seasonal_sd", i))
        step = int(g.integers(1, 6))
        sign = "+" if g.random() < 0.5 else "-"
        spec = FeatureSpec("T2", "grad", sign, step)
        a, b = gradient_exceedance(x, spec), oracles.exceedance(xs, step, spec.threshold(), sign)
        if not (a == b or oracles.close(a, b)):
            bad.append(("gradient", i))
        days = max(1, n // 4)
        tmin = g.normal(0, 5, days * 4)
        tmax = tmin + g.uniform(0, 12, days * 4)
        ts = np.datetime64("2001-01-01T00", "s") + np.arange(days * 4) * np.timedelta64(6, "h")
        lo = make_series("TMIN", "six_hourly", ts, [1], tmin[None, :])
        hi = make_series("TMAX", "six_hourly", ts, [1], tmax[None, :])
        got_dt = daily_excursion(lo, hi).values[0]
        want_dt = oracles.daily_excursion(tmin.tolist(), tmax.tolist(), lo.days.tolist())
        if not all(oracles.close(a, b) for a, b in zip(got_dt.tolist(), want_dt)):
            bad.append(("daily_excursion", i))
    elapsed = time.perf_counter() - t0
    ok = not bad
    _record(request, 1, ok, f"1000 series, {len(bad)} mismatches, {elapsed:.1f}s "
                            "(runtime includes the pure-Python oracles)")
    assert ok, bad[:10]


# --------------------------------------------------------------------------- AC2


def test_ac2_mean_predictor_calibration(request):
    t0 = time.perf_counter()
    y = np.random.default_rng(0).standard_normal(10_000)
    v = nmae(np.full_like(y, y.mean()), y)
    elapsed = time.perf_counter() - t0
    ok = abs(v - math.sqrt(2 / math.pi)) <= 0.02 and elapsed < 5
    _record(request, 2, ok, f"nMAE={v:.4f} (target 0.798 +/- 0.02), {elapsed:.3f}s")
    assert ok


# --------------------------------------------------------------------------- AC3


def test_ac3_model_gap(request):
    t0 = time.perf_counter()
    rows, hits = [], 0
    for seed in SEEDS:
        w, X, _ = world(seed)
        rf = rf_kfold(seed)[0].nmae
        gb = kfold_eval(ModelSpec("GB"), X, w.target, 5, seed=seed, threads=THREADS)[0].nmae
        ml = kfold_eval(ModelSpec("ML"), X, w.target, 5, seed=seed)[0].nmae
        good = rf < gb < ml and rf <= 0.5 * ml
        hits += good
        rows.append(f"{seed}:{rf:.3f}/{gb:.3f}/{ml:.3f}")
    elapsed = time.perf_counter() - t0
    ok = hits >= 18
    _record(request, 3, ok, f"{hits}/20 seeds with RF<GB<ML and RF<=0.5*ML, {elapsed:.0f}s; "
                            f"seed:RF/GB/ML " + " ".join(rows))
    assert ok


# --------------------------------------------------------------------------- AC4


def test_ac4_oob_kfold_agreement(request):
    t0 = time.perf_counter()
    gaps = []
    for seed in range(1, 11):
        w, X, _ = world(seed)
        k = rf_kfold(seed)[0].nmae
        o = oob_eval(ForestParams(seed=seed), X, w.target, threads=THREADS)[0].nmae
        gaps.append(abs(o - k))
    elapsed = time.perf_counter() - t0
    ok = max(gaps) <= 0.05
    _record(request, 4, ok, f"max |OOB - 5-fold| = {max(gaps):.4f} over 10 seeds, {elapsed:.0f}s (OOB part)")
    assert ok


# --------------------------------------------------------------------------- AC5


_SELECTIONS = {}


def selection(seed):
    if seed not in _SELECTIONS:
        w, X, names = world(seed)
        _SELECTIONS[seed] = run_selection(X, w.target, names, seed=seed, params=ACCEPT_SELECT, threads=THREADS)
    return _SELECTIONS[seed]


def test_ac5_selection_recovery(request):
    t0 = time.perf_counter()
    found, monotone, worst = 0, 0, -np.inf
    for seed in SEEDS:
        rep = selection(seed)
        found += DRIVERS <= set(rep.final)
        c = rep.nmae_curve[:6]
        rise = float(np.max(np.diff(c))) if c.size > 1 else 0.0
        worst = max(worst, rise)
        monotone += rise <= 0.02
    elapsed = time.perf_counter() - t0
    ok = found >= 18 and monotone == 20
    _record(request, 5, ok, f"drivers in final top 10 in {found}/20 seeds; curve within +0.02 in {monotone}/20 "
                            f"(worst step rise {worst:+.4f}); {elapsed:.0f}s")
    assert ok


# --------------------------------------------------------------------------- AC6


def test_ac6_collinearity(request):
    seed = 1
    w, X, names = world(seed)
    j = names.index("MSLP SD S")
    X2 = np.ascontiguousarray(np.column_stack([X, X[:, j]]))
    names2 = names + ["MSLP SD S copy"]
    base = rf_kfold(seed)[0].nmae
    dup = kfold_eval(ModelSpec("RF", ForestParams()), X2, w.target, 5, seed=seed, threads=THREADS)[0].nmae
    rep = run_selection(X2, w.target, names2, seed=seed, params=ACCEPT_SELECT, threads=THREADS)
    kept = {"MSLP SD S", "MSLP SD S copy"} & set(rep.final)
    ok = abs(dup - base) <= 0.02 and bool(kept)
    _record(request, 6, ok, f"nMAE {base:.4f} -> {dup:.4f} with duplicate; kept in top 10: {sorted(kept)}")
    assert ok


# --------------------------------------------------------------------------- AC7


def test_ac7_residual_attribution(request):
    # a longitude band, so no predictor identifies the region
    cfg = WorldConfig(region=(-90.0, 90.0, 0.0, 90.0), region_offset=0.5)
    w = generate(cfg, 11)
    fm = w.features()
    _, pred = kfold_eval(ModelSpec("RF", ForestParams()), fm.values, w.target, 5, seed=11, threads=THREADS)
    res = residual_field(pred, w.target, w.cells.cell_id)
    # residual = prediction - observation, so the recovered offset is minus its regional mean
    recovered = -res.mean_over(w.in_region)
    outside = -res.mean_over(~w.in_region)
    ok = 0.3 <= recovered <= 0.7
    _record(request, 7, ok, f"recovered offset {recovered:+.3f} in region ({int(w.in_region.sum())} cells), "
                            f"{outside:+.3f} outside")
    assert ok


# --------------------------------------------------------------------------- AC8

DETERMINISM_CFG = """\
rf.n_trees = 100
gb.n_rounds = 100
select.full_trees = 100
select.n_real = 40
select.real_trees = 30
select.inner_trees = 30
select.curve_trees = 60
select.max_steps = 6
"""


def _pipeline(out: Path, cfg: Path, threads: int, commands):
    for cmd in commands:
        code = main([cmd, "--config", str(cfg), "--out", str(out), "--seed", "5", "--threads", str(threads)])
        if code != 0:
            raise AssertionError(f"{cmd} exited {code}")


def test_ac8_determinism(request, tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(DETERMINISM_CFG)
    cmds = ("synth", "ingest", "features", "target", "select", "train", "evaluate", "render")
    _pipeline(tmp_path / "t1", cfg, 1, cmds)
    _pipeline(tmp_path / "t4", cfg, 4, cmds)
    files = sorted(p.relative_to(tmp_path / "t1") for p in (tmp_path / "t1").rglob("*")
                   if p.is_file() and not p.name.startswith("manifest_"))
    differ = [str(f) for f in files if (tmp_path / "t1" / f).read_bytes() != (tmp_path / "t4" / f).read_bytes()]
    ok = not differ and len(files) > 20
    _record(request, 8, ok, f"{len(files)} files compared between --threads 1 and 4, {len(differ)} differ "
                            "(default world, reduced tree counts)")
    assert ok, differ


# --------------------------------------------------------------------------- AC9


# Ten graded drivers: with only the three default drivers, ranks 4-10 of the
# final list are noise predictors whose order carries no information.
AC9_EXTRA = ("Elevation", "Distance to Ocean", "T2 SD S", "Distance to River", "Distance to coast 2",
             "TP SD S", "Distance to Lake")


def test_ac9_stationarity(request):
    seed = 1
    drivers = tuple(DEFAULT_DRIVERS) + tuple(Driver(n, 0.4 * (1 - 0.05 * i)) for i, n in enumerate(AC9_EXTRA))
    w = generate(WorldConfig(drivers=drivers), seed)
    fm = w.features()
    X, names = np.ascontiguousarray(fm.values), list(fm.names)
    base = run_selection(X, w.target, names, seed=seed, params=ACCEPT_SELECT, threads=THREADS)
    probe = stationarity_probe(w.economy)
    overlaps = {}
    for label, tv in (("plus", probe.plus), ("minus", probe.minus)):
        ok_rows = ~np.isnan(tv.log_gcp_pc)
        assert np.array_equal(tv.cell_id, w.cells.cell_id)
        rep = run_selection(X[ok_rows], tv.log_gcp_pc[ok_rows], names, seed=seed, params=ACCEPT_SELECT,
                            threads=THREADS)
        overlaps[label] = overlap(rep.final, base.final)
    ok = min(overlaps.values()) >= 8
    _record(request, 9, ok, f"top-10 overlap with the unperturbed set: +1 sigma {overlaps['plus']}/10, "
                            f"-1 sigma {overlaps['minus']}/10 (world with 10 graded drivers)")
    assert ok


# --------------------------------------------------------------------------- AC10


def test_ac10_end_to_end_default_scale(request, tmp_path):
    cfg = tmp_path / "default.cfg"
    cfg.write_text("")
    out = tmp_path / "run"
    t0 = time.perf_counter()
    _pipeline(out, cfg, THREADS, ("synth", "ingest", "features", "target", "select", "evaluate", "render"))
    elapsed = time.perf_counter() - t0
    shapes = {}
    for name in ("maps/target_all.ppm", "maps/residual_all.pgm", "maps/prediction_all.ppm"):
        shapes[name] = read_pnm(out / name).shape[:2]
    eval_rows = (out / "eval_all.csv").read_text().splitlines()
    table4 = (out / "table4_all.csv").read_text().splitlines()
    curve = (out / "curve_all.csv").read_text().splitlines()
    ok = (elapsed < 20 * 60 and all(s == (180, 360) for s in shapes.values())
          and len(eval_rows) >= 7 and len(table4) == 11 and len(curve) == 11)
    _record(request, 10, ok, f"default-scale pipeline {elapsed / 60:.1f} min on {THREADS} core(s); "
                             f"eval rows {len(eval_rows) - 1}, table4 rows {len(table4) - 1}, "
                             f"curve steps {len(curve) - 1}, maps {sorted(set(shapes.values()))}")
    assert ok
