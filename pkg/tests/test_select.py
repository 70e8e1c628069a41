import logging

import numpy as np
import pytest

from geogcp.errors import ValidationError
from geogcp.select import (SelectParams, SelectionReport, StageResult, expected_inclusions, pool, pool_and_rank,
                           read_selection, run_selection, stage_full_rf, stage_subsample, write_selection)

FAST = SelectParams(full_trees=60, n_real=40, real_trees=30, inner_trees=30, curve_trees=60, max_steps=4)


def _driven(n=400, p=120, seed=0):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, p))
    names = [f"v{i:03d}" for i in range(p)]
    a, b, c = 1, p // 2, p - 2
    y = X[:, a] + (X[:, b] > 0) + 0.8 * X[:, c] ** 2 + 0.1 * g.normal(size=n)
    return X, y, names, {names[a], names[b], names[c]}


def test_stage_a_finds_drivers():
    X, y, names, drivers = _driven()
    res = stage_full_rf(X, y, names, seed=1, params=FAST)
    assert len(res.names) == 10 and drivers <= set(res.names)
    assert res.scores == sorted(res.scores, reverse=True)


def test_stage_b_finds_drivers():
    X, y, names, drivers = _driven(p=60)
    res = stage_subsample(X, y, names, seed=1, params=SelectParams(n_real=60, real_trees=30))
    assert drivers <= set(res.names)
    assert all(c > 0 for c in res.counts)


def test_stage_a_few_features_returns_all(caplog):
    g = np.random.default_rng(0)
    X, y = g.normal(size=(80, 5)), g.normal(size=80)
    with caplog.at_level(logging.WARNING, logger="geogcp.select"):
        res = stage_full_rf(X, y, list("abcde"), params=FAST)
    assert sorted(res.names) == list("abcde")
    assert "only 5 predictors" in caplog.text


def test_stage_b_needs_twenty_features():
    g = np.random.default_rng(0)
    with pytest.raises(ValidationError, match="at least 20"):
        stage_subsample(g.normal(size=(50, 19)), g.normal(size=50), [str(i) for i in range(19)])


def test_expected_inclusions_default_census():
    assert expected_inclusions(SelectParams(), 154) == pytest.approx(300 * 20 / 154)
    assert round(expected_inclusions(SelectParams(), 154)) == 39


def test_stage_b_inclusion_counts_match_expectation():
    g = np.random.default_rng(0)
    p = 60
    X, y = g.normal(size=(60, p)), g.normal(size=60)
    params = SelectParams(n_real=300, real_trees=2, top=p)
    res = stage_subsample(X, y, [f"c{i}" for i in range(p)], seed=5, params=params)
    assert sum(res.counts) == 300 * 20
    assert abs(np.mean(res.counts) - expected_inclusions(params, p)) < 1e-9


def test_pool_deduplicates_in_order():
    a = StageResult(["x", "y", "z"], [3, 2, 1])
    b = StageResult(["z", "w", "x"], [3, 2, 1])
    assert pool(a, b) == ["x", "y", "z", "w"]


def test_latitude_only_curve_has_one_step():
    g = np.random.default_rng(0)
    lat = g.uniform(-60, 70, 200)
    y = np.abs(lat) / 30 + 0.1 * g.normal(size=200)
    st = StageResult(["Latitude"], [1.0])
    final, curve, oof = pool_and_rank(st, st, lat[:, None], y, ["Latitude"], params=FAST)
    assert final == ["Latitude"] and len(curve) == 1 and oof.shape == (1, 200)


def test_two_driver_curve_strictly_decreasing():
    g = np.random.default_rng(1)
    n = 400
    X = g.normal(size=(n, 4))
    y = 2.0 * np.abs(X[:, 0]) + (X[:, 1] > 0) + 0.1 * g.normal(size=n)
    names = ["Latitude", "X1", "n1", "n2"]
    st = StageResult(names, [1, 1, 1, 1])
    final, curve, _ = pool_and_rank(st, st, X, y, names, seed=2, params=FAST)
    assert final[:2] == ["Latitude", "X1"]
    assert curve[1][2] < curve[0][2]


def test_run_selection_report_and_round_trip(tmp_path):
    X, y, names, drivers = _driven(n=300, p=40, seed=3)
    rep = run_selection(X, y, names, seed=4, params=FAST)
    assert len(rep.final) == len(set(rep.final)) == len(rep.curve) == 4
    assert set(rep.final) <= set(rep.pooled) and len(rep.pooled) <= 20
    assert drivers <= set(rep.final)
    steps = rep.nmae_curve
    assert np.all(np.diff(steps[:3]) <= 0.02)
    write_selection(rep, tmp_path / "sel.csv")
    back = read_selection(tmp_path / "sel.csv")
    assert back.final == rep.final and back.pooled == rep.pooled
    assert back.stage_a.names == rep.stage_a.names and back.stage_b.counts == rep.stage_b.counts
    assert np.allclose(back.nmae_curve, steps, atol=1e-6)


def test_selection_is_deterministic_and_thread_invariant():
    X, y, names, _ = _driven(n=200, p=30, seed=6)
    a = run_selection(X, y, names, seed=9, params=FAST)
    b = run_selection(X, y, names, seed=9, params=FAST, threads=3)
    assert a.final == b.final and a.stage_a.scores == b.stage_a.scores and a.curve == b.curve


def test_relabelling_permutes_names_only():
    X, y, names, _ = _driven(n=200, p=25, seed=8)
    renamed = [f"r_{n}" for n in names]
    a = stage_full_rf(X, y, names, seed=3, params=FAST)
    b = stage_full_rf(X, y, renamed, seed=3, params=FAST)
    assert b.names == [f"r_{n}" for n in a.names] and b.scores == a.scores


def test_report_invariants():
    st = StageResult(["a", "b"], [1, 0])
    with pytest.raises(ValidationError):
        SelectionReport(st, st, ["a", "b"], ["a", "a"], [(1, "a", 0.5, 0.5), (2, "a", 0.4, 0.6)], 0)
    with pytest.raises(ValidationError):
        SelectionReport(st, st, ["a", "b"], ["a", "c"], [(1, "a", 0.5, 0.5), (2, "c", 0.4, 0.6)], 0)
    with pytest.raises(ValidationError):
        SelectionReport(st, st, ["a", "b"], ["a"], [], 0)


def test_params_validation():
    with pytest.raises(ValidationError):
        SelectParams(importance="gain")
    with pytest.raises(ValidationError):
        SelectParams(k=1)
