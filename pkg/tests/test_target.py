import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geogcp.errors import ValidationError
from geogcp.gridstore import make_economy
from geogcp.target import (TargetVector, build_target, read_target, stationarity_probe, tercile_split,
                           write_target)

YEARS = (1990, 1995, 2000, 2005)


def _econ(per_cell):
    """per_cell: {cell: [(gcp, pop) per year]}"""
    cid, yr, gcp, pop = [], [], [], []
    for c, recs in per_cell.items():
        for y, (g, p) in zip(YEARS, recs):
            cid.append(c)
            yr.append(y)
            gcp.append(g)
            pop.append(p)
    return make_economy(cid, yr, gcp, pop)


def _target(values):
    v = np.asarray(values, dtype=float)
    return TargetVector(np.arange(v.size), v, np.full(v.size, "", dtype=object))


def test_constant_gcp_pc_of_5350():
    t = build_target(_econ({1: [(5350.0 * 100, 100)] * 4}))
    assert t.log_gcp_pc[0] == pytest.approx(3.728, abs=5e-4)
    assert t.log_gcp_pc[0] == pytest.approx(math.log10(5350), abs=1e-12)


def test_log_target_exact_thousand():
    t = build_target(_econ({1: [(1000.0 * 7, 7)] * 4}))
    assert t.log_gcp_pc[0] == 3.0


def test_exclusion_reasons():
    t = build_target(_econ({
        1: [(100, 1), (0.5, 1), (100, 1), (100, 1)],
        2: [(100, 1), (100, 0), (100, 1), (100, 1)],
        3: [(100, 1)] * 3,
        4: [(100, 1)] * 4,
    }))
    assert t.reason.tolist() == ["gcp_below_1_usd", "zero_population", "missing_years", ""]
    assert np.isnan(t.log_gcp_pc[:3]).all() and t.n_included == 1


def test_mean_is_taken_before_the_log():
    t = build_target(_econ({1: [(10, 1), (1000, 1), (10, 1), (1000, 1)]}))
    assert t.log_gcp_pc[0] == pytest.approx(math.log10(505.0), abs=1e-12)


def test_terciles_of_one_to_nine():
    t = tercile_split(_target(range(1, 10)))
    t1, t2 = t.thresholds
    assert t1 == pytest.approx(11 / 3, abs=1e-12) and t2 == pytest.approx(19 / 3, abs=1e-12)
    assert t.tercile.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]
    assert t.sample_mask("top").tolist() == [False] * 6 + [True] * 3


def test_terciles_all_identical():
    t = tercile_split(_target([2.0] * 6))
    assert t.thresholds[0] == t.thresholds[1] == 2.0
    assert (t.tercile == 0).all()


def test_tercile_needs_three_cells():
    with pytest.raises(ValidationError):
        tercile_split(_target([1.0, 2.0]))


def test_sample_mask_before_split():
    with pytest.raises(ValueError):
        _target([1, 2, 3]).sample_mask("top")


@given(st.lists(st.floats(-5, 8, allow_nan=False), min_size=3, max_size=200))
def test_tercile_partition_properties(values):
    t = tercile_split(_target(values))
    lab = t.tercile
    assert set(lab.tolist()) <= {0, 1, 2}
    v = np.asarray(values)
    # ordered: every value of a lower tercile <= every value of a higher tercile
    for a in range(3):
        for b in range(a + 1, 3):
            if (lab == a).any() and (lab == b).any():
                assert v[lab == a].max() <= v[lab == b].min()
    masks = [t.sample_mask(s) for s in ("bottom", "middle", "top")]
    assert np.array_equal(sum(m.astype(int) for m in masks), np.ones(v.size, dtype=int))


@given(st.lists(st.floats(-5, 8, allow_nan=False), min_size=3, max_size=60, unique=True))
def test_tercile_sizes_balanced_for_distinct_values(values):
    lab = tercile_split(_target(values)).tercile
    counts = np.bincount(lab, minlength=3)
    assert counts.max() - counts.min() <= 2


def test_stationarity_constant():
    s = stationarity_probe(_econ({1: [(100.0, 1)] * 4}))
    assert s.sigma[0] == 0.0
    assert s.mean.log_gcp_pc[0] == s.plus.log_gcp_pc[0] == s.minus.log_gcp_pc[0] == 2.0


def test_stationarity_alternating():
    s = stationarity_probe(_econ({1: [(90.0, 1), (110.0, 1), (90.0, 1), (110.0, 1)]}))
    assert s.sigma[0] == pytest.approx(11.547005383792516, abs=1e-12)
    assert s.plus.log_gcp_pc[0] == pytest.approx(math.log10(100 + 11.547005383792516), abs=1e-12)
    assert s.minus.log_gcp_pc[0] == pytest.approx(math.log10(100 - 11.547005383792516), abs=1e-12)


def test_stationarity_nonpositive_minus():
    s = stationarity_probe(_econ({1: [(1.0, 1), (1000.0, 1), (1.0, 1), (1.0, 1)]}))
    assert s.minus.reason[0] == "nonpositive_minus_sigma"
    assert s.plus.reason[0] == ""


def test_stationarity_single_year():
    econ = make_economy([1], [1990], [5.0], [1.0], years=(1990,))
    with pytest.raises(ValidationError, match="2 years required"):
        stationarity_probe(econ)


def test_target_round_trip(tmp_path):
    t = tercile_split(build_target(_econ({1: [(500, 1)] * 4, 2: [(100, 1)] * 3, 3: [(50, 1)] * 4,
                                          4: [(5, 1)] * 4})))
    write_target(t, tmp_path / "t.csv")
    back = read_target(tmp_path / "t.csv")
    assert np.array_equal(back.cell_id, t.cell_id)
    assert np.array_equal(back.log_gcp_pc, t.log_gcp_pc, equal_nan=True)
    assert back.reason.tolist() == t.reason.tolist()
    assert back.tercile.tolist() == t.tercile.tolist()
    assert back.thresholds == t.thresholds
