import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geogcp.binfmt import KIND_SERIES, KIND_TABLE, read_geof, write_geof
from geogcp.errors import ValidationError
from geogcp.gridstore import (CELL_COLUMNS, load_cells, load_economy, load_series, make_cells, make_economy,
                              make_series, write_cells, write_economy, write_series)

HEADER = ",".join(CELL_COLUMNS)


def _row(cid, lat=10.5, lon=20.5, soil=3, veg=4):
    return f"{cid},{lat},{lon},100,1,2,3,4,5,6,{veg},{soil}"


def _write(tmp_path, name, lines):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return p


def test_cells_csv_three_rows(tmp_path):
    p = _write(tmp_path, "cells.csv", [HEADER, _row(3, 10.5, 20.5), _row(1, 11.5, 20.5), _row(2, -5.5, 0.5)])
    cells = load_cells(p)
    assert len(cells) == 3
    assert cells.cell_id.tolist() == [1, 2, 3]
    assert np.array_equal(cells.geography["latitude"], cells.lat)


def test_cells_duplicate_id(tmp_path):
    p = _write(tmp_path, "cells.csv", [HEADER, _row(42, 10.5), _row(42, 11.5)])
    with pytest.raises(ValidationError, match="duplicate cell 42"):
        load_cells(p)


def test_cells_soil_out_of_range(tmp_path):
    p = _write(tmp_path, "cells.csv", [HEADER, _row(1, soil=251)])
    with pytest.raises(ValidationError, match="out of range"):
        load_cells(p)


@pytest.mark.parametrize("lines,match", [
    (["cell_id,lat"], "header lacks"),
    ([HEADER, _row(1, lat=10.3)], "cell centre"),
    ([HEADER, _row(1).replace(",100,", ",abc,")], "cannot parse"),
    ([HEADER, _row(1) + ",9"], "fields"),
    ([HEADER, _row(1, 10.5, 20.5), _row(2, 10.5, 20.5)], "same"),
])
def test_cells_validation_errors(tmp_path, lines, match):
    with pytest.raises(ValidationError, match=match):
        load_cells(_write(tmp_path, "c.csv", lines))


def test_missing_file_is_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_cells(tmp_path / "nope.csv")


@pytest.mark.parametrize("suffix", [".csv", ".geof"])
def test_cells_round_trip(tmp_path, suffix):
    cells = load_cells(_write(tmp_path, "c.csv", [HEADER, _row(5, 1.5, 2.5), _row(9, -1.5, -2.5, soil=250, veg=31)]))
    write_cells(cells, tmp_path / f"out{suffix}")
    back = load_cells(tmp_path / f"out{suffix}")
    assert np.array_equal(back.cell_id, cells.cell_id)
    for k in cells.geography:
        assert np.array_equal(back.geography[k], cells.geography[k])


def test_cells_index_and_subset(tmp_path):
    cells = load_cells(_write(tmp_path, "c.csv", [HEADER, _row(5, 1.5), _row(9, 2.5), _row(11, 3.5)]))
    assert cells.index_of([9, 5]).tolist() == [1, 0]
    assert cells.subset([11, 5]).cell_id.tolist() == [5, 11]
    with pytest.raises(ValidationError):
        cells.index_of([7])


# --------------------------------------------------------------------------- economy


def _econ_lines(rows):
    return ["cell_id,year,gcp_usd,population"] + [",".join(map(str, r)) for r in rows]


def test_economy_four_years(tmp_path):
    econ = load_economy(_write(tmp_path, "e.csv", _econ_lines([(7, y, 1e6, 100) for y in (1990, 1995, 2000, 2005)])))
    assert len(econ) == 4
    assert econ.year.tolist() == [1990, 1995, 2000, 2005]


def test_economy_negative_population(tmp_path):
    with pytest.raises(ValidationError, match="negative population"):
        load_economy(_write(tmp_path, "e.csv", _econ_lines([(7, 1990, 10, -5)])))


def test_economy_two_cells(tmp_path):
    rows = [(c, y, 1e5, 10) for c in (3, 8) for y in (1990, 1995, 2000, 2005)]
    econ = load_economy(_write(tmp_path, "e.csv", _econ_lines(rows)))
    assert len(econ) == 8 and econ.cells.tolist() == [3, 8]


def test_economy_drops_other_years_and_counts_unknown_cells(tmp_path):
    rows = [(3, 1990, 1, 1), (3, 1991, 1, 1), (4, 1990, 1, 1)]
    econ = load_economy(_write(tmp_path, "e.csv", _econ_lines(rows)), known_cells=[3])
    assert len(econ) == 2
    assert econ.counts == {"read": 3, "retained": 2, "dropped_years": 1, "unknown_cells": 1}


def test_economy_duplicate_record():
    with pytest.raises(ValidationError, match="duplicate economy record"):
        make_economy([1, 1], [1990, 1990], [1, 2], [1, 1])


@pytest.mark.parametrize("suffix", [".csv", ".geof"])
def test_economy_round_trip(tmp_path, suffix):
    econ = make_economy([2, 1, 2], [1995, 1990, 1990], [1.25, 3e9, 0.0], [1, 2, 3])
    write_economy(econ, tmp_path / f"e{suffix}")
    back = load_economy(tmp_path / f"e{suffix}")
    for a in ("cell_id", "year", "gcp", "population"):
        assert np.array_equal(getattr(back, a), getattr(econ, a))


# --------------------------------------------------------------------------- series


def _series_csv(tmp_path, stamps, n_cells=3):
    lines = ["timestamp," + ",".join(str(c) for c in range(1, n_cells + 1))]
    for i, s in enumerate(stamps):
        lines.append(s + "," + ",".join(str(i + c) for c in range(n_cells)))
    return _write(tmp_path, "s.csv", lines)


def test_series_daily_ten_steps(tmp_path):
    stamps = [str(np.datetime64("2000-01-01") + i) for i in range(10)]
    s = load_series(_series_csv(tmp_path, stamps), "T2", "daily")
    assert s.n_steps == 10 and s.values.shape == (3, 10)
    assert s.row(2).tolist() == [float(i + 1) for i in range(10)]


def test_series_gap_is_non_uniform(tmp_path):
    stamps = [str(np.datetime64("2000-01-01") + i) for i in (0, 1, 2, 4, 5)]
    with pytest.raises(ValidationError, match="non-uniform cadence"):
        load_series(_series_csv(tmp_path, stamps), "T2", "daily")


def test_series_six_hourly_accepted(tmp_path):
    t0 = np.datetime64("2000-01-01T00:00:00")
    stamps = [str(t0 + np.timedelta64(6 * i, "h")) for i in range(9)]
    s = load_series(_series_csv(tmp_path, stamps), "MSLP", "six_hourly")
    assert s.n_steps == 9
    assert s.days.tolist()[:5] == [10957] * 4 + [10958]


def test_series_missing_tokens(tmp_path):
    p = _write(tmp_path, "s.csv", ["timestamp,1,2", "2000-01-01,1,NA", "2000-01-02,,3"])
    s = load_series(p, "T2", "daily")
    assert s.missing.tolist() == [[False, True], [True, False]]


def test_series_alignment_requires_all_cells(tmp_path):
    p = _write(tmp_path, "c.csv", [HEADER, _row(1, 1.5), _row(2, 2.5), _row(9, 3.5)])
    cells = load_cells(p)
    stamps = [str(np.datetime64("2000-01-01") + i) for i in range(3)]
    with pytest.raises(ValidationError, match="lacks cell"):
        load_series(_series_csv(tmp_path, stamps), "T2", "daily", cells)


@pytest.mark.parametrize("suffix", [".csv", ".geof"])
def test_series_round_trip(tmp_path, suffix):
    ts = np.datetime64("2001-03-01T00", "s") + np.arange(7) * np.timedelta64(6, "h")
    vals = np.arange(14.0).reshape(2, 7) / 3
    vals[1, 2] = np.nan
    s = make_series("UV10", "six_hourly", ts, [8, 4], vals)
    write_series(s, tmp_path / f"s{suffix}")
    back = load_series(tmp_path / f"s{suffix}", "UV10", "six_hourly")
    assert np.array_equal(back.values, s.values, equal_nan=True)
    assert np.array_equal(back.timestamps, s.timestamps)
    assert back.cell_id.tolist() == [4, 8]


def test_series_binary_wrong_cadence(tmp_path):
    s = make_series("T2", "daily", np.datetime64("2001-01-01", "s") + np.arange(3) * np.timedelta64(1, "D"), [1], [[1, 2, 3]])
    write_series(s, tmp_path / "s.geof")
    with pytest.raises(ValidationError, match="cadence"):
        load_series(tmp_path / "s.geof", "T2", "six_hourly")


# --------------------------------------------------------------------------- GEOF container


def test_geof_layout(tmp_path):
    p = tmp_path / "x.geof"
    write_geof(p, KIND_TABLE, [7, 9], np.array([[1.0, 2.0], [3.0, np.nan]]), {"columns": ["a", "b"]})
    raw = p.read_bytes()
    magic, version, kind, n_rows, n_cols, mlen = struct.unpack_from("<4sHHQQI", raw)
    assert (magic, version, kind, n_rows, n_cols) == (b"GEOF", 1, KIND_TABLE, 2, 2)
    body = raw[28 + mlen:]
    assert np.frombuffer(body[:16], "<i8").tolist() == [7, 9]
    vals = np.frombuffer(body[16:], "<f8")
    assert vals[:3].tolist() == [1.0, 3.0, 2.0]  # column-major
    assert body[-8:] == struct.pack("<Q", 0x7FF8000000000000)


def test_geof_rejects_wrong_kind_and_truncation(tmp_path):
    p = tmp_path / "x.geof"
    write_geof(p, KIND_TABLE, [1], [[1.0]], {})
    with pytest.raises(ValidationError, match="kind"):
        read_geof(p, KIND_SERIES)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(ValidationError, match="truncated"):
        read_geof(p)
    (tmp_path / "y.geof").write_bytes(b"nope")
    with pytest.raises(ValidationError, match="not a GEOF"):
        read_geof(tmp_path / "y.geof")


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 2**31))
def test_geof_round_trip_property(tmp_path_factory, n_rows, n_cols, seed):
    g = np.random.default_rng(seed)
    vals = g.normal(size=(n_rows, n_cols))
    vals[g.random(vals.shape) < 0.2] = np.nan
    ids = g.integers(-2**40, 2**40, n_rows)
    p = tmp_path_factory.mktemp("geof") / "r.geof"
    write_geof(p, KIND_TABLE, ids, vals, {"k": [1, "x"]})
    kind, ids2, vals2, meta = read_geof(p)
    assert kind == KIND_TABLE and meta == {"k": [1, "x"]}
    assert np.array_equal(ids2, ids) and np.array_equal(vals2, vals, equal_nan=True)


def test_make_cells_requires_all_geography():
    with pytest.raises(ValidationError, match="missing geography"):
        make_cells([1], [0.5], [0.5])
