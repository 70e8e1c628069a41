import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geogcp.errors import ValidationError
from geogcp.render import (BACKGROUND_GRAY, BACKGROUND_RGB, PALETTE9, pixel_index, read_pnm, render_ascii,
                           render_gray, render_tercile, tercile_bins, write_pnm)

LAT = np.array([89.5, 0.5, -45.5])
LON = np.array([-179.5, 0.5, 120.5])


def test_pixel_positions_of_three_cells():
    r, c = pixel_index(LAT, LON)
    assert r.tolist() == [0, 89, 135]
    assert c.tolist() == [0, 180, 300]


def test_three_cells_colour_three_pixels():
    img = render_tercile(LAT, LON, [1.0, 2.0, 3.0])
    assert img.shape == (180, 360, 3)
    coloured = np.argwhere(np.any(img != BACKGROUND_RGB, axis=2))
    assert sorted(map(tuple, coloured.tolist())) == [(0, 0), (89, 180), (135, 300)]


def test_off_lattice_cells_raise():
    with pytest.raises(ValidationError, match="lattice"):
        pixel_index([10.2], [0.5])


def test_constant_field_single_colour():
    g = np.random.default_rng(0)
    lat = 0.5 + g.choice(80, 30, replace=False)
    lon = np.full(30, 10.5)
    img = render_tercile(lat, lon, np.full(30, 4.2))
    colours = {tuple(px) for px in img.reshape(-1, 3).tolist()} - {BACKGROUND_RGB}
    assert len(colours) == 1


def test_tercile_thresholds_echo_target_thresholds():
    v = np.array([3.0, 3.41, 3.5, 4.05, 4.5])
    bins = tercile_bins(v, thresholds=(3.41, 4.05))
    assert (bins // 3).tolist() == [0, 0, 1, 1, 2]


def test_nine_colour_palette_is_three_by_three():
    assert PALETTE9.shape == (9, 3) and len({tuple(c) for c in PALETTE9.tolist()}) == 9
    v = np.arange(27.0)
    bins = tercile_bins(v)
    assert np.bincount(bins).tolist() == [3] * 9


def test_missing_values_stay_background():
    img = render_gray(LAT, LON, [0.0, np.nan, 1.0])
    assert img.shape == (180, 360)
    assert img[0, 0] == 0 and img[135, 300] == 254 and img[89, 180] == BACKGROUND_GRAY


def test_bounds_crop_canvas():
    img = render_gray(LAT[1:], LON[1:], [1.0, 2.0], bounds=(-50, 10, 0, 130))
    assert img.shape == (60, 130)
    with pytest.raises(ValidationError):
        render_gray(LAT, LON, [1, 2, 3], bounds=(0, 0, 0, 10))


def test_empty_field_raises():
    with pytest.raises(ValidationError):
        render_gray([], [], [])


@pytest.mark.parametrize("shape", [(180, 360), (4, 5, 3)])
def test_pnm_round_trip(tmp_path, shape):
    img = np.random.default_rng(1).integers(0, 256, shape).astype(np.uint8)
    write_pnm(tmp_path / "x.pnm", img)
    head = (tmp_path / "x.pnm").read_bytes()[:2]
    assert head == (b"P5" if len(shape) == 2 else b"P6")
    assert np.array_equal(read_pnm(tmp_path / "x.pnm"), img)


def test_ascii_map():
    text = render_ascii(LAT, LON, [0.0, 1.0, 0.5], width=36)
    lines = text.split("\n")
    assert len(lines) == 18 and lines[0][0] == "."
    assert lines[8][18] == "@"


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=50))
def test_gray_monotone_in_value(values):
    n = len(values)
    lat = 0.5 + np.arange(n)
    img = render_gray(lat, np.full(n, 0.5), values)
    r, c = pixel_index(lat, np.full(n, 0.5))
    px = img[r, c].astype(int)
    order = np.argsort(values, kind="stable")
    assert np.all(np.diff(px[order]) >= 0)
