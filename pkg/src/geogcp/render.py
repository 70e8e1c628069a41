"""Equirectangular 1-degree rasters written as binary PGM/PPM, plus an ASCII view.

Cell (lat, lon) lands on pixel row ``90 - lat - 0.5`` and column
``lon + 180 - 0.5``; a global canvas is 360 x 180.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError

WIDTH, HEIGHT = 360, 180
BACKGROUND_RGB = (255, 255, 255)
BACKGROUND_GRAY = 255
# three sets of three colours: bottom tercile blues, middle greens, top reds (light -> dark)
PALETTE9 = np.array([
    (198, 219, 239), (107, 174, 214), (33, 113, 181),
    (199, 233, 192), (116, 196, 118), (35, 139, 69),
    (252, 187, 161), (251, 106, 74), (203, 24, 29),
], dtype=np.uint8)
ASCII_RAMP = " .:-=+*#%@"


def pixel_index(lat, lon, bounds=None):
    """(row, col) of each 1-degree cell centre; off-lattice coordinates raise."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    top, left = 90.0, -180.0
    if bounds is not None:
        _, lat_max, lon_min, _ = bounds
        top, left = float(lat_max), float(lon_min)
    r = top - lat - 0.5
    c = lon - left - 0.5
    ri, ci = np.rint(r), np.rint(c)
    if np.any(np.abs(r - ri) > 1e-9) or np.any(np.abs(c - ci) > 1e-9):
        raise ValidationError("cells are not on the 1-degree lattice of cell centres")
    return ri.astype(np.int64), ci.astype(np.int64)


def _canvas(bounds):
    if bounds is None:
        return HEIGHT, WIDTH
    lat_min, lat_max, lon_min, lon_max = bounds
    h, w = lat_max - lat_min, lon_max - lon_min
    if h <= 0 or w <= 0 or h != int(h) or w != int(w):
        raise ValidationError("bounds must span a positive whole number of degrees")
    return int(h), int(w)


def _place(lat, lon, values, bounds):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("field is empty")
    h, w = _canvas(bounds)
    r, c = pixel_index(lat, lon, bounds)
    inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    return h, w, r[inside], c[inside], values[inside]


def tercile_bins(values, thresholds=None) -> np.ndarray:
    """Bin 0..8: tercile (ties to the lower one) times 3 plus the sub-tercile."""
    v = np.asarray(values, dtype=np.float64)
    ok = ~np.isnan(v)
    if thresholds is None:
        t1, t2 = np.quantile(v[ok], [1 / 3, 2 / 3]) if ok.any() else (0.0, 0.0)
    else:
        t1, t2 = thresholds
    ter = np.where(v <= t1, 0, np.where(v <= t2, 1, 2))
    out = np.full(v.shape, -1, dtype=np.int64)
    for k in range(3):
        sel = ok & (ter == k)
        if not sel.any():
            continue
        s1, s2 = np.quantile(v[sel], [1 / 3, 2 / 3])
        sub = np.where(v[sel] <= s1, 0, np.where(v[sel] <= s2, 1, 2))
        out[sel] = 3 * k + sub
    return out


def render_tercile(lat, lon, values, thresholds=None, bounds=None) -> np.ndarray:
    """(H, W, 3) uint8 image in the 9-colour tercile palette."""
    h, w, r, c, v = _place(lat, lon, values, bounds)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = BACKGROUND_RGB
    bins = tercile_bins(v, thresholds)
    ok = bins >= 0
    img[r[ok], c[ok]] = PALETTE9[bins[ok]]
    return img


def render_gray(lat, lon, values, vrange=None, bounds=None) -> np.ndarray:
    """(H, W) uint8 image; data map linearly onto 0 (low) .. 254, background 255."""
    h, w, r, c, v = _place(lat, lon, values, bounds)
    img = np.full((h, w), BACKGROUND_GRAY, dtype=np.uint8)
    ok = ~np.isnan(v)
    if not ok.any():
        return img
    lo, hi = (float(np.min(v[ok])), float(np.max(v[ok]))) if vrange is None else vrange
    scale = (v[ok] - lo) / (hi - lo) if hi > lo else np.zeros(ok.sum())
    img[r[ok], c[ok]] = np.rint(np.clip(scale, 0.0, 1.0) * 254).astype(np.uint8)
    return img


def render_ascii(lat, lon, values, width: int = 72, bounds=None) -> str:
    """Block-averaged character map; blank where a block holds no data."""
    h, w, r, c, v = _place(lat, lon, values, bounds)
    block = max(1, int(np.ceil(w / width)))
    bh, bw = -(-h // block), -(-w // block)
    total = np.zeros((bh, bw))
    count = np.zeros((bh, bw))
    ok = ~np.isnan(v)
    np.add.at(total, (r[ok] // block, c[ok] // block), v[ok])
    np.add.at(count, (r[ok] // block, c[ok] // block), 1)
    lines = []
    if ok.any():
        lo, hi = float(np.min(v[ok])), float(np.max(v[ok]))
    for i in range(bh):
        row = []
        for j in range(bw):
            if count[i, j] == 0:
                row.append(" ")
                continue
            m = total[i, j] / count[i, j]
            k = 1 + int((m - lo) / (hi - lo) * (len(ASCII_RAMP) - 2)) if hi > lo else 1
            row.append(ASCII_RAMP[min(k, len(ASCII_RAMP) - 1)])
        lines.append("".join(row).rstrip())
    return "\n".join(lines)


def write_pnm(path, img) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim == 2:
        head = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n"
    elif img.ndim == 3 and img.shape[2] == 3:
        head = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n"
    else:
        raise ValueError("image must be (H, W) or (H, W, 3)")
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(img.tobytes())


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    magic, dims, maxval, body = parts
    w, h = map(int, dims.split())
    if int(maxval) != 255:
        raise ValueError("only 8-bit images are supported")
    if magic == b"P5":
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    if magic == b"P6":
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    raise ValueError(f"unsupported image type {magic!r}")
