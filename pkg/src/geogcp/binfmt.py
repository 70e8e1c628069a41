"""``GEOF`` columnar binary container for tables, series and feature matrices.

Layout (all integers little-endian)::

    offset  size        field
    0       4           magic b"GEOF"
    4       2           u16 format version (1)
    6       2           u16 payload kind (1 series, 2 table, 3 feature matrix)
    8       8           u64 n_rows  (cells)
    16      8           u64 n_cols  (time steps or named columns)
    24      4           u32 metadata length M
    28      M           UTF-8 JSON metadata (kind specific, see writers)
    28+M    8*n_rows    i64 row keys (cell ids)
    ...     8*n_rows*n_cols  f64 values, column-major: column 0 for every
                        row, then column 1, ...

Missing values are stored as the canonical quiet NaN (0x7FF8000000000000).
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ValidationError

MAGIC = b"GEOF"
VERSION = 1
KIND_SERIES = 1
KIND_TABLE = 2
KIND_FEATURES = 3
_HEADER = struct.Struct("<4sHHQQI")


def write_geof(path, kind: int, row_ids, values, meta: dict) -> None:
    row_ids = np.asarray(row_ids, dtype="<i8")
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 2 or values.shape[0] != row_ids.shape[0]:
        raise ValueError("values must be (n_rows, n_cols) matching row_ids")
    values = np.where(np.isnan(values), np.nan, values)  # canonical NaN payload
    mbytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, values.shape[0], values.shape[1], len(mbytes)))
        fh.write(mbytes)
        fh.write(row_ids.tobytes())
        fh.write(values.tobytes(order="F"))
    os.replace(tmp, path)


def read_geof(path, expect_kind: int | None = None):
    """Return ``(kind, row_ids, values, meta)``."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size or head[:4] != MAGIC:
            raise ValidationError(f"{path}: not a GEOF file")
        _, version, kind, n_rows, n_cols, mlen = _HEADER.unpack(head)
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported GEOF version {version}")
        if expect_kind is not None and kind != expect_kind:
            raise ValidationError(f"{path}: GEOF payload kind {kind}, expected {expect_kind}")
        meta = json.loads(fh.read(mlen).decode("utf-8"))
        row_ids = np.fromfile(fh, dtype="<i8", count=n_rows)
        flat = np.fromfile(fh, dtype="<f8", count=n_rows * n_cols)
        if row_ids.size != n_rows or flat.size != n_rows * n_cols:
            raise ValidationError(f"{path}: truncated GEOF file")
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes after GEOF payload")
    values = flat.reshape((n_rows, n_cols), order="F")
    return kind, row_ids.astype(np.int64), np.ascontiguousarray(values, dtype=np.float64), meta
