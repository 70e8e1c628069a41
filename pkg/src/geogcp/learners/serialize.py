"""Versioned binary (``GEOM``) and JSON text encodings of fitted models.

Binary layout, all little-endian::

    offset  size  field
    0       4     magic b"GEOM"
    4       2     u16 format version (1)
    6       2     u16 model kind (1 forest, 2 boosting, 3 OLS)
    8       4     u32 header length H
    12      H     UTF-8 JSON header: scalars, feature names and an ordered
                  list of array descriptors {name, dtype, shape}
    12+H    ...   raw array bytes, C order, in descriptor order

Trees are stored concatenated; ``node_offsets[i]:node_offsets[i+1]`` slices
tree ``i``. Both encodings reproduce every value bit for bit (JSON floats
are written with ``repr`` precision).
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .boosting import GBModel, GBParams
from .forest import ForestModel, ForestParams
from .linear import OLSModel
from .tree import TREE_FIELDS, Tree

MAGIC = b"GEOM"
VERSION = 1
KINDS = {1: "forest", 2: "boosting", 3: "ols"}
_KIND_IDS = {v: k for k, v in KINDS.items()}
_DTYPES = {"feature": "<i4", "left": "<i4", "right": "<i4", "threshold": "<f8",
           "value": "<f8", "weight": "<f8", "gain": "<f8"}


class ModelFormatError(ValueError):
    pass


def _pack_trees(trees):
    offsets = np.zeros(len(trees) + 1, dtype="<i8")
    offsets[1:] = np.cumsum([t.n_nodes for t in trees])
    arrays = {"node_offsets": offsets}
    for name in TREE_FIELDS:
        parts = [getattr(t, name) for t in trees]
        arrays[name] = (np.concatenate(parts) if parts else np.zeros(0)).astype(_DTYPES[name])
    return arrays


def _unpack_trees(arrays):
    off = arrays["node_offsets"]
    trees = []
    for i in range(len(off) - 1):
        a, b = int(off[i]), int(off[i + 1])
        fields = []
        for name in TREE_FIELDS:
            native = np.int32 if _DTYPES[name] == "<i4" else np.float64
            fields.append(np.ascontiguousarray(arrays[name][a:b], dtype=native))
        trees.append(Tree(*fields))
    return trees


def _to_parts(model):
    if isinstance(model, ForestModel):
        arrays = _pack_trees(model.trees)
        arrays["inbag"] = model.inbag.astype("<i4")
        header = {"params": dict(model.params.__dict__), "feature_names": model.feature_names}
        return "forest", header, arrays
    if isinstance(model, GBModel):
        arrays = _pack_trees(model.trees)
        header = {"params": dict(model.params.__dict__), "feature_names": model.feature_names,
                  "initial": model.initial}
        return "boosting", header, arrays
    if isinstance(model, OLSModel):
        header = {"feature_names": model.feature_names, "intercept": model.intercept}
        return "ols", header, {"coef": np.asarray(model.coef, dtype="<f8")}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def _from_parts(kind, header, arrays):
    names = list(header["feature_names"])
    if kind == "forest":
        return ForestModel(trees=_unpack_trees(arrays), inbag=np.asarray(arrays["inbag"], dtype=np.int32),
                           params=ForestParams(**header["params"]), feature_names=names)
    if kind == "boosting":
        return GBModel(initial=float(header["initial"]), trees=_unpack_trees(arrays),
                       params=GBParams(**header["params"]), feature_names=names)
    if kind == "ols":
        return OLSModel(intercept=float(header["intercept"]),
                        coef=np.asarray(arrays["coef"], dtype=np.float64), feature_names=names)
    raise ModelFormatError(f"unknown model kind {kind!r}")


def dumps(model) -> bytes:
    kind, header, arrays = _to_parts(model)
    header = dict(header)
    header["arrays"] = [{"name": k, "dtype": v.dtype.str, "shape": list(v.shape)} for k, v in arrays.items()]
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<HHI", VERSION, _KIND_IDS[kind], len(hbytes)), hbytes]
    for v in arrays.values():
        chunks.append(np.ascontiguousarray(v).tobytes())
    return b"".join(chunks)


def loads(blob: bytes):
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ModelFormatError("not a GEOM model file")
    version, kind_id, hlen = struct.unpack_from("<HHI", blob, 4)
    if version != VERSION:
        raise ModelFormatError(f"unsupported GEOM version {version}")
    if kind_id not in KINDS:
        raise ModelFormatError(f"unknown model kind id {kind_id}")
    header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    pos = 12 + hlen
    arrays = {}
    for desc in header.pop("arrays"):
        dt = np.dtype(desc["dtype"])
        count = int(np.prod(desc["shape"])) if desc["shape"] else 1
        nbytes = count * dt.itemsize
        if pos + nbytes > len(blob):
            raise ModelFormatError("truncated GEOM file")
        arrays[desc["name"]] = np.frombuffer(blob, dtype=dt, count=count, offset=pos).reshape(desc["shape"]).copy()
        pos += nbytes
    if pos != len(blob):
        raise ModelFormatError("trailing bytes in GEOM file")
    return _from_parts(KINDS[kind_id], header, arrays)


def save(model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def dump_text(model) -> str:
    """Readable JSON rendering; ``load_text`` inverts it exactly."""
    kind, header, arrays = _to_parts(model)
    doc = {"format": "GEOM-text", "version": VERSION, "kind": kind, **header,
           "arrays": {k: {"dtype": v.dtype.str, "shape": list(v.shape), "data": v.ravel().tolist()}
                      for k, v in arrays.items()}}
    return json.dumps(doc, indent=1, sort_keys=True)


def load_text(text: str):
    doc = json.loads(text)
    if doc.get("format") != "GEOM-text":
        raise ModelFormatError("not a GEOM text dump")
    arrays = {k: np.asarray(v["data"], dtype=np.dtype(v["dtype"])).reshape(v["shape"])
              for k, v in doc.pop("arrays").items()}
    kind = doc.pop("kind")
    return _from_parts(kind, doc, arrays)
