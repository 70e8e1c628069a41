"""Run configuration: defaults < config file < environment < command-line flags.

The config file holds one ``key = value`` pair per line; ``#`` starts a
comment and keys are dotted (``select.full_trees = 200``). Every key can be
overridden from the environment as ``GEOGCP_`` + the key upper-cased with
dots replaced by double underscores (``GEOGCP_SELECT__FULL_TREES=200``).
"""
from __future__ import annotations

import os
from pathlib import Path

from .errors import ValidationError

ENV_PREFIX = "GEOGCP_"

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "out": "run",
    "sample": "all",
    "years": "1990,1995,2000,2005",
    "series_format": "binary",
    "world.n_cells": 2000,
    "world.series_years": 4,
    "world.noise_sd": 0.15,
    "world.region": "",
    "world.region_offset": 0.0,
    "features.specs": "",
    "features.escalation": "compound",
    "features.missing_limit": 0.05,
    "rf.n_trees": 500,
    "rf.min_leaf": 5,
    "rf.mtry": 0,
    "gb.n_rounds": 500,
    "gb.learning_rate": 0.1,
    "gb.max_depth": 3,
    "select.top": 10,
    "select.full_trees": 1000,
    "select.n_real": 300,
    "select.vars_per_real": 20,
    "select.real_trees": 300,
    "select.k": 5,
    "select.inner_trees": 300,
    "select.curve_trees": 1000,
    "select.max_steps": 10,
    "select.importance": "permutation",
    "select.forward_mtry": "all",
    "eval.k": 5,
    "eval.models": "RF,GB,ML",
    "eval.normalization": "sample",
    "render.mode": "tercile",
}


def _coerce(key, text):
    kind = type(DEFAULTS[key])
    text = text.strip()
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ValidationError(f"config key {key}: expected {kind.__name__}, got {text!r}") from None
    return text


def parse_config(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value'")
        if key not in DEFAULTS:
            raise ValidationError(f"{source}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key in DEFAULTS:
        name = ENV_PREFIX + key.upper().replace(".", "__")
        if name in environ:
            out[key] = _coerce(key, environ[name])
    return out


def load_config(path=None, flags: dict | None = None, environ=None) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        cfg.update(parse_config(p.read_text(encoding="utf-8"), str(p)))
    cfg.update(env_overrides(environ))
    for k, v in (flags or {}).items():
        if v is not None:
            cfg[k] = v
    return cfg


def format_config(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in DEFAULTS)


def int_list(text) -> list:
    return [int(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def float_tuple(text):
    vals = [float(t) for t in str(text).split(",") if t.strip()]
    return tuple(vals) if vals else None
