"""Command-line driver.

Every subcommand reads and writes files under ``--out`` (default ``run/``)::

    world/                 synth: cells.csv, economy.csv, series/*.geof, truth.csv, world.json
    data/                  ingest: validated binary copies of cells, economy and series
    features.geof|.csv     features
    target.csv             target
    selection_<s>.csv      select: stage tables, pooled set and forward curve
    curve_<s>.csv          select: step, predictor, nMAE, CORR
    curve_predictions_<s>.csv, table4_<s>.csv
    model_<M>_<s>.geom     train
    eval_<s>.csv           evaluate: comparison table; prediction/residual/delta_<s>.csv
    maps/                  render: .ppm (tercile palette) and .pgm (grayscale)
    manifest_<cmd>.json    provenance for each command

Exit status: 0 ok, 2 missing input or usage error, 3 validation failure,
4 internal invariant breach. Errors print one ``geogcp: error code=N ...`` line.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULTS, ENV_PREFIX, float_tuple, format_config, int_list, load_config
from .errors import InvariantError, ValidationError
from .evaluation import (DiagnosticField, ModelSpec, delta_field, format_reports, kfold_eval, oob_eval,
                         predictor_correlations, residual_field, write_correlations, write_field, write_reports)
from .features import CADENCE, build_feature_matrix, parse_specs, read_features, write_features
from .gridstore import load_cells, load_economy, load_series, write_cells, write_economy, write_series
from .learners import ForestParams, GBParams, RankDeficientError, serialize
from .render import render_ascii, render_gray, render_tercile, write_pnm
from .select import SelectParams, read_selection, run_selection, write_selection
from .synthworld import SERIES_VARIABLES, WorldConfig, generate, write_world
from .target import build_target, read_target, tercile_split, write_target

logger = logging.getLogger("geogcp")

SAMPLE_ALIASES = {"all": "all", "top": "top", "middle": "middle", "bottom": "bottom",
                  "top-tercile": "top", "middle-tercile": "middle", "bottom-tercile": "bottom"}
COMMANDS = ("synth", "ingest", "features", "target", "select", "train", "evaluate", "render")


class MissingInput(FileNotFoundError):
    pass


def _sample(text):
    try:
        return SAMPLE_ALIASES[text]
    except KeyError:
        raise argparse.ArgumentTypeError(f"sample must be one of {sorted(SAMPLE_ALIASES)}") from None


# --------------------------------------------------------------------------- run context


class Run:
    def __init__(self, args):
        flags = {"seed": args.seed, "threads": args.threads, "out": args.out, "sample": args.sample}
        self.config_path = args.config
        self.cfg = load_config(args.config, flags)
        self.out = Path(self.cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = int(self.cfg["seed"])
        self.threads = max(1, int(self.cfg["threads"]))
        self.sample = _sample(self.cfg["sample"])
        self.inputs, self.outputs = [], []

    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def need(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            raise MissingInput(f"missing input {p}")
        self.inputs.append(str(p))
        return p

    def wrote(self, path):
        self.outputs.append(str(path))

    def manifest(self, command, stages):
        doc = {"command": command, "version": __version__, "config_path": self.config_path,
               "seed": self.seed, "threads": self.threads, "sample": self.sample,
               "output_dir": str(self.out), "inputs": self.inputs, "outputs": self.outputs,
               "stages": stages, "config": {k: self.cfg[k] for k in DEFAULTS},
               "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
        with open(self.path(f"manifest_{command}.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def select_params(self) -> SelectParams:
        c = self.cfg
        return SelectParams(top=c["select.top"], full_trees=c["select.full_trees"], n_real=c["select.n_real"],
                            vars_per_real=c["select.vars_per_real"], real_trees=c["select.real_trees"],
                            k=c["select.k"], inner_trees=c["select.inner_trees"],
                            curve_trees=c["select.curve_trees"], max_steps=c["select.max_steps"],
                            min_leaf=c["rf.min_leaf"], importance=c["select.importance"],
                            forward_mtry=c["select.forward_mtry"])

    def model_spec(self, kind) -> ModelSpec:
        c = self.cfg
        fp = ForestParams(n_trees=c["rf.n_trees"], min_leaf=c["rf.min_leaf"], mtry=c["rf.mtry"] or None, seed=self.seed)
        gp = GBParams(n_rounds=c["gb.n_rounds"], learning_rate=c["gb.learning_rate"], max_depth=c["gb.max_depth"],
                      seed=self.seed)
        return ModelSpec(kind, fp, gp)


def _series_file(directory: Path, var):
    for ext in (".geof", ".bin", ".csv"):
        p = directory / f"{var}{ext}"
        if p.exists():
            return p
    return None


def _load_design(run: Run):
    """Feature matrix and target restricted to the run's sample and complete rows."""
    fm = read_features(run.need(run.path("features.geof")))
    target = read_target(run.need(run.path("target.csv")))
    where = {int(c): i for i, c in enumerate(fm.cell_id)}
    rows = np.array([where.get(int(c), -1) for c in target.cell_id], dtype=np.int64)
    mask = target.sample_mask(run.sample) & (rows >= 0)
    X = fm.values[rows[mask]]
    complete = ~np.isnan(X).any(axis=1)
    if not complete.all():
        logger.warning("dropping %d cell(s) with missing features", int((~complete).sum()))
    ids = target.cell_id[mask][complete]
    y = target.log_gcp_pc[mask][complete]
    y_all = target.values()
    if ids.size < 10:
        raise ValidationError(f"sample {run.sample!r} has only {ids.size} usable cells")
    return fm, ids, X[complete], y, y_all, target


# --------------------------------------------------------------------------- commands


def cmd_synth(run: Run, args) -> list:
    c = run.cfg
    cfg = WorldConfig(n_cells=c["world.n_cells"], years=tuple(int_list(c["years"])),
                      series_years=c["world.series_years"], noise_sd=c["world.noise_sd"],
                      region=float_tuple(c["world.region"]), region_offset=c["world.region_offset"])
    world = generate(cfg, run.seed)
    paths = write_world(world, run.path("world"), c["series_format"])
    for p in [paths["cells"], paths["economy"], paths["truth"], paths["world"], *paths["series"].values()]:
        run.wrote(p)
    print(f"synth: {len(world.cells)} cells, {len(world.economy)} economy records -> {run.path('world')}")
    return ["synth"]


def cmd_ingest(run: Run, args) -> list:
    src = Path(args.source) if args.source else run.path("world")
    cells = load_cells(run.need(args.cells or src / "cells.csv"))
    econ = load_economy(run.need(args.economy or src / "economy.csv"), int_list(run.cfg["years"]),
                        known_cells=cells.cell_id)
    data = run.path("data")
    (data / "series").mkdir(parents=True, exist_ok=True)
    write_cells(cells, data / "cells.geof")
    write_economy(econ, data / "economy.geof")
    run.wrote(data / "cells.geof")
    run.wrote(data / "economy.geof")
    series_dir = Path(args.series_dir) if args.series_dir else src / "series"
    loaded = []
    for var in SERIES_VARIABLES + ("DT",):
        p = _series_file(series_dir, var)
        if p is None:
            continue
        run.inputs.append(str(p))
        s = load_series(p, var, CADENCE[var], cells)
        write_series(s, data / "series" / f"{var}.geof")
        run.wrote(data / "series" / f"{var}.geof")
        loaded.append(var)
    if not loaded:
        raise MissingInput(f"no series files found in {series_dir}")
    print(f"ingest: {len(cells)} cells, {len(econ)} economy records ({econ.counts}), series: {' '.join(loaded)}")
    return ["ingest"]


def cmd_features(run: Run, args) -> list:
    data = run.path("data")
    cells = load_cells(run.need(data / "cells.geof"))
    series = {}
    for var in SERIES_VARIABLES + ("DT",):
        p = data / "series" / f"{var}.geof"
        if p.exists():
            run.inputs.append(str(p))
            series[var] = load_series(p, var, CADENCE[var], cells)
    text = run.cfg["features.specs"]
    specs = parse_specs([t for t in text.split(";") if t.strip()]) if text else None
    fm = build_feature_matrix(cells, series, specs, escalation=run.cfg["features.escalation"],
                              missing_limit=run.cfg["features.missing_limit"])
    for name in ("features.geof", "features.csv"):
        write_features(fm, run.path(name))
        run.wrote(run.path(name))
    print(f"features: {fm.shape[0]} cells x {fm.shape[1]} predictors, {int(fm.missing.any(axis=1).sum())} cells with missing values")
    return ["features"]


def cmd_target(run: Run, args) -> list:
    econ = load_economy(run.need(run.path("data", "economy.geof")), int_list(run.cfg["years"]))
    target = tercile_split(build_target(econ))
    write_target(target, run.path("target.csv"))
    run.wrote(run.path("target.csv"))
    reasons = {r: int((target.reason == r).sum()) for r in sorted(set(target.reason.tolist()) - {""})}
    t1, t2 = target.thresholds
    print(f"target: {target.n_included} included, excluded {reasons or 0}, tercile thresholds {t1:.3f} / {t2:.3f}")
    return ["target"]


def cmd_select(run: Run, args) -> list:
    fm, ids, X, y, _, _ = _load_design(run)
    report = run_selection(X, y, fm.names, run.seed, run.select_params(), run.threads, run.sample)
    s = run.sample
    write_selection(report, run.path(f"selection_{s}.csv"))
    with open(run.path(f"curve_{s}.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "predictor", "nmae", "corr"])
        for step, name, e, c in report.curve:
            w.writerow([step, name, f"{e:.6f}", f"{c:.6f}"])
    with open(run.path(f"curve_predictions_{s}.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id"] + [f"step_{i + 1}" for i in range(report.oof.shape[0])])
        for j, cid in enumerate(ids):
            w.writerow([int(cid)] + [repr(float(v)) for v in report.oof[:, j]])
    table = predictor_correlations(fm.align(ids), y, report.final)
    write_correlations(table, run.path(f"table4_{s}.csv"))
    for name in (f"selection_{s}.csv", f"curve_{s}.csv", f"curve_predictions_{s}.csv", f"table4_{s}.csv"):
        run.wrote(run.path(name))
    print(f"select ({s}, {ids.size} cells): final ranking")
    for (step, name, e, c), (_, r) in zip(report.curve, table.rows()):
        rs = "n/a" if r is None else f"{r:+.2f}"
        print(f"  {step:>2}. {name:<28} nMAE {e:.3f}  CORR {c:.3f}  r(GCP-PC) {rs}")
    return ["select"]


def _selected(run: Run, fm):
    p = run.path(f"selection_{run.sample}.csv")
    if p.exists():
        run.inputs.append(str(p))
        return read_selection(p).final
    return None


def cmd_train(run: Run, args) -> list:
    fm, ids, X, y, _, _ = _load_design(run)
    names = fm.names
    if args.predictors == "selected":
        sel = _selected(run, fm)
        if sel is None:
            raise MissingInput(f"missing input {run.path(f'selection_{run.sample}.csv')}")
        idx = [fm.names.index(n) for n in sel]
        X, names = X[:, idx], sel
    model = run.model_spec(args.model).fit(X, y, seed=run.seed, feature_names=names, threads=run.threads)
    base = run.path(f"model_{args.model}_{run.sample}")
    serialize.save(model, base.with_suffix(".geom"))
    base.with_suffix(".txt").write_text(serialize.dump_text(model), encoding="utf-8")
    run.wrote(base.with_suffix(".geom"))
    run.wrote(base.with_suffix(".txt"))
    print(f"train: {args.model} on {len(names)} predictors, {ids.size} cells -> {base.with_suffix('.geom')}")
    return ["train"]


def _read_curve_predictions(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [r for r in reader if r]
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    return ids, np.array([[float(v) for v in r[1:]] for r in rows]).T


def cmd_evaluate(run: Run, args) -> list:
    fm, ids, X, y, y_all, target = _load_design(run)
    norm = run.cfg["eval.normalization"]
    k = run.cfg["eval.k"]
    models = [m.strip() for m in run.cfg["eval.models"].split(",") if m.strip()]
    sets = [("all", list(range(len(fm.names))))]
    sel = _selected(run, fm)
    if sel is None and run.sample != "all":
        p = run.path("selection_all.csv")
        if p.exists():
            run.inputs.append(str(p))
            sel = read_selection(p).final
    if sel:
        sets.append(("top", [fm.names.index(n) for n in sel]))
    reports = []
    for label, idx in sets:
        Xs = np.ascontiguousarray(X[:, idx])
        for m in models:
            try:
                rep, _ = kfold_eval(run.model_spec(m), Xs, y, k, run.seed, sample=run.sample, y_ref=y_all,
                                    normalization=norm, threads=run.threads)
            except (RankDeficientError, ValueError) as exc:
                if m != "ML":
                    raise
                logger.warning("%s on %s predictors skipped: %s", m, label, exc)
                continue
            reports.append(rep)
            if m == "RF":
                fp = run.model_spec("RF").forest
                oob, _ = oob_eval(fp, Xs, y, sample=run.sample, y_ref=y_all, normalization=norm, threads=run.threads)
                reports.append(oob)
    s = run.sample
    write_reports(reports, run.path(f"eval_{s}.csv"))
    run.wrote(run.path(f"eval_{s}.csv"))
    print(format_reports(reports))

    cp = run.path(f"curve_predictions_{s}.csv")
    if cp.exists():
        run.inputs.append(str(cp))
        cids, steps = _read_curve_predictions(cp)
        if not np.array_equal(cids, ids):
            raise ValidationError("curve predictions were made on different cells; re-run select")
        pred = steps[-1]
        with open(run.path(f"delta_{s}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell_id"] + [f"delta_{i + 1}" for i in range(1, steps.shape[0])])
            deltas = [delta_field(steps[i - 1], steps[i], y, ids).values for i in range(1, steps.shape[0])]
            for j, cid in enumerate(ids):
                w.writerow([int(cid)] + [repr(float(d[j])) for d in deltas])
        run.wrote(run.path(f"delta_{s}.csv"))
    else:
        rep, pred = kfold_eval(run.model_spec("RF"), X, y, k, run.seed, threads=run.threads)
    write_field(DiagnosticField(ids, pred, "prediction"), run.path(f"prediction_{s}.csv"))
    write_field(residual_field(pred, y, ids), run.path(f"residual_{s}.csv"))
    run.wrote(run.path(f"prediction_{s}.csv"))
    run.wrote(run.path(f"residual_{s}.csv"))
    return ["evaluate"]


def cmd_render(run: Run, args) -> list:
    cells = load_cells(run.need(run.path("data", "cells.geof")))
    target = read_target(run.need(run.path("target.csv")))
    maps = run.path("maps")
    maps.mkdir(exist_ok=True)
    s = run.sample
    pos = cells.index_of(target.cell_id)
    lat, lon = cells.lat[pos], cells.lon[pos]
    mask = target.sample_mask(s)
    fields = [("target", lat[mask], lon[mask], target.log_gcp_pc[mask], "tercile")]
    for kind in ("prediction", "residual"):
        p = run.path(f"{kind}_{s}.csv")
        if p.exists():
            run.inputs.append(str(p))
            with open(p, newline="", encoding="utf-8") as fh:
                rows = [r for r in csv.reader(fh)][1:]
            ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
            vals = np.array([float(r[1]) for r in rows])
            q = cells.index_of(ids)
            fields.append((kind, cells.lat[q], cells.lon[q], vals, "tercile" if kind == "prediction" else "gray"))
    dp = run.path(f"delta_{s}.csv")
    if dp.exists():
        run.inputs.append(str(dp))
        with open(dp, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], [r for r in rows[1:] if r]
        ids = np.array([int(r[0]) for r in body], dtype=np.int64)
        q = cells.index_of(ids)
        for j, name in enumerate(header[1:], start=1):
            fields.append((name, cells.lat[q], cells.lon[q], np.array([float(r[j]) for r in body]), "gray"))
    fp = run.path("features.geof")
    sel = _selected(run, None)
    if sel and fp.exists():
        fm = read_features(run.need(fp))
        q = cells.index_of(fm.cell_id)
        for n in sel:
            slug = "predictor_" + "".join(ch if ch.isalnum() else "_" for ch in n).strip("_")
            fields.append((slug, cells.lat[q], cells.lon[q], fm.column(n), "gray"))
    thresholds = target.thresholds
    for name, la, lo, vals, mode in fields:
        mode = run.cfg["render.mode"] if name == "target" else mode
        if mode == "tercile":
            img = render_tercile(la, lo, vals, thresholds if name in ("target", "prediction") else None)
            path = maps / f"{name}_{s}.ppm"
        else:
            img = render_gray(la, lo, vals)
            path = maps / f"{name}_{s}.pgm"
        write_pnm(path, img)
        run.wrote(path)
    if args.ascii:
        print(render_ascii(lat[mask], lon[mask], target.log_gcp_pc[mask]))
    print(f"render: {len(fields)} map(s) -> {maps}")
    return ["render"]


HANDLERS = {"synth": cmd_synth, "ingest": cmd_ingest, "features": cmd_features, "target": cmd_target,
            "select": cmd_select, "train": cmd_train, "evaluate": cmd_evaluate, "render": cmd_render}


# --------------------------------------------------------------------------- parser


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="key = value config file")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--out", default=d, help="output directory (default run/)")
    p.add_argument("--threads", type=int, default=d)
    p.add_argument("--sample", type=_sample, default=d, help="all | top | middle | bottom (tercile)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geogcp", description="Gridded climate/geography predictors of per-capita gross cell product.",
        epilog=f"Config keys can be overridden with {ENV_PREFIX}<KEY> environment variables "
               "(dots become double underscores).")
    parser.add_argument("--version", action="version", version=f"geogcp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser, False)
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {}
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HANDLERS[name].__doc__)
        _global_flags(sp, True)
        parsers[name] = sp
    parsers["ingest"].add_argument("--source", help="directory holding cells.csv, economy.csv and series/")
    parsers["ingest"].add_argument("--cells")
    parsers["ingest"].add_argument("--economy")
    parsers["ingest"].add_argument("--series-dir")
    parsers["train"].add_argument("--model", choices=("RF", "GB", "ML"), default="RF")
    parsers["train"].add_argument("--predictors", choices=("all", "selected"), default="selected")
    parsers["render"].add_argument("--ascii", action="store_true", help="also print an ASCII map of the target")
    sub.add_parser("config", help="print the effective configuration")
    return parser


def _fail(code, kind, message):
    print(f"geogcp: error code={code} kind={kind} message={json.dumps(str(message))}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "config":
            sys.stdout.write(format_config(load_config(args.config)))
            return 0
        run = Run(args)
        stages = HANDLERS[args.command](run, args)
        run.manifest(args.command, stages)
        return 0
    except FileNotFoundError as exc:
        return _fail(2, "missing_input", exc)
    except InvariantError as exc:
        return _fail(4, "invariant", exc)
    except (ValidationError, ValueError, KeyError) as exc:
        return _fail(3, "validation", exc)
    except AssertionError as exc:
        return _fail(4, "invariant", exc)


if __name__ == "__main__":
    sys.exit(main())
