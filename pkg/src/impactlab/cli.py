"""Batch command line front-end.

A run is described by a YAML file holding ``format_version: 1``, optional
``seed`` and ``output_dir``, and exactly one command block (``ingest``,
``calibrate``, ``trajectory``, ``continuous``, ``discrete``,
``diffusivity`` or ``sweep``). Every run writes CSV files plus a
``manifest.csv`` with the SHA-256 of each file in the output directory.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import copy
import itertools
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import continuous as cont
from . import diffusivity as diff
from . import discrete as disc
from . import irf, linmodels, marketdata
from .csvio import fmt, sha256_file, write_csv

log = logging.getLogger("impactlab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
COMMANDS = ("ingest", "calibrate", "trajectory", "continuous", "discrete", "diffusivity", "sweep")
SWEEPABLE = ("continuous", "discrete", "trajectory", "diffusivity")
DEFAULT_CELL_CAP = 100_000


class ConfigError(ValueError):
    pass


# schema -------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_unit = {"type": "number", "minimum": 0, "maximum": 1}


def _list_of(item):
    return {"oneOf": [item, {"type": "array", "items": item, "minItems": 1}]}


_model = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "source": {"const": "synthetic"},
                "p": _list_of(_posint),
                "d_sum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "d_exponent": _pos,
                "g_exponent": _pos,
                "b0": _num,
            },
            "required": ["source", "p"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"source": {"const": "file"}, "path": {"type": "string"}},
            "required": ["source", "path"],
            "additionalProperties": False,
        },
    ]
}

_kernel = {
    "type": "object",
    "properties": {"family": {"enum": ["Exponential", "PowerLaw"]}, "param": _pos},
    "required": ["family", "param"],
    "additionalProperties": False,
}

BLOCK_SCHEMAS = {
    "ingest": {
        "type": "object",
        "properties": {
            "messages": {"type": "string"},
            "orderbook": {"type": "string"},
            "asset_id": {"type": "string"},
            "session": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            "include_hidden": {"type": "boolean"},
            "min_size": _posint,
            "invert_direction": {"type": "boolean"},
            "merge": {"type": "boolean"},
            "clip_minutes": {"type": "number", "minimum": 0},
            "convention": {"enum": ["PostTrade", "PreTrade"]},
        },
        "required": ["messages", "orderbook"],
        "additionalProperties": False,
    },
    "calibrate": {
        "type": "object",
        "properties": {
            "data": {
                "oneOf": [
                    {
                        "type": "object",
                        "properties": {
                            "source": {"const": "events"},
                            "path": {"type": "string"},
                            "convention": {"enum": ["PostTrade", "PreTrade"]},
                        },
                        "required": ["source", "path"],
                        "additionalProperties": False,
                    },
                    {
                        "type": "object",
                        "properties": {
                            "source": {"const": "simulate"},
                            "model": _model,
                            "n": _posint,
                            "noise_dp": {"type": "number", "minimum": 0},
                            "noise_v": {"type": "number", "minimum": 0},
                            "burn": {"type": "integer", "minimum": 0},
                        },
                        "required": ["source", "model", "n"],
                        "additionalProperties": False,
                    },
                ]
            },
            "p": _posint,
            "kind": {"enum": ["TIM", "Hasbrouck"]},
        },
        "required": ["data", "p"],
        "additionalProperties": False,
    },
    "trajectory": {
        "type": "object",
        "properties": {
            "model": _model,
            "T": _posint,
            "horizon": _posint,
            "delta_v": _list_of(_num),
            "kappa": _list_of({"enum": [0, 1]}),
            "engine": {"enum": ["iter", "closed"]},
        },
        "required": ["model", "T", "horizon", "delta_v"],
        "additionalProperties": False,
    },
    "continuous": {
        "type": "object",
        "properties": {
            "alpha": _list_of(_unit),
            "V": _num,
            "lam": _pos,
            "beta": _pos,
            "rho": _pos,
            "T": _pos,
            "t_max": _pos,
            "dt": _pos,
            "oracle": {"type": "boolean"},
        },
        "required": ["alpha", "V", "lam", "beta", "rho", "T", "t_max", "dt"],
        "additionalProperties": False,
    },
    "discrete": {
        "type": "object",
        "properties": {
            "kernel_d": _kernel,
            "kernel_g": _kernel,
            "lam": {"type": "number", "minimum": 0},
            "alpha": _list_of(_unit),
            "V": _num,
            "T": _posint,
            "horizon": _posint,
            "dt": _pos,
            "noise_std": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2},
            "n_paths": _posint,
        },
        "required": ["kernel_d", "kernel_g", "lam", "alpha", "V", "T", "horizon"],
        "additionalProperties": False,
    },
    "diffusivity": {
        "type": "object",
        "properties": {
            "ar_coeffs": {"type": "array", "items": _num},
            "alpha": _unit,
            "lmf": {
                "type": "object",
                "properties": {
                    "n_metaorders": _posint,
                    "size_tail_exponent": _pos,
                    "child_size": _posint,
                    "max_length": _posint,
                },
                "required": ["n_metaorders", "size_tail_exponent"],
                "additionalProperties": False,
            },
            "noise_std": {"type": "number", "minimum": 0},
            "horizon": {"type": "integer", "minimum": 1000},
            "delta": {"type": "number", "minimum": 0},
            "fit_range": {"type": "array", "items": _posint, "minItems": 2, "maxItems": 2},
            "max_lag": _posint,
            "n_paths": _posint,
        },
        "required": ["ar_coeffs", "alpha", "lmf", "horizon"],
        "additionalProperties": False,
    },
}

BLOCK_SCHEMAS["sweep"] = {
    "type": "object",
    "properties": {
        "module": {"enum": list(SWEEPABLE)},
        "base": {"type": "object"},
        "grid": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {"type": "array", "minItems": 1},
        },
        "metrics": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "cap": _posint,
    },
    "required": ["module", "base", "grid"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "format_version": {"const": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_dir": {"type": "string"},
        **{c: BLOCK_SCHEMAS[c] for c in COMMANDS},
    },
    "required": ["format_version"],
    "additionalProperties": False,
}


def _errors(instance, schema, prefix: str) -> list[str]:
    v = jsonschema.Draft7Validator(schema)
    out = []
    for err in sorted(v.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path))):
        where = ".".join([prefix, *map(str, err.absolute_path)]) if prefix else ".".join(map(str, err.absolute_path))
        out.append(f"{where or '<root>'}: {err.message}")
    return out


def validate_config(cfg) -> str:
    """Check the whole config; return the command name or raise ConfigError."""
    if not isinstance(cfg, dict) or not cfg:
        raise ConfigError("empty config: expected format_version and one command block")
    problems = _errors(cfg, CONFIG_SCHEMA, "config")
    present = [c for c in COMMANDS if c in cfg]
    if len(present) != 1:
        problems.append(f"config: exactly one command block required, found {present or 'none'} "
                        f"(choose from {', '.join(COMMANDS)})")
    if not problems and present[0] == "sweep":
        sw = cfg["sweep"]
        problems += _errors(sw["base"], BLOCK_SCHEMAS[sw["module"]], "config.sweep.base")
        for key in sw["grid"]:
            if not _has_path(BLOCK_SCHEMAS[sw["module"]], key.split(".")):
                problems.append(f"config.sweep.grid.{key}: not a parameter of {sw['module']}")
    if problems:
        raise ConfigError("\n".join(problems))
    return present[0]


def _has_path(schema, parts) -> bool:
    if not parts:
        return True
    options = schema.get("oneOf", [schema])
    return any(parts[0] in s.get("properties", {}) and _has_path(s["properties"][parts[0]], parts[1:])
               for s in options)


# helpers ------------------------------------------------------------------------

@dataclass
class Context:
    out: Path
    base_dir: Path
    seed: int
    workers: int = 1

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


def _as_list(x):
    return list(x) if isinstance(x, list) else [x]


def _build_models(spec: dict, ctx: Context) -> list[tuple[str, linmodels.LinearModel]]:
    if spec["source"] == "file":
        path = ctx.path(spec["path"])
        if not path.exists():
            raise ConfigError(f"config.model.path: file not found: {path}")
        return [(path.stem, linmodels.read_model(path))]
    kw = {k: spec[k] for k in ("d_sum", "d_exponent", "g_exponent", "b0") if k in spec}
    return [(f"p{p}", irf.power_law_tim(p, **kw)) for p in _as_list(spec["p"])]


def _cell_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0])


def _metrics_row(m: irf.ImpactMetrics) -> dict:
    return {"peak": m.peak, "long_term": m.long_term, "reversion_ratio": m.reversion_ratio}


def _write_table(path: Path, rows: list[dict], columns: list[str] | None = None, metadata=None):
    cols = columns or list(dict.fromkeys(k for r in rows for k in r))
    write_csv(path, cols, ([r.get(c) for c in cols] for r in rows), metadata)


# commands -----------------------------------------------------------------------

def run_ingest(block: dict, ctx: Context) -> None:
    for key in ("messages", "orderbook"):
        if not ctx.path(block[key]).exists():
            raise ConfigError(f"config.ingest.{key}: file not found: {ctx.path(block[key])}")
    kw = {k: block[k] for k in ("asset_id", "include_hidden", "min_size", "invert_direction") if k in block}
    if "session" in block:
        kw["session"] = tuple(block["session"])
    series = marketdata.parse_trade_file(ctx.path(block["messages"]), ctx.path(block["orderbook"]), **kw)
    if block.get("merge", True):
        series = marketdata.merge_same_timestamp(series)
    minutes = block.get("clip_minutes", 30)
    if minutes:
        ns = int(round(minutes * 60 * 1e9))
        series = marketdata.clip_session(series, head=ns, tail=ns)
    marketdata.write_event_csv(series, ctx.out / "events.csv")
    conv = marketdata.PriceConvention(block.get("convention", "PostTrade"))
    if len(series) >= 2:
        ds = marketdata.price_changes(series, conv)
        write_csv(ctx.out / "dataset.csv", ("dp", "v"), zip(ds.dp, ds.v), {"convention": conv.value})
    _write_table(ctx.out / "ingest_summary.csv",
                 [{"asset_id": series.asset_id, "n_ticks": len(series), "rejected": series.rejected,
                   "warnings": ";".join(series.warnings)}])


def run_calibrate(block: dict, ctx: Context) -> None:
    data = block["data"]
    if data["source"] == "events":
        path = ctx.path(data["path"])
        if not path.exists():
            raise ConfigError(f"config.calibrate.data.path: file not found: {path}")
        series = marketdata.read_event_csv(path)
        ds = marketdata.price_changes(series, marketdata.PriceConvention(data.get("convention", "PostTrade")))
    else:
        (_, truth), *_ = _build_models(data["model"], ctx)
        ds = linmodels.simulate(truth, data["n"], noise_dp=data.get("noise_dp", 1.0),
                                noise_v=data.get("noise_v", 1.0), seed=ctx.seed, burn=data.get("burn"))
    model = linmodels.fit(ds, block["p"], linmodels.ModelKind(block.get("kind", "TIM")))
    linmodels.write_model(model, ctx.out / "model.csv")
    rad, sum_d, ok = linmodels.stationarity_report(linmodels.companion(model))
    _write_table(ctx.out / "stationarity.csv", [{"spectral_radius": rad, "sum_d": sum_d, "stationary": ok}])


def _trajectory(model, block, dv, kappa, engine="iter"):
    meta = irf.MetaorderSpec(dv, block["T"], block["horizon"], irf.Kappa(kappa))
    if engine == "closed" and meta.kappa is irf.Kappa.VOLUME_COUPLED:
        return irf.trajectory_closed(linmodels.companion(model), meta)
    return irf.trajectory_iter(model, meta)


def run_trajectory(block: dict, ctx: Context) -> None:
    rows = []
    for name, model in _build_models(block["model"], ctx):
        for dv in _as_list(block["delta_v"]):
            for kappa in _as_list(block.get("kappa", [0, 1])):
                traj = _trajectory(model, block, dv, kappa, block.get("engine", "iter"))
                fname = f"trajectory_{name}_dv{fmt(dv)}_kappa{kappa}.csv"
                irf.write_trajectory_csv(traj, ctx.out / fname, {"model": name, "kind": model.kind.value, "p": model.p})
                rows.append({"model": name, "delta_v": dv, "kappa": kappa, "file": fname,
                             **_metrics_row(irf.impact_metrics(traj))})
                log.info("wrote %s", fname)
    _write_table(ctx.out / "metrics.csv", rows)


def _cparams(block, alpha):
    return cont.ContinuousParams(alpha, block["V"], block["lam"], block["beta"], block["rho"], block["T"])


def _continuous_metrics(pc: cont.ContinuousParams, t_max: float) -> dict:
    peak = cont.price_closed(pc, pc.T)
    lt = cont.price_closed(pc, t_max)
    return {"peak": peak, "long_term": lt, "reversion_ratio": (peak - lt) / peak if peak else None,
            "asymptote": cont.asymptote(pc) if pc.stationary else None}


def run_continuous(block: dict, ctx: Context) -> None:
    rows = []
    n = int(round(block["t_max"] / block["dt"]))
    t = block["dt"] * np.arange(n + 1)
    for alpha in _as_list(block["alpha"]):
        pc = _cparams(block, alpha)
        tag = f"alpha{fmt(alpha)}"
        meta = {"alpha": fmt(alpha), "model": "mtim-continuous"}
        price = cont.price_closed(pc, t)
        cont.write_grid_csv(cont.GridFunction(0.0, block["dt"], price), ctx.out / f"price_{tag}.csv", meta)
        cont.write_grid_csv(cont.GridFunction(0.0, block["dt"], cont.volume_closed(pc, t)),
                            ctx.out / f"volume_{tag}.csv", meta)
        row = {"alpha": alpha, **_continuous_metrics(pc, block["t_max"])}
        if block.get("oracle", False):
            _, po = cont.oracle(pc, block["dt"], block["t_max"])
            cont.write_grid_csv(po, ctx.out / f"oracle_price_{tag}.csv", meta)
            row["oracle_max_abs_error"] = float(np.max(np.abs(po.values - price)))
        rows.append(row)
    _write_table(ctx.out / "metrics.csv", rows)


def _dparams(block, alpha, seed):
    return disc.DiscreteParams(
        kernel_d=disc.KernelSpec(block["kernel_d"]["family"], block["kernel_d"]["param"], "VolumeD"),
        kernel_g=disc.KernelSpec(block["kernel_g"]["family"], block["kernel_g"]["param"], "PriceG"),
        lam=block["lam"], alpha=alpha, V=block["V"], T=block["T"], horizon=block["horizon"],
        dt=block.get("dt", 1.0), noise_std=tuple(block.get("noise_std", (0.0, 0.0))), seed=seed,
    )


def _discrete_traj(p: disc.DiscreteParams, n_paths: int, workers: int = 1):
    if n_paths > 1:
        return disc.monte_carlo(p, n_paths, workers=workers).mean
    return disc.simulate(p)


def run_discrete(block: dict, ctx: Context) -> None:
    rows = []
    for alpha in _as_list(block["alpha"]):
        p = _dparams(block, alpha, ctx.seed)
        traj = _discrete_traj(p, block.get("n_paths", 1), ctx.workers)
        fname = f"discrete_alpha{fmt(alpha)}.csv"
        disc.write_discrete_csv(traj, ctx.out / fname)
        rows.append({"alpha": alpha, "file": fname, **_metrics_row(irf.impact_metrics(traj)),
                     "criticality_margin": disc.criticality_margin(p)})
    _write_table(ctx.out / "metrics.csv", rows)


def _flow_params(block, seed):
    lmf = block["lmf"]
    flow = marketdata.LmfFlowParams(lmf["n_metaorders"], lmf["size_tail_exponent"], block["horizon"],
                                    child_size=lmf.get("child_size", 1), seed=seed,
                                    max_length=lmf.get("max_length"))
    return diff.StationaryFlowParams(block["ar_coeffs"], block["alpha"], flow,
                                     block.get("noise_std", 0.0), block["horizon"], seed)


def _diffusivity_report(block, seed):
    p = _flow_params(block, seed)
    v = diff.simulate_stationary_flow(p)
    fr = tuple(block.get("fit_range", (10, 1000)))
    n_paths = block.get("n_paths", 1)
    acf_vals = diff.ensemble_acf(p, n_paths, fr[1]) if n_paths > 1 else None
    r = diff.long_memory_report(v, block["ar_coeffs"], block.get("delta", 0.25), fr, acf_vals)
    return v, r


def run_diffusivity(block: dict, ctx: Context) -> None:
    v, report = _diffusivity_report(block, ctx.seed)
    _write_table(ctx.out / "report.csv", [report.as_row()])
    max_lag = block.get("max_lag", tuple(block.get("fit_range", (10, 1000)))[1])
    a = diff.acf(v, max_lag)
    write_csv(ctx.out / "acf.csv", ("lag", "value"), zip(range(len(a)), a))


# sweep --------------------------------------------------------------------------

def _set_path(d: dict, dotted: str, value):
    parts = dotted.split(".")
    for k in parts[:-1]:
        d = d.setdefault(k, {})
    d[parts[-1]] = value


def _cell_metrics(module: str, block: dict, seed: int) -> dict:
    if module == "continuous":
        alphas = _as_list(block["alpha"])
        if len(alphas) != 1:
            raise ConfigError("sweep cells need a scalar alpha")
        return _continuous_metrics(_cparams(block, alphas[0]), block["t_max"])
    if module == "discrete":
        alphas = _as_list(block["alpha"])
        if len(alphas) != 1:
            raise ConfigError("sweep cells need a scalar alpha")
        p = _dparams(block, alphas[0], seed)
        traj = _discrete_traj(p, block.get("n_paths", 1))
        return {**_metrics_row(irf.impact_metrics(traj)), "criticality_margin": disc.criticality_margin(p)}
    if module == "trajectory":
        spec = block["model"]
        if spec["source"] != "synthetic" or isinstance(spec["p"], list):
            raise ConfigError("sweep cells need a synthetic model with scalar p")
        (_, model), = _build_models(spec, Context(Path("."), Path("."), seed))
        dv = _as_list(block["delta_v"])
        kappa = _as_list(block.get("kappa", 1))
        if len(dv) != 1 or len(kappa) != 1:
            raise ConfigError("sweep cells need scalar delta_v and kappa")
        traj = _trajectory(model, block, dv[0], kappa[0], block.get("engine", "iter"))
        return _metrics_row(irf.impact_metrics(traj))
    _, r = _diffusivity_report(block, seed)
    return {"gamma_hat": r.gamma_hat, "gamma_se": r.gamma_se, "spectral_slope": r.spectral_slope,
            "exponent": r.variance_exponent, "amplification": r.amplification}


def _run_cell(args):
    module, base, keys, values, seed = args
    block = copy.deepcopy(base)
    for k, val in zip(keys, values):
        _set_path(block, k, val)
    problems = _errors(block, BLOCK_SCHEMAS[module], "cell")
    if problems:
        return "failed", "; ".join(problems), {}
    try:
        return "ok", "", _cell_metrics(module, block, seed)
    except Exception as exc:  # isolate the cell
        return "failed", f"{type(exc).__name__}: {exc}", {}


def _sort_key(x):
    return (0, x, "") if isinstance(x, (int, float)) and not isinstance(x, bool) else (1, 0, str(x))


def run_sweep(block: dict, ctx: Context) -> None:
    module = block["module"]
    keys = sorted(block["grid"])
    axes = [sorted(block["grid"][k], key=_sort_key) for k in keys]
    n_cells = int(np.prod([len(a) for a in axes]))
    cap = block.get("cap", DEFAULT_CELL_CAP)
    if n_cells > cap:
        raise ConfigError(f"config.sweep.grid: {n_cells} cells exceed the cap of {cap}")
    cells = list(itertools.product(*axes))
    jobs = [(module, block["base"], keys, vals, _cell_seed(ctx.seed, i)) for i, vals in enumerate(cells)]
    if ctx.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(ctx.workers) as ex:
            results = list(ex.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    wanted = block.get("metrics")
    rows = []
    for vals, (status, err, metrics) in zip(cells, results):
        if wanted:
            metrics = {m: metrics.get(m) for m in wanted}
        rows.append({**dict(zip(keys, vals)), "status": status, "error": err, **metrics})
    cols = keys + ["status", "error"] + (wanted or list(dict.fromkeys(k for _, _, m in results for k in m)))
    _write_table(ctx.out / "sweep.csv", rows, cols, {"module": module, "cells": n_cells})
    failed = sum(r["status"] == "failed" for r in rows)
    log.info("sweep: %d cells, %d failed", n_cells, failed)


RUNNERS = {
    "ingest": run_ingest, "calibrate": run_calibrate, "trajectory": run_trajectory,
    "continuous": run_continuous, "discrete": run_discrete, "diffusivity": run_diffusivity,
    "sweep": run_sweep,
}


def write_manifest(out: Path) -> None:
    rows = []
    for root, _, files in os.walk(out):
        for f in files:
            p = Path(root) / f
            rel = p.relative_to(out).as_posix()
            if rel == "manifest.csv":
                continue
            rows.append((rel, sha256_file(p), p.stat().st_size))
    rows.sort()
    write_csv(out / "manifest.csv", ("file", "sha256", "bytes"), rows)


def _origin_module(exc: BaseException) -> str:
    for frame in reversed(traceback.extract_tb(exc.__traceback__)):
        parts = Path(frame.filename).parts
        if "impactlab" in parts and not frame.filename.endswith("cli.py"):
            return "impactlab." + Path(frame.filename).stem
    return "impactlab.cli"


def run(cfg: dict, *, config_dir: Path = Path("."), seed: int | None = None,
        out: str | os.PathLike | None = None, workers: int = 1) -> int:
    """Validate and execute one config; return the process exit code."""
    try:
        command = validate_config(cfg)
        out_dir = Path(out) if out is not None else (
            config_dir / cfg["output_dir"] if "output_dir" in cfg else None)
        if out_dir is None:
            raise ConfigError("config.output_dir: missing (or pass --out)")
        out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ConfigError(f"config.output_dir: {out_dir} is not writable")
        ctx = Context(out_dir, config_dir, seed if seed is not None else cfg.get("seed", 0), workers)
        log.info("running %s into %s (seed %d)", command, out_dir, ctx.seed)
        RUNNERS[command](cfg[command], ctx)
        write_manifest(out_dir)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error in {_origin_module(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="impactlab", description="Run a market-impact experiment from a YAML config.")
    ap.add_argument("--config", required=True, help="YAML experiment file")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--workers", type=int, default=1, help="parallel workers for sweeps and Monte Carlo")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error:\n--seed: must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("config error:\n--workers: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    path = Path(args.config)
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        print(f"config error:\n--config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except yaml.YAMLError as exc:
        print(f"config error:\n{path}: invalid YAML: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, config_dir=path.parent, seed=args.seed, out=args.out, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
