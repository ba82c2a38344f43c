"""Command line: ``run <config.json>``, ``check <config.json>``, ``list-presets``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import experiments as ex
from .connections import PAIRS, make_pair
from .dynamics import BoundaryGrid
from .geometry import MODELS, ConfigurationError, build_grid, make_model

EXPERIMENTS = ("ckt-scan", "finite-degree", "gauge-test", "identities", "reconstruct", "scatter",
               "transform", "volume-decay")

TOP_KEYS = {"model", "pair", "grid", "ray", "experiment", "seed", "output_dir", "options"}
REQUIRED = ("model", "pair", "grid", "experiment", "seed", "output_dir")
RAY_DEFAULTS = {"h": 1e-3, "t_max": 50.0, "tol_exit": 1e-10}

OPTION_DEFAULTS = {
    "identities": {"fields": 3, "m_values": [1, 2, 3], "beurling_m": [1, 2, 3, 4]},
    "ckt-scan": {"m": 1, "dirichlet": True, "k": 4, "levels": None},
    "transform": {"boundary": [32, 16], "degree": 1, "samples": 10},
    "scatter": {"boundary": [32, 16]},
    "gauge-test": {"boundary": [64, 32], "gamma": 1.0, "separation": True},
    "reconstruct": {"levels": [[24, 16], [48, 32], [96, 64]], "reg": 1e-6, "tol": 1e-9, "max_iter": 3000,
                    "matrix_h": 0.02, "data_h": 0.005, "width": 0.35},
    "finite-degree": {"m_source": 0},
    "volume-decay": {"t_values": [float(t) for t in range(0, 21)], "fit": [5.0, 20.0]},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class ExperimentConfig:
    model: dict
    pair: dict
    grid: tuple
    ray: dict
    experiment: str
    seed: int
    output_dir: str
    options: dict


def _named(section, value):
    if isinstance(value, str):
        return {"name": value, "params": {}}
    if not isinstance(value, dict):
        raise ConfigError(f"{section}: expected a name or an object")
    extra = set(value) - {"name", "params"}
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {sorted(extra)}")
    if "name" not in value:
        raise ConfigError(f"{section}.name is required")
    params = value.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"{section}.params must be an object")
    for k, v in params.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"{section}.params.{k} must be numeric")
    return {"name": value["name"], "params": dict(params)}


def _positive(key, v, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        raise ConfigError(f"{key} must be a {'positive integer' if integer else 'positive number'}")
    if not v > 0:
        raise ConfigError(f"{key} must be positive (got {v})")
    return v


def parse_config(text: str) -> ExperimentConfig:
    """Strict parse; unknown keys and non-positive numbers are rejected."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)}")
    for k in REQUIRED:
        if k not in raw:
            raise ConfigError(f"missing required key {k!r}")
    model = _named("model", raw["model"])
    pair = _named("pair", raw["pair"])
    if model["name"] not in MODELS:
        raise ConfigError(f"model.name: unknown model {model['name']!r}")
    if pair["name"] not in PAIRS:
        raise ConfigError(f"pair.name: unknown pair {pair['name']!r}")
    grid = raw["grid"]
    if not isinstance(grid, list) or len(grid) != 3:
        raise ConfigError("grid must be a list [N1, N2, Ntheta]")
    grid = tuple(_positive(f"grid[{i}]", v, integer=True) for i, v in enumerate(grid))
    ray = dict(RAY_DEFAULTS)
    rr = raw.get("ray", {})
    if not isinstance(rr, dict):
        raise ConfigError("ray must be an object")
    for k, v in rr.items():
        if k not in RAY_DEFAULTS:
            raise ConfigError(f"ray: unknown key {k!r}")
        ray[k] = _positive(f"ray.{k}", v)
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {exp!r}")
    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    out = raw["output_dir"]
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir must be a nonempty string")
    opts = dict(OPTION_DEFAULTS[exp])
    given = raw.get("options", {})
    if not isinstance(given, dict):
        raise ConfigError("options must be an object")
    for k, v in given.items():
        if k not in opts:
            raise ConfigError(f"options: unknown key {k!r} for experiment {exp!r}")
        opts[k] = v
    _check_options(exp, opts)
    cfg = ExperimentConfig(model, pair, grid, ray, exp, seed, out, opts)
    _build(cfg)  # surfaces parameter errors at parse time
    return cfg


def _check_options(exp, o):
    def ints(key, v, n=None):
        if not isinstance(v, list) or (n is not None and len(v) != n):
            raise ConfigError(f"options.{key} must be a list" + (f" of {n} integers" if n else ""))
        return [_positive(f"options.{key}", x, integer=True) for x in v]

    for key in ("boundary",):
        if key in o:
            ints(key, o[key], 2)
    for key in ("fields", "samples", "k", "max_iter", "m"):
        if key in o:
            _positive(f"options.{key}", o[key], integer=True)
    for key in ("reg",):
        if key in o and (not isinstance(o[key], (int, float)) or o[key] < 0):
            raise ConfigError("options.reg must be nonnegative")
    for key in ("tol", "matrix_h", "data_h", "width", "gamma"):
        if key in o:
            _positive(f"options.{key}", o[key])
    if "levels" in o and o["levels"] is not None:
        if exp == "reconstruct":
            for lv in o["levels"]:
                ints("levels", lv, 2)
        else:
            ints("levels", o["levels"])
    if "m_values" in o:
        ints("m_values", o["m_values"])
    if "beurling_m" in o:
        ints("beurling_m", o["beurling_m"])
    if "m_source" in o and (not isinstance(o["m_source"], int) or o["m_source"] < 0):
        raise ConfigError("options.m_source must be a nonnegative integer")
    if "degree" in o and (not isinstance(o["degree"], int) or o["degree"] < 0):
        raise ConfigError("options.degree must be a nonnegative integer")
    if "fit" in o:
        if not isinstance(o["fit"], list) or len(o["fit"]) != 2:
            raise ConfigError("options.fit must be [t_lo, t_hi]")
    if "t_values" in o and not all(isinstance(t, (int, float)) and t >= 0 for t in o["t_values"]):
        raise ConfigError("options.t_values must be nonnegative numbers")


def _build(cfg: ExperimentConfig):
    try:
        model = make_model(cfg.model["name"], **cfg.model["params"])
        pair = make_pair(cfg.pair["name"], model, **cfg.pair["params"])
        grid = build_grid(model, *cfg.grid)
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return model, pair, grid


# ---------------------------------------------------------------------------
# running

ANCHORS = {
    "pestov_identity": "Pestov identity with connection, two-dimensional form",
    "pestov_identity_omega_m": "Pestov identity restricted to Omega_m",
    "mu_commutator_curvature": "[mu_+, mu_-] = (i/2)(K V + *f)",
    "frame_structure_equations": "[X,V] = X_perp and [X,X_perp] = -K V",
    "beurling_contraction": "Beurling-type contraction on Omega_m",
    "abelian_curvature_integral": "integral of the abelian curvature over a closed surface vanishes",
    "ckt_triviality_boundary": "no twisted conformal Killing tensors vanishing on the boundary",
    "flat_torus_ckts": "flat torus carries constant conformal Killing tensors",
    "discrete_adjoint": "exact discrete transpose of the ray transform",
    "scattering_unitarity": "scattering data take values in U(n)",
    "scattering_gauge_invariance": "scattering data invariant under gauges trivial on the boundary",
    "gauge_determination": "scattering data separate pairs with different curvature",
    "injectivity_degree_zero": "injectivity of the attenuated transform on degree-zero sources",
    "volume_decay_exponential": "exponential decay of the non-escaping volume",
}


def execute(cfg: ExperimentConfig) -> ex.ExperimentResult:
    model, pair, grid = _build(cfg)
    o, ray = cfg.options, cfg.ray
    e = cfg.experiment
    if e == "identities":
        return ex.identity_suite(model, pair, grid, cfg.seed, o["fields"], tuple(o["m_values"]), tuple(o["beurling_m"]))
    if e == "ckt-scan":
        levels = o["levels"] or [cfg.grid[0]]
        return ex.ckt_scan(model, pair, levels, cfg.grid[2], o["m"], o["dirichlet"], o["k"])
    if e == "transform":
        return ex.transform_experiment(model, pair, grid, BoundaryGrid(model, *o["boundary"]), ray["h"],
                                       ray["t_max"], cfg.seed, o["degree"], o["samples"])
    if e == "scatter":
        return ex.scatter_experiment(model, pair, BoundaryGrid(model, *o["boundary"]), ray["h"], ray["t_max"])
    if e == "gauge-test":
        return ex.gauge_experiment(model, pair, BoundaryGrid(model, *o["boundary"]), ray["h"], ray["t_max"],
                                   o["gamma"], bool(o["separation"]))
    if e == "reconstruct":
        return ex.reconstruct_experiment(model, pair, grid, [tuple(lv) for lv in o["levels"]], o["matrix_h"],
                                         o["data_h"], ray["t_max"], o["reg"], o["tol"], o["max_iter"], o["width"])
    if e == "finite-degree":
        return ex.finite_degree(model, pair, grid, o["m_source"], ray["h"], cfg.seed)
    if e == "volume-decay":
        return ex.volume_decay_experiment(model, grid, o["t_values"], tuple(o["fit"]), t_max=ray["t_max"])
    raise ConfigError(f"unknown experiment {e!r}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _strip_timing(obj):
    """Drop wall-clock fields so outputs depend only on the configuration."""
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if not k.startswith("seconds")}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def write_outputs(cfg: ExperimentConfig, result: ex.ExperimentResult, config_text: str):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, (head, rows) in sorted(result.tables.items()):
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        files.append(path.name)
    summary = {
        "experiment": result.experiment,
        "model": cfg.model,
        "pair": cfg.pair,
        "grid": list(cfg.grid),
        "ray": cfg.ray,
        "seed": cfg.seed,
        "options": cfg.options,
        "passed": result.passed,
        "checks": [c.as_dict() for c in result.checks],
        "results": _strip_timing(_jsonable(result.summary)),
    }
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    files.append("summary.json")
    manifest = {
        "experiment": result.experiment,
        "config": json.loads(config_text),
        "checks": [{"name": c.name, "anchor": c.anchor, "statement": ANCHORS.get(c.anchor, "")}
                   for c in result.checks],
        "files": sorted(files + ["manifest.json"]),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def list_presets() -> str:
    lines = ["models:"]
    lines += [f"  {name}" for name in sorted(MODELS)]
    lines.append("pairs:")
    lines += [f"  {name}" for name in sorted(PAIRS)]
    lines.append("experiments:")
    lines += [f"  {name}" for name in sorted(EXPERIMENTS)]
    return "\n".join(lines) + "\n"


def thread_cap() -> int | None:
    """Value of ``HOLONOMY_THREADS`` (validated), or None."""
    raw = os.environ.get("HOLONOMY_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HOLONOMY_THREADS must be a positive integer (got {raw!r})") from None
    if n < 1:
        raise ConfigError("HOLONOMY_THREADS must be >= 1")
    return n


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="holoray", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment")
    p_run.add_argument("config")
    p_chk = sub.add_parser("check", help="validate a configuration without running it")
    p_chk.add_argument("config")
    sub.add_parser("list-presets", help="list models, pairs and experiments")
    args = parser.parse_args(argv)

    if args.command == "list-presets":
        sys.stdout.write(list_presets())
        return 0
    try:
        thread_cap()
        text = Path(args.config).read_text()
        cfg = parse_config(text)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "check":
        print(f"ok: {cfg.experiment} on {cfg.model['name']} with {cfg.pair['name']}")
        return 0
    try:
        result = execute(cfg)
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    write_outputs(cfg, result, text)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (tol {c.tolerance:g}) {c.detail}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
