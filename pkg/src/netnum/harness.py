"""Experiment harness: config-driven runs, sweeps, metric files, rate fits.

A run is described by a JSON config (schema-validated before anything
executes) naming the instance (a file or generator parameters), the
algorithm, its parameters, the reference policy and the output paths.
Each run writes

* a metrics CSV with the fixed header
  ``slot,rel_err,residual,util_gap,lyapunov,kkt_res,virt_queue,phys_queue``
  (one row per slot, floats at full precision so every summary number is
  recomputable from the CSV alone),
* an optional final-state JSON dump,
* a summary JSON: slots to 1% relative error, final utility gap, peak
  total queue, and the fitted tail slope/R^2 of log relative error.

Exit codes: 0 success, 2 invalid config, 3 divergence, 4 nonconvergence
within budget.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import jsonschema
import numpy as np

from . import admm, baselines
from .admm import AdmmParams, DivergenceError, NotConvergedError, Reference
from .network import generate_er_instance, load_instance

__all__ = [
    "CONFIG_SCHEMA",
    "ConfigError",
    "ExperimentOutcome",
    "load_config",
    "run_experiment",
    "run_sweep",
    "fit_linear_rate",
    "write_metrics_csv",
    "read_metrics_csv",
    "combine_metrics_csv",
    "summarize_metrics",
    "METRICS_HEADER",
    "EXIT_OK",
    "EXIT_BAD_CONFIG",
    "EXIT_DIVERGED",
    "EXIT_NOT_CONVERGED",
]

METRICS_HEADER = "slot,rel_err,residual,util_gap,lyapunov,kkt_res,virt_queue,phys_queue"

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_NOT_CONVERGED = 4

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["instance", "algorithm", "outputs"],
    "additionalProperties": False,
    "properties": {
        "instance": {
            "type": "object",
            "oneOf": [{"required": ["file"]}, {"required": ["generator"]}],
            "additionalProperties": False,
            "properties": {
                "file": {"type": "string"},
                "generator": {
                    "type": "object",
                    "required": ["nodes", "p", "flows", "seed"],
                    "additionalProperties": False,
                    "properties": {
                        "nodes": {"type": "integer", "minimum": 2},
                        "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "flows": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                        "wireless": {"type": "boolean"},
                    },
                },
            },
        },
        "algorithm": {"enum": ["admm", "qca", "proximal"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "K": {"type": "number", "exclusiveMinimum": 0},
                "max_slots": {"type": "integer", "minimum": 0},
                "tol_residual": {"type": "number", "exclusiveMinimum": 0},
                "tol_step": {"type": "number", "exclusiveMinimum": 0},
                "tol_rel_err": {"type": ["number", "null"]},
                "allow_unsafe_tau": {"type": "boolean"},
            },
        },
        "reference": {
            "oneOf": [
                {"enum": ["compute", "none"]},
                {
                    "type": "object",
                    "required": ["load"],
                    "additionalProperties": False,
                    "properties": {"load": {"type": "string"}},
                },
            ]
        },
        "channel": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["static", "fading"]},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "outputs": {
            "type": "object",
            "required": ["metrics"],
            "additionalProperties": False,
            "properties": {
                "metrics": {"type": "string"},
                "state": {"type": "string"},
                "summary": {"type": "string"},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    """Read and validate a config file; raises ConfigError with the
    offending line or field."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}")
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field '{where}': {exc.message}")
    if cfg.get("channel", {}).get("mode") == "fading":
        if cfg["algorithm"] != "admm":
            raise ConfigError("config field 'channel': fading requires algorithm=admm")
        if cfg.get("reference", "compute") != "none":
            raise ConfigError(
                "config field 'reference': fading runs have no fixed optimum; "
                "set reference to 'none'"
            )


def _build_instance(cfg):
    spec = cfg["instance"]
    if "file" in spec:
        return load_instance(spec["file"])
    g = spec["generator"]
    interference = "node-exclusive" if g.get("wireless") else "none"
    return generate_er_instance(
        g["nodes"], g["p"], g["flows"], g["seed"], interference=interference
    )


def _build_params(cfg) -> AdmmParams:
    p = dict(cfg.get("params", {}))
    p.pop("K", None)
    return AdmmParams(**p)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_metrics_csv(path, metrics):
    lines = [METRICS_HEADER]
    for m in metrics:
        lines.append(",".join(_fmt(v) for v in m.as_row()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metrics_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}
    return cols


def combine_metrics_csv(path, results):
    """Stack several runs into one file, with a leading algorithm column."""
    lines = ["algorithm," + METRICS_HEADER]
    for res in results:
        for m in res.metrics:
            lines.append(res.algorithm + "," + ",".join(_fmt(v) for v in m.as_row()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def fit_linear_rate(metrics, lo=1e-8, hi=1e-1, min_points=20):
    """Least-squares slope and R^2 of log(relative error) over the tail.

    The window runs from the first slot with rel. error below ``hi`` to
    the first slot at or below ``lo`` (points outside (lo, hi) excluded).
    ``metrics`` may be a CSV path or a dict of columns.  Raises ValueError
    when the window holds fewer than min_points points.
    """
    if isinstance(metrics, (str, os.PathLike)):
        metrics = read_metrics_csv(metrics)
    slots = np.asarray(metrics["slot"], dtype=float)
    rel = np.asarray(metrics["rel_err"], dtype=float)
    finite = np.isfinite(rel)
    below_hi = np.nonzero(finite & (rel < hi))[0]
    if below_hi.size == 0:
        raise ValueError("relative error never entered the fit window")
    start = below_hi[0]
    hit_lo = np.nonzero(finite & (rel <= lo))[0]
    end = hit_lo[0] if hit_lo.size else rel.size
    idx = np.nonzero(finite & (rel > lo) & (rel < hi))[0]
    idx = idx[(idx >= start) & (idx < end)]
    if idx.size < min_points:
        raise ValueError(
            f"only {idx.size} points in the fit window (need {min_points})"
        )
    t = slots[idx]
    y = np.log(rel[idx])
    slope, intercept = np.polyfit(t, y, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(r2)


def summarize_metrics(cols: dict) -> dict:
    """Summary numbers derived from the metrics columns alone."""
    rel = np.asarray(cols["rel_err"], dtype=float)
    slots = np.asarray(cols["slot"], dtype=float)
    good = np.isfinite(rel) & (rel <= 0.01)
    slots_to_tol = int(slots[np.nonzero(good)[0][0]]) if np.any(good) else None
    gap = np.asarray(cols["util_gap"], dtype=float)
    final_gap = float(gap[-1]) if gap.size and math.isfinite(gap[-1]) else None
    queue = np.asarray(cols["phys_queue"], dtype=float)
    max_queue = float(np.nanmax(queue)) if queue.size else None
    try:
        slope, r2 = fit_linear_rate(cols)
    except ValueError:
        slope, r2 = None, None
    return {
        "slots_to_tol": slots_to_tol,
        "final_gap": final_gap,
        "max_queue": max_queue,
        "fitted_slope": slope,
        "fit_r2": r2,
    }


@dataclass
class ExperimentOutcome:
    exit_code: int
    summary: dict
    message: str = ""
    result: object = None


def _state_dump(result) -> dict:
    state = result.state
    out = {"x": state.x.tolist(), "r": np.asarray(state.r).tolist()}
    dual = getattr(state, "dual", None)
    if dual is not None:
        out["dual"] = dual.tolist()
    return out


def run_experiment(cfg) -> ExperimentOutcome:
    """Execute one config end to end; never raises for anticipated failure
    modes (bad config, divergence, nonconvergence) — see exit_code."""
    if isinstance(cfg, (str, os.PathLike)):
        try:
            cfg = load_config(cfg)
        except ConfigError as exc:
            return ExperimentOutcome(EXIT_BAD_CONFIG, {}, str(exc))
    else:
        try:
            validate_config(cfg)
        except ConfigError as exc:
            return ExperimentOutcome(EXIT_BAD_CONFIG, {}, str(exc))

    try:
        inst = _build_instance(cfg)
        params = _build_params(cfg)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        return ExperimentOutcome(EXIT_BAD_CONFIG, {}, f"instance/params: {exc}")

    ref_policy = cfg.get("reference", "compute")
    reference = None
    try:
        if ref_policy == "compute":
            reference = admm.reference_solve(inst, AdmmParams(rho=params.rho))
        elif isinstance(ref_policy, dict):
            with open(ref_policy["load"]) as fh:
                raw = json.load(fh)
            reference = Reference(
                x=np.array(raw["x"]),
                r=np.array(raw["r"]),
                dual=np.array(raw["dual"]),
                total_utility=raw["total_utility"],
                kkt=raw.get("kkt", float("nan")),
            )
    except NotConvergedError as exc:
        return ExperimentOutcome(EXIT_NOT_CONVERGED, {}, f"reference solve: {exc}")
    except OSError as exc:
        return ExperimentOutcome(EXIT_BAD_CONFIG, {}, f"reference load: {exc}")

    sampler = None
    channel = cfg.get("channel", {"mode": "static"})
    if channel["mode"] == "fading":
        rng = np.random.default_rng(channel.get("seed", 0))
        n_links = inst.graph.n_links
        sampler = lambda t: rng.uniform(0.0, 1.0, size=n_links)  # noqa: E731

    algorithm = cfg["algorithm"]
    try:
        if algorithm == "admm":
            result = admm.run(inst, params, reference=reference, capacity_sampler=sampler)
        elif algorithm == "proximal":
            result = baselines.run_proximal(inst, params, reference=reference)
        else:
            K = cfg.get("params", {}).get("K", 100.0)
            result = baselines.run_qca(
                inst, K=K, max_slots=params.max_slots, reference=reference
            )
    except DivergenceError as exc:
        return ExperimentOutcome(EXIT_DIVERGED, {}, str(exc))
    except NotConvergedError as exc:
        return ExperimentOutcome(EXIT_NOT_CONVERGED, {}, str(exc))
    except ValueError as exc:  # e.g. per-link weights below the degree floor
        return ExperimentOutcome(EXIT_BAD_CONFIG, {}, f"params: {exc}")

    outputs = cfg["outputs"]
    write_metrics_csv(outputs["metrics"], result.metrics)
    if "state" in outputs:
        with open(outputs["state"], "w") as fh:
            json.dump(_state_dump(result), fh)
    summary = summarize_metrics(read_metrics_csv(outputs["metrics"]))
    if "summary" in outputs:
        with open(outputs["summary"], "w") as fh:
            json.dump(summary, fh, indent=2)

    # fading runs chase a moving optimum and qca hovers: for both, running
    # the full slot budget is the planned outcome, not a failure
    needs_convergence = algorithm not in ("qca",) and channel["mode"] != "fading"
    if needs_convergence and not result.converged:
        return ExperimentOutcome(
            EXIT_NOT_CONVERGED, summary, "stopping rule not met within budget", result
        )
    return ExperimentOutcome(EXIT_OK, summary, "", result)


SWEEPABLE = ("tau", "rho", "K", "beta")


def run_sweep(cfg, param, values):
    """Run one experiment per value of a swept parameter.

    Output paths gain a _<param><value> suffix; returns the list of
    (value, ExperimentOutcome).
    """
    if param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep '{param}' (choose from {SWEEPABLE})")
    outcomes = []
    for v in values:
        sub = json.loads(json.dumps(cfg))
        sub.setdefault("params", {})[param] = v
        tag = f"_{param}{v:g}"
        outs = sub["outputs"]
        for key in list(outs):
            root, ext = os.path.splitext(outs[key])
            outs[key] = root + tag + ext
        outcomes.append((v, run_experiment(sub)))
    return outcomes
