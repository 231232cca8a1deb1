"""Experiment configuration: JSON schema, validation and object construction.

Agent ids in configuration files are 1-based. Every random source needs
an explicit seed.
"""

import copy
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .asynchrony import DelaySpec, ScheduleSpec
from .engine import EngineConfig
from .exceptions import InvalidArgument
from .metrics import max_safe_stepsize
from .objective import estimate_block_lipschitz
from .problems import gen_lasso, gen_matrix_completion, load_instance
from .problems.lasso import LassoInstance
from .surrogate import SurrogateSpec

SCHEMA_VERSION = 1

_seed = {"type": "integer", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}

_LASSO = {
    "type": "object",
    "properties": {
        "type": {"const": "lasso"},
        "m": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "N_agents": {"type": "integer", "minimum": 1},
        "density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "sigma_noise": {"type": "number", "minimum": 0},
        "lambda": {"type": "number", "minimum": 0},
        "bandwidth": {"type": ["integer", "null"], "minimum": 0},
        "seed": _seed,
    },
    "required": ["type", "m", "n", "N_agents", "seed"],
    "additionalProperties": False,
}

_MC = {
    "type": "object",
    "properties": {
        "type": {"const": "matrix_completion"},
        "M": {"type": "integer", "minimum": 1},
        "Ncols": {"type": "integer", "minimum": 1},
        "r": {"type": "integer", "minimum": 1},
        "sample_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "N_agents": {"type": "integer", "minimum": 2},
        "lambda": _pos,
        "xi": _pos,
        "seed": _seed,
    },
    "required": ["type", "M", "Ncols", "N_agents", "seed"],
    "additionalProperties": False,
}

_FILE = {
    "type": "object",
    "properties": {"type": {"const": "file"}, "path": {"type": "string"}},
    "required": ["type", "path"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "problem": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["lasso", "matrix_completion", "file"]}},
            "allOf": [
                {"if": {"properties": {"type": {"const": "lasso"}}}, "then": _LASSO},
                {"if": {"properties": {"type": {"const": "matrix_completion"}}}, "then": _MC},
                {"if": {"properties": {"type": {"const": "file"}}}, "then": _FILE},
            ],
        },
        "engine": {
            "type": "object",
            "properties": {
                "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "gamma_safe_fraction": {"type": "number", "exclusiveMinimum": 0,
                                        "exclusiveMaximum": 1},
                "max_iterations": {"type": "integer", "minimum": 0},
                "stop_tolerance": {"type": "number", "minimum": 0},
                "stop_metric": {"enum": ["MV", "prox_residual"]},
                "metrics_stride": {"type": "integer", "minimum": 1},
                "theory_mode": {"type": "boolean"},
                "lipschitz": _pos,
                "seed": _seed,
                "surrogate": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["linearized", "second-order", "partial-convex"]},
                        "tau": {"oneOf": [_pos, {"const": "L"}]},
                        "tau_overrides": {
                            "type": "object",
                            "patternProperties": {"^[1-9][0-9]*$": _pos},
                            "additionalProperties": False,
                        },
                        "adaptive": {"type": "boolean"},
                    },
                    "additionalProperties": False,
                },
                "schedule": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["cyclic", "shuffled-rounds", "clock-phase"]},
                        "seed": _seed,
                        "period_min": _pos,
                        "period_max": _pos,
                    },
                    "required": ["kind"],
                    "additionalProperties": False,
                    "if": {"properties": {"kind": {"enum": ["shuffled-rounds", "clock-phase"]}}},
                    "then": {"required": ["kind", "seed"]},
                },
                "delay": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["zero", "fixed", "uniform", "clock-phase"]},
                        "D": {"type": "integer", "minimum": 0},
                        "seed": _seed,
                    },
                    "required": ["kind"],
                    "additionalProperties": False,
                    "if": {"properties": {"kind": {"const": "uniform"}}},
                    "then": {"required": ["kind", "D", "seed"]},
                },
            },
            "required": ["seed"],
            "not": {"required": ["gamma", "gamma_safe_fraction"]},
            "additionalProperties": False,
        },
        "initial_point": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["zeros", "random"]},
                "seed": _seed,
                "scale": _pos,
            },
            "required": ["kind"],
            "additionalProperties": False,
            "if": {"properties": {"kind": {"const": "random"}}},
            "then": {"required": ["kind", "seed"]},
        },
        "reference": {
            "type": "object",
            "properties": {"compute_Vstar": {"type": "boolean"}, "tol": _pos},
            "additionalProperties": False,
        },
        "mode": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["simulate", "parallel"]},
                "workers": {"type": "integer", "minimum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "trace": {"type": "string"},
                "summary": {"type": "string"},
                "eps": {"type": "array", "items": _pos},
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema_version", "problem", "engine"],
    "additionalProperties": False,
}


class ConfigError(InvalidArgument):
    """The configuration file is malformed or violates the schema."""


def _path(error):
    parts = [str(p) for p in error.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_config(cfg):
    """Validate a parsed configuration; raise :class:`ConfigError` naming the field."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            if e.validator == "required":
                missing = [r for r in e.validator_value if r not in e.instance]
                msgs.append(f"{_path(e)}: missing required field(s) {', '.join(missing)}")
            elif e.validator == "additionalProperties":
                msgs.append(f"{_path(e)}: {e.message}")
            else:
                msgs.append(f"{_path(e)}: {e.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs))
    return cfg


def parse_config(text):
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    return validate_config(cfg)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


@dataclass
class Experiment:
    """Objects built from a validated configuration."""

    config: dict
    instance: object
    problem: object
    engine: EngineConfig
    x0: np.ndarray
    mode: str
    workers: int
    L: float
    B: int


def build_instance(problem_cfg):
    p = dict(problem_cfg)
    kind = p.pop("type")
    if kind == "lasso":
        return gen_lasso(p["m"], p["n"], p["N_agents"], density=p.get("density", 0.05),
                         sigma_noise=p.get("sigma_noise", 0.1), lam=p.get("lambda", 1.0),
                         seed=p["seed"], bandwidth=p.get("bandwidth"))
    if kind == "matrix_completion":
        return gen_matrix_completion(p["M"], p["Ncols"], r=p.get("r", 4),
                                     sample_fraction=p.get("sample_fraction", 0.1),
                                     N_agents=p["N_agents"], lam=p.get("lambda", 1.0),
                                     xi=p.get("xi", 1.0), seed=p["seed"])
    return load_instance(p["path"])


def build_experiment(cfg):
    """Instantiate problem, engine configuration and starting point."""
    cfg = validate_config(copy.deepcopy(cfg))
    inst = build_instance(cfg["problem"])
    problem = inst.to_problem()
    ip = cfg.get("initial_point", {"kind": "zeros"})
    if ip["kind"] == "random":
        rng = np.random.default_rng(ip["seed"])
        x0 = ip.get("scale", 1.0) * rng.standard_normal(problem.dim)
    else:
        x0 = np.zeros(problem.dim)
    e = cfg["engine"]
    if "lipschitz" in e:
        L = float(e["lipschitz"])
    elif isinstance(inst, LassoInstance):
        L = float(problem.lipschitz)
    else:
        L = estimate_block_lipschitz(problem, samples=100, seed=e["seed"], center=x0,
                                     radius=max(1.0, float(np.max(np.abs(x0)))))
    problem.lipschitz = L
    s = e.get("surrogate", {})
    tau = s.get("tau", 1.0)
    tau = L if tau == "L" else float(tau)
    overrides = {int(k) - 1: float(v) for k, v in s.get("tau_overrides", {}).items()}
    bad = [k + 1 for k in overrides if k >= problem.n_agents]
    if bad:
        raise ConfigError(f"engine.surrogate.tau_overrides: agent ids {bad} exceed "
                          f"{problem.n_agents}")
    spec = SurrogateSpec(kind=s.get("kind", "linearized"), tau=tau, tau_overrides=overrides,
                         adaptive=s.get("adaptive", False))
    sch = e.get("schedule", {"kind": "cyclic"})
    schedule = ScheduleSpec(sch["kind"], sch.get("seed", 0), sch.get("period_min", 5.0),
                            sch.get("period_max", 50.0))
    dl = e.get("delay", {"kind": "zero"})
    delay = DelaySpec(dl["kind"], dl.get("D", 0), dl.get("seed", 0))
    if "gamma_safe_fraction" in e:
        tau_min = min([tau] + list(overrides.values()))
        gamma = min(1.0, e["gamma_safe_fraction"]
                    * max_safe_stepsize(tau_min, L, problem.graph.rho(), delay.D))
    else:
        gamma = e.get("gamma", 0.9)
    engine = EngineConfig(
        gamma=gamma, max_iterations=e.get("max_iterations", 10_000),
        stop_tolerance=e.get("stop_tolerance", 1e-10), stop_metric=e.get("stop_metric", "MV"),
        surrogate=spec, schedule=schedule, delay=delay, seed=e["seed"],
        metrics_stride=e.get("metrics_stride"), theory_mode=e.get("theory_mode", False),
        lipschitz=L)
    mode = cfg.get("mode", {"kind": "simulate"})
    B = schedule.build(problem.n_agents).bound
    return Experiment(cfg, inst, problem, engine, x0, mode["kind"], mode.get("workers", 1),
                      L, B)
