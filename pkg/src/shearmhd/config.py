"""JSON experiment configuration with flat dotted keys.

Keys are grouped as ``params.*``, ``grid.*``, ``time.*``, ``experiment.*``
and ``output.*``; nested objects are flattened, so ``{"grid": {"n_kx": 17}}``
and ``{"grid.n_kx": 17}`` are equivalent.  The top-level ``experiment`` key
may be a string naming the experiment.
"""

from __future__ import annotations

import dataclasses
import json
import math

from .experiments import DEFAULT_T_END, EXPERIMENTS, ExperimentConfig
from .spectral_core import GridSpec, PhysParams

ALIASES = {"linear-mode": "linear-decay", "sweep": "threshold-sweep"}
NEEDS_STRONG_FIELD = ("small-data", "threshold-sweep", "linear-decay")


class ConfigError(ValueError):
    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


FLOAT, INT, STR, BOOL, FLOAT_LIST = "number", "integer", "string", "boolean", "list of numbers"

# dotted key -> (target, attribute, kind, nullable)
KEYS = {
    "experiment.name": ("cfg", "experiment", STR, False),
    "experiment.c_stab": ("cfg", "c_stab", FLOAT, False),
    "experiment.bisection_depth": ("cfg", "bisection_depth", INT, False),
    "experiment.seed": ("cfg", "seed", INT, False),
    "experiment.eps": ("cfg", "eps", FLOAT, True),
    "experiment.eps_coefficient": ("cfg", "eps_coefficient", FLOAT, False),
    "experiment.mu_values": ("cfg", "mu_values", FLOAT_LIST, False),
    "experiment.bracket_budget": ("cfg", "bracket_budget", INT, False),
    "experiment.mode_k_max": ("cfg", "mode_k_max", INT, False),
    "experiment.mode_xi_max": ("cfg", "mode_xi_max", FLOAT, False),
    "experiment.decay_bound": ("cfg", "decay_bound", FLOAT, False),
    "experiment.threads": ("cfg", "threads", INT, False),
    "time.t_end": ("cfg", "t_end", FLOAT, False),
    "time.tol": ("cfg", "tol", FLOAT, False),
    "time.dt_max": ("cfg", "dt_max", FLOAT, False),
    "time.cfl": ("cfg", "cfl", FLOAT, False),
    "time.dt_floor": ("cfg", "dt_floor", FLOAT, False),
    "time.sample_interval": ("cfg", "sample_interval", FLOAT, False),
    "time.t_start": ("cfg", "t_start", FLOAT, False),
    "time.fit_start": ("cfg", "fit_start", FLOAT, False),
    "time.fit_end": ("cfg", "fit_end", FLOAT, False),
    "output.dir": ("cfg", "output_dir", STR, False),
    "output.log_scale": ("cfg", "log_scale", BOOL, False),
    "output.checkpoint": ("cfg", "checkpoint", STR, True),
    "output.resume": ("cfg", "resume", STR, True),
}
KEYS.update({f"params.{f.name}": ("params", f.name, INT if f.name == "n_high" else FLOAT, False)
             for f in dataclasses.fields(PhysParams)})
KEYS.update({f"grid.{f.name}": ("grid", f.name, INT if f.name.startswith("n_") else FLOAT, False)
             for f in dataclasses.fields(GridSpec)})


def _flatten(obj, prefix=""):
    out = {}
    for key, value in obj.items():
        if not isinstance(key, str):
            raise ConfigError(prefix + str(key), "keys must be strings")
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        elif path in out:
            raise ConfigError(path, "given twice")
        else:
            out[path] = value
    return out


def _coerce(key, value, kind, nullable):
    if value is None:
        if nullable:
            return None
        raise ConfigError(key, "must not be null")
    if kind == FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {type(value).__name__}")
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
        return float(value)
    if kind == INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {type(value).__name__}")
        return int(value)
    if kind == STR:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {type(value).__name__}")
        return value
    if kind == BOOL:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {type(value).__name__}")
        return value
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a non-empty list of numbers")
    return tuple(_coerce(f"{key}[{i}]", v, FLOAT, False) for i, v in enumerate(value))


def _invariant_key(group, exc):
    name = str(exc).split(" ", 1)[0]
    return f"{group}.{name}"


def parse_config(text) -> ExperimentConfig:
    """Parse and validate a JSON config, filling defaults.

    A ``params.mu`` without explicit dissipation coefficients expands to
    ``nu_x = nu_y = kappa_x = mu, kappa_y = 0`` (no resistivity for
    ``inflation``).

    Raises:
        ConfigError: on malformed JSON, unknown keys, type mismatches or
            violated invariants, naming the offending key.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if isinstance(raw.get("experiment"), str):
        raw = dict(raw)
        name = raw.pop("experiment")
        if "experiment.name" in raw:
            raise ConfigError("experiment.name", "given twice")
        raw["experiment.name"] = name
    flat = _flatten(raw)

    values = {"cfg": {}, "params": {}, "grid": {}}
    for key, value in flat.items():
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        target, attr, kind, nullable = KEYS[key]
        values[target][attr] = _coerce(key, value, kind, nullable)

    cv, pv = values["cfg"], values["params"]
    name = ALIASES.get(cv.get("experiment", "linear-decay"), cv.get("experiment", "linear-decay"))
    if name not in EXPERIMENTS:
        raise ConfigError("experiment.name",
                          f"unknown experiment {name!r} (choose from {', '.join(EXPERIMENTS)})")
    cv["experiment"] = name

    mu = pv.setdefault("mu", 0.1 if name == "inflation" else 0.01)
    pv.setdefault("nu_x", mu)
    pv.setdefault("nu_y", mu)
    pv.setdefault("kappa_x", 0.0 if name == "inflation" else mu)
    pv.setdefault("kappa_y", 0.0)
    cv.setdefault("t_end", DEFAULT_T_END[name])

    try:
        params = PhysParams(**pv)
    except (TypeError, ValueError) as exc:
        raise ConfigError(_invariant_key("params", exc), str(exc)) from None
    try:
        grid = GridSpec(**values["grid"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(_invariant_key("grid", exc), str(exc)) from None

    if name in NEEDS_STRONG_FIELD and not abs(params.alpha) > 0.5:
        raise ConfigError("params.alpha", "alpha must exceed 1/2")
    if name == "inflation":
        if params.kappa_x or params.kappa_y:
            raise ConfigError("params.kappa_x", "inflation runs are non-resistive (kappa must be 0)")
        if not params.nu_y > 0:
            raise ConfigError("params.nu_y", "inflation needs nu_y > 0")
    if name == "small-data":
        common = (params.nu_x, params.nu_y, params.kappa_x)
        if any(c != params.mu for c in common) or params.kappa_y != 0.0:
            raise ConfigError("params.mu",
                              "small-data needs nu_x = nu_y = kappa_x = mu and kappa_y = 0")
        if not params.mu > 0:
            raise ConfigError("params.mu", "small-data needs mu > 0")
    if name == "threshold-sweep":
        mus = cv.get("mu_values", ExperimentConfig.mu_values)
        if any(m <= 0 for m in mus):
            raise ConfigError("experiment.mu_values", "all mu values must be positive")
        if max(mus) < 10.0 * min(mus) * (1 - 1e-12):
            raise ConfigError("experiment.mu_values", "mu values must span at least one decade")
    for key in ("tol", "dt_max", "cfl", "dt_floor", "sample_interval", "eps_coefficient"):
        if key in cv and not cv[key] > 0:
            raise ConfigError(_path_of("cfg", key), "must be positive")
    if cv.get("eps") is not None and cv["eps"] < 0:
        raise ConfigError("experiment.eps", "must be >= 0")
    for key in ("mode_k_max", "bracket_budget", "seed"):
        if key in cv and cv[key] < 0:
            raise ConfigError(_path_of("cfg", key), "must be >= 0")

    try:
        return ExperimentConfig(params=params, grid=grid, **cv)
    except ValueError as exc:
        name = str(exc).split(" ", 1)[0]
        raise ConfigError(_path_of("cfg", name), str(exc)) from None


def _path_of(target, attr):
    for key, (tgt, name, _, _) in KEYS.items():
        if tgt == target and name == attr:
            return key
    return f"experiment.{attr}"


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Flat dotted-key dictionary holding every setting of ``cfg``."""
    out = {}
    for key, (target, attr, kind, _) in KEYS.items():
        src = {"cfg": cfg, "params": cfg.params, "grid": cfg.grid}[target]
        value = getattr(src, attr)
        if kind == FLOAT_LIST:
            value = [float(v) for v in value]
        out[key] = value
    return out


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)
