"""Run configuration: JSON parsing, validation, defaults and canonical hashing.

A config carries the model parameters plus exactly one task block.  The flux
parameter is accepted only as a rational string ("1/3"), never as a float.
Two layouts are recognized::

    {"alpha": "1/3", "beta": 0, "lambda": 0, "task": "bands", "grid": [64, 64]}
    {"alpha": "1/3", "bands": {"grid": [64, 64]}}

Canonical serialization (sorted keys, fixed separators) of the normalized
config defines the cache key, so identical configs hash identically.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ConfigError
from .model import ModelParams

log = logging.getLogger("qshsim")

TASKS = (
    "bands",
    "ribbon",
    "phase_diagram",
    "edge_states",
    "tones",
    "rwa_check",
    "lindblad",
)

MODEL_KEYS = ("alpha", "beta", "lambda", "nx", "ny", "t0")
COMMON_KEYS = ("task", "output", "threads", "seed", "model") + MODEL_KEYS

#: shared physics defaults
DEFAULTS = {
    "e_f": 1.5,
    "gap_threshold": 0.05,
    "ring_depth": 2,
    "t0_mhz": 3.0,
}

TASK_DEFAULTS = {
    "bands": {"grid": [32, 32]},
    "ribbon": {"ny": 42, "kx_points": 102},
    "phase_diagram": {
        "beta_range": [0.0, 0.25],
        "lambda_range": [0.0, 2.0],
        "resolution": [16, 16],
        "window": [1.0, 2.0],
    },
    "edge_states": {"count": 1},
    "tones": {"units": "t0"},
    "rwa_check": {},
    "lindblad": {"gammas": [0.0, 1.0 / 600.0, 1.0 / 300.0], "t_us": 2.0, "dt": 0.0025},
}


@dataclass
class RunConfig:
    model: ModelParams
    task: str
    task_params: dict
    out_dir: str = "qshsim-out"
    fmt: str = "csv"
    threads: int = 1
    normalized: dict = field(default_factory=dict)

    def canonical_json(self) -> str:
        return json.dumps(self.normalized, sort_keys=True, separators=(",", ":"))

    def cache_key(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _parse_alpha(value) -> Fraction:
    if not isinstance(value, str):
        raise ConfigError(
            f"field 'alpha': must be a rational string like '1/3', got {value!r}"
        )
    try:
        frac = Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"field 'alpha': cannot parse {value!r} as p/q") from exc
    if "/" in value:
        p_str, q_str = value.split("/", 1)
        if (int(p_str), int(q_str)) != (frac.numerator, frac.denominator):
            log.warning(
                "alpha %s not in lowest terms; normalized to %s", value, frac
            )
    return frac


def _find_task(data: dict):
    block_tasks = [t for t in TASKS if isinstance(data.get(t), dict)]
    named = data.get("task")
    if named is not None:
        if named not in TASKS:
            raise ConfigError(f"field 'task': unknown task {named!r}")
        extra = [t for t in block_tasks if t != named]
        if extra:
            raise ConfigError(
                f"config names task {named!r} but also carries block(s) {extra}"
            )
        params = dict(data.get(named, {}))
        if not params:
            # minimal layout: task parameters live at the top level
            skip = set(COMMON_KEYS) | set(TASKS)
            params = {k: v for k, v in data.items() if k not in skip}
        return named, params
    if len(block_tasks) == 1:
        return block_tasks[0], dict(data[block_tasks[0]])
    if not block_tasks:
        raise ConfigError("config contains no task (expected exactly one)")
    raise ConfigError(f"config contains {len(block_tasks)} task blocks: {block_tasks}")


def _model_from(data: dict) -> ModelParams:
    src = dict(data.get("model", {}))
    for key in MODEL_KEYS:
        if key in data:
            src.setdefault(key, data[key])
    if "alpha" not in src:
        raise ConfigError("field 'alpha': required (rational string, e.g. '1/3')")
    alpha = _parse_alpha(src["alpha"])
    try:
        return ModelParams(
            alpha=alpha,
            beta=float(src.get("beta", 0.0)),
            lam=float(src.get("lambda", 0.0)),
            nx=int(src.get("nx", 6)),
            ny=int(src.get("ny", 6)),
            t0=float(src.get("t0", 1.0)),
        )
    except Exception as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from exc


def normalize(data: dict) -> RunConfig:
    """Validate a raw config dict and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    task, params = _find_task(data)
    model = _model_from(data)
    merged = dict(TASK_DEFAULTS.get(task, {}))
    merged.update(params)
    for key, val in DEFAULTS.items():
        merged.setdefault(key, val)

    output = data.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("field 'output': must be an object")
    fmt = output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"field 'output.format': must be csv or json, got {fmt!r}")
    threads = int(data.get("threads", 1))
    if threads < 1:
        raise ConfigError("field 'threads': must be >= 1")

    normalized = {
        "model": {
            "alpha": f"{model.p}/{model.q}",
            "beta": model.beta,
            "lambda": model.lam,
            "nx": model.nx,
            "ny": model.ny,
            "t0": model.t0,
        },
        "task": task,
        "params": merged,
        "format": fmt,
    }
    return RunConfig(
        model=model,
        task=task,
        task_params=merged,
        out_dir=output.get("directory", "qshsim-out"),
        fmt=fmt,
        threads=threads,
        normalized=normalized,
    )


def parse_config(path: str) -> RunConfig:
    """Load and validate a JSON run configuration from disk."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return normalize(data)
