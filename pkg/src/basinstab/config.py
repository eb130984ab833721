"""JSON run-config loading: schema check, dotted overrides, conversion to RunConfig."""
from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Iterable

import jsonschema

from .montecarlo import ConfigError, RunConfig

__all__ = ["CONFIG_SCHEMA", "apply_overrides", "load_config", "parse_config"]

_range = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["system_id"],
    "additionalProperties": False,
    "properties": {
        "system_id": {"enum": ["s1", "s2", "s3", "s4", "S1", "S2", "S3", "S4"]},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "omega_range": _range,
                "amplitude_range": _range,
                "ic_ranges": {"type": "object", "additionalProperties": _range},
            },
        },
        "mismatch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "parameter_names": {"type": "array", "items": {"type": "string"}},
                "relative_bound": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
            },
        },
        "n_samples": {"type": "integer", "minimum": 1},
        "grid_resolution": {"type": "array", "items": {"type": "integer", "minimum": 1},
                            "minItems": 2, "maxItems": 2},
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["fixed-rk4", "adaptive-rk45"]},
                "fixed_step": {"type": "number", "exclusiveMinimum": 0},
                "abs_tol": {"type": "number", "exclusiveMinimum": 0},
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_step": {"type": "number", "exclusiveMinimum": 0},
                "min_step": {"type": "number", "exclusiveMinimum": 0},
                "event_refinement_tol": {"type": "number", "exclusiveMinimum": 0},
                "bailout": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "classifier": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "transient_periods": {"type": "integer", "minimum": 1},
                "observation_periods": {"type": "integer", "minimum": 1},
                "window_periods": {"type": "integer", "minimum": 1},
                "periodicity_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_period_multiple": {"type": "integer", "minimum": 1},
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "stratified": {"type": "boolean"},
        "strict_paper_mode": {"type": "boolean"},
        "output_dir": {"type": "string"},
        "sample_log": {"type": "boolean"},
        "render": {"type": "boolean"},
        "checkpoint_every": {"type": "integer", "minimum": 1},
    },
}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: Iterable[str]) -> dict:
    """Apply ``a.b.c=value`` assignments; values are parsed as JSON when possible."""
    out = copy.deepcopy(data)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value", "overrides")
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"cannot descend into non-object {part!r}", key)
            node = nxt
        node[parts[-1]] = _parse_value(raw)
    return out


def _json_path(err: jsonschema.ValidationError) -> str:
    path = "$"
    for p in err.absolute_path:
        path += f"[{p}]" if isinstance(p, int) else f".{p}"
    return path


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping against the schema and the model invariants."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _json_path(e))
    try:
        return RunConfig.from_dict(data)
    except ConfigError as exc:
        if exc.path and not exc.path.startswith("$"):
            raise ConfigError(str(exc).split(": ", 1)[-1], "$." + exc.path) from None
        raise


def load_config(path, overrides: Iterable[str] = ()) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", str(path)) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", "$")
    return parse_config(apply_overrides(data, overrides))
