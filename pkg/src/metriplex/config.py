"""Run configuration: a versioned TOML schema with strict key checking.

A config file names a scenario and carries one table per concern::

    schema_version = 1
    scenario = "fpe"
    seed = 0

    [system]
    name = "canonical2d"

    [grid]
    min = [-8.0, -8.0]
    max = [8.0, 8.0]
    cells = [128, 128]

    [fpe]
    D = 0.2
    dt = 0.005
    t_end = 50.0
    beta = "fixed:1.0"

Unknown keys anywhere are rejected with their dotted path.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SCHEMA_VERSION = 1
SCENARIOS = ("sde", "fpe", "chm-integrate", "chm-thermalize")

# type tags: "int", "float", "str", "bool", "floats", "ints", "table" (free-form)
_SCHEMA: Dict[str, Any] = {
    "schema_version": ("int", SCHEMA_VERSION),
    "scenario": ("str", None),
    "seed": ("int", 0),
    "threads": ("int", 1),
    "out": ("str", "out"),
    "system": {
        "name": ("str", None),
        "params": ("table", {}),
        "polynomial": ("table", None),
    },
    "grid": {
        "min": ("floats", None),
        "max": ("floats", None),
        "cells": ("ints", None),
    },
    "fpe": {
        "D": ("float", 0.2),
        "dt": ("float", None),
        "t_end": ("float", None),
        "beta": ("str", "adaptive"),
        "record_every": ("int", 100),
        "weights": ("str", "auto"),
        "advection": ("str", "centered"),
        "tail_upwind": ("float", 1e-10),
        "steep_upwind": ("float", 4.0),
        "centre": ("floats", None),
        "variance": ("floats", None),
    },
    "sde": {
        "N": ("int", 10000),
        "D": ("float", 0.2),
        "dt": ("float", 0.02),
        "steps": ("int", 1000),
        "record_every": ("int", 100),
        "friction": ("str", "fixed:1.0"),
        "update_every": ("int", 10),
        "scheme": ("str", "heun"),
        "x0": ("floats", None),
        "spread": ("float", 0.0),
        "density_cells": ("int", 32),
    },
    "chm": {
        "K": ("int", 2),
        "c": ("float", 0.0),
        "dt": ("float", 1e-3),
        "steps": ("int", 1000),
        "record_every": ("int", 10),
        "amplitude": ("float", 1.0),
        "beta": ("float", 1.0),
        "mu": ("float", 1.0),
        "N": ("int", 2000),
        "D": ("float", 2e4),
        "average_from": ("int", 0),
        "scheme": ("str", "midpoint"),
    },
}

_REQUIRED = {
    "fpe": ["system.name", "grid.min", "grid.max", "grid.cells", "fpe.dt", "fpe.t_end"],
    "sde": ["system.name", "sde.x0"],
    "chm-integrate": [],
    "chm-thermalize": [],
}


def _check_type(path: str, tag: str, value):
    def is_num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool)

    ok = {
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "float": is_num,
        "str": lambda v: isinstance(v, str),
        "bool": lambda v: isinstance(v, bool),
        "floats": lambda v: isinstance(v, list) and all(is_num(x) for x in v),
        "ints": lambda v: isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
        "table": lambda v: isinstance(v, dict),
    }[tag](value)
    if not ok:
        raise ConfigError(f"key '{path}' expects {tag}, got {type(value).__name__} {value!r}")
    if tag == "float":
        return float(value)
    if tag == "floats":
        return [float(x) for x in value]
    return value


def _leaf_paths(prefix: str, value):
    if isinstance(value, dict) and value:
        for k, v in value.items():
            yield from _leaf_paths(f"{prefix}.{k}", v)
    else:
        yield prefix


def _validate(data: dict, schema: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in schema:
            leaves = ", ".join(f"'{p}'" for p in _leaf_paths(path, value))
            raise ConfigError(f"unknown key {leaves} in config")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"key '{path}' must be a table")
            out[key] = _validate(value, spec, f"{path}.")
        else:
            out[key] = _check_type(path, spec[0], value)
    return out


def _fill_defaults(data: dict, schema: dict) -> dict:
    out = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            out[key] = _fill_defaults(data.get(key, {}), spec)
        else:
            out[key] = copy.deepcopy(data.get(key, spec[1]))
    return out


def _get(data: dict, dotted: str):
    cur = data
    for part in dotted.split("."):
        cur = cur.get(part) if isinstance(cur, dict) else None
    return cur


@dataclass
class RunConfig:
    """Validated configuration with defaults filled in."""

    data: dict

    @property
    def scenario(self) -> str:
        return self.data["scenario"]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def threads(self) -> int:
        return int(self.data["threads"])

    @property
    def out(self) -> str:
        return self.data["out"]

    def section(self, name: str) -> dict:
        return self.data[name]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def validate(data: dict) -> RunConfig:
    """Check keys and types, apply defaults and scenario requirements."""
    checked = _validate(data, _SCHEMA)
    version = checked.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version {version} is not supported (expected {SCHEMA_VERSION})")
    scenario = checked.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}, got {scenario!r}")
    full = _fill_defaults(checked, _SCHEMA)
    for path in _REQUIRED[scenario]:
        # a polynomial table may stand in for a registered system name
        if path == "system.name" and full["system"]["polynomial"] is not None:
            continue
        if _get(full, path) is None:
            raise ConfigError(f"scenario '{scenario}' requires key '{path}'")
    if full["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    return RunConfig(full)


def load(path) -> RunConfig:
    return validate(load_raw(path))


def load_raw(path) -> dict:
    """Parsed TOML without validation, for merging with command-line overrides."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from None
    return data


def json_schema() -> dict:
    """The config schema in JSON Schema form, for publication and external validation."""
    kinds = {
        "int": {"type": "integer"},
        "float": {"type": "number"},
        "str": {"type": "string"},
        "bool": {"type": "boolean"},
        "floats": {"type": "array", "items": {"type": "number"}},
        "ints": {"type": "array", "items": {"type": "integer"}},
        "table": {"type": "object"},
    }

    def convert(schema: dict) -> dict:
        props = {}
        for key, spec in schema.items():
            if isinstance(spec, dict):
                props[key] = convert(spec)
            else:
                entry = dict(kinds[spec[0]])
                if spec[1] is not None:
                    entry["default"] = spec[1]
                props[key] = entry
        return {"type": "object", "properties": props, "additionalProperties": False}

    top = convert(_SCHEMA)
    top["properties"]["scenario"]["enum"] = list(SCENARIOS)
    top["required"] = ["scenario"]
    top["$id"] = f"metriplex-run-config-v{SCHEMA_VERSION}"
    return top
