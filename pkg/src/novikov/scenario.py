"""Scenario files: JSON validated against a versioned schema, then turned into configs."""
from __future__ import annotations

import hashlib
import json

import jsonschema
import numpy as np

from .flow import TraceLimits
from .lattice import Dispersion, GOLDEN_ANGLE, dispersion_from_dict, preset, tsarev_field

SCHEMA_VERSION = 1

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_num_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "dispersion": {
            "oneOf": [
                {"type": "object", "required": ["preset"], "additionalProperties": False,
                 "properties": {"preset": {"enum": ["tight_binding", "corrugated_cylinder", "tsarev_like",
                                                    "free_electron"]},
                                "params": {"type": "object"}}},
                {"type": "object", "required": ["terms"],
                 "properties": {"terms": {"type": "array", "minItems": 1, "items": {
                     "type": "object", "required": ["m", "amp"],
                     "properties": {"m": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
                                    "amp": {"type": "number"}, "phase": {"type": "number"}}}},
                                "lattice": {"type": "array", "items": _vec3, "minItems": 3, "maxItems": 3},
                                "quad": {"type": "number"}}},
            ]
        },
        "eps_f": {"type": "number"},
        "field": {
            "type": "object",
            "properties": {
                "b": {"oneOf": [_vec3, {"const": "tsarev"}]},
                "directions": {"type": "array", "items": _vec3, "minItems": 1},
                "grid_level": {"type": "integer", "minimum": 0, "maximum": 5},
                "b_mag": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "omega_tau": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "limits": {
            "type": "object", "additionalProperties": False,
            "properties": {"max_len_cells": {"type": "number", "exclusiveMinimum": 0},
                           "max_steps": {"type": "integer", "minimum": 10},
                           "h0": {"type": "number", "exclusiveMinimum": 0},
                           "h_max": {"type": "number", "exclusiveMinimum": 0},
                           "max_turn": {"type": "number", "exclusiveMinimum": 0},
                           "m_max": {"type": "integer", "minimum": 0}},
        },
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {"theta_tol": {"type": "number", "exclusiveMinimum": 0},
                           "eps_resolution": {"type": "number", "exclusiveMinimum": 0},
                           "w_max_cells": {"type": "number", "exclusiveMinimum": 0},
                           "min_len_cells": {"type": "number", "exclusiveMinimum": 0}},
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "trace": {"type": "object", "properties": {"n_seeds": {"type": "integer", "minimum": 1},
                                                   "origin": _vec3}},
        "scan": {"type": "object", "properties": {"n_seeds": {"type": "integer", "minimum": 1},
                                                  "n_planes": {"type": "integer", "minimum": 1},
                                                  "hall": {"type": "boolean"},
                                                  "intervals": {"type": "boolean"},
                                                  "tau_cut": {"type": "number", "exclusiveMinimum": 0}}},
        "transport": {"type": "object", "properties": {"n_lines": {"type": "integer", "minimum": 2},
                                                       "window_tau": {"type": "number", "exclusiveMinimum": 0},
                                                       "carrier": {"type": "string"},
                                                       "hall_strata": {"type": "integer", "minimum": 2}}},
        "zkf": {"type": "object", "properties": {
            "length_cells": {"type": "number", "exclusiveMinimum": 0},
            "rotate": {"type": "boolean"},
            "series": {"type": "object", "required": ["l", "dx", "dy"],
                       "properties": {"l": _num_list, "dx": _num_list, "dy": _num_list}}}},
        "quantize": {"type": "object", "required": ["eps"], "properties": {
            "eps": {"type": "array", "items": {"type": "number"}, "minItems": 4},
            "pz": _num_list,
            "center": _vec3,
            "n_range": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
            "breakdown": {"type": "object", "required": ["level"], "properties": {
                "level": {"type": "number"}, "window": {"type": "number", "exclusiveMinimum": 0},
                "p0": _vec3}}}},
        "quasi2d": {"type": "object", "required": ["level"], "properties": {
            "level": {"type": "number"},
            "potential": {"type": "object", "required": ["waves"], "properties": {
                "waves": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "required": ["k", "amp"],
                    "properties": {"k": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                                   "amp": {"type": "number"}, "phase": {"type": "number"}}}},
                "basis": {"type": "array"}, "m": {"type": "array"}}},
            "superposition": {"type": "object", "required": ["angles_deg", "periods"], "properties": {
                "angles_deg": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 4},
                "periods": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "amplitudes": {"type": "array", "items": {"type": "number"}},
                "phases": {"type": "array", "items": {"type": "number"}}}},
            "r_b": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "starts": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
            "length_cells": {"type": "number", "exclusiveMinimum": 0}}},
    },
}

# subcommand -> top-level fields it needs beyond the schema's own requirements
REQUIRED = {
    "trace": ["dispersion", "eps_f", "field"],
    "classify": ["dispersion", "eps_f", "field"],
    "scan": ["dispersion", "eps_f"],
    "zones": ["dispersion", "eps_f"],
    "interval": ["dispersion", "field"],
    "transport": ["dispersion", "eps_f", "field", "omega_tau"],
    "zkf": ["eps_f"],
    "quantize": ["dispersion", "field", "quantize"],
    "quasi2d": ["quasi2d"],
}


class ScenarioError(ValueError):
    """Validation failure; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate(data: dict, subcommand: str) -> dict:
    if not isinstance(data, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        if e.validator == "required":
            missing = e.message.split("'")[1]
            raise ScenarioError(_path(list(e.absolute_path) + [missing]), "required field missing")
        raise ScenarioError(_path(e.absolute_path), e.message)
    for key in REQUIRED.get(subcommand, []):
        if key not in data:
            raise ScenarioError(_path([key]), f"required field missing for '{subcommand}'")
    if subcommand == "zkf" and "series" not in data.get("zkf", {}):
        for key in ("dispersion", "field"):
            if key not in data:
                raise ScenarioError(_path([key]), "required field missing for 'zkf' without a series")
    if subcommand == "quasi2d":
        q = data["quasi2d"]
        if ("potential" in q) == ("superposition" in q):
            raise ScenarioError("$.quasi2d", "give exactly one of 'potential' or 'superposition'")
    return data


def load(path: str, subcommand: str) -> tuple:
    """(scenario dict, sha256 of the file bytes)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ScenarioError("$", f"invalid JSON: {e}") from None
    return validate(data, subcommand), hashlib.sha256(raw).hexdigest()


def build_dispersion(cfg: dict) -> Dispersion:
    if "preset" in cfg:
        try:
            return preset(cfg["preset"], **cfg.get("params", {}))
        except TypeError as e:
            raise ScenarioError("$.dispersion.params", str(e)) from None
    return dispersion_from_dict(cfg)


def field_directions(data: dict) -> list:
    f = data.get("field", {})
    if "b" in f:
        b = f["b"]
        if b == "tsarev":
            return [tsarev_field(GOLDEN_ANGLE)]
        b = np.asarray(b, dtype=float)
        if np.linalg.norm(b) == 0:
            raise ScenarioError("$.field.b", "zero vector")
        return [b / np.linalg.norm(b)]
    if "directions" in f:
        out = []
        for i, b in enumerate(f["directions"]):
            b = np.asarray(b, dtype=float)
            if np.linalg.norm(b) == 0:
                raise ScenarioError(f"$.field.directions[{i}]", "zero vector")
            out.append(b / np.linalg.norm(b))
        return out
    raise ScenarioError("$.field", "needs 'b' or 'directions'")


def trace_limits(data: dict, cell: float, default_cells: float = 60.0) -> TraceLimits:
    lim = data.get("limits", {})
    return TraceLimits(max_len=lim.get("max_len_cells", default_cells) * cell,
                       max_steps=lim.get("max_steps", 10_000_000),
                       h0=lim.get("h0", 0.05), h_max=lim.get("h_max", 0.25),
                       max_turn=lim.get("max_turn", 0.1), m_max=lim.get("m_max", 8))


def schema_json() -> str:
    return json.dumps(SCHEMA, indent=1, sort_keys=True)
