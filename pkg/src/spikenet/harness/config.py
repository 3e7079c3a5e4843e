"""Experiment configuration: JSON documents validated against a schema."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

EXPERIMENTS = ("sample", "oracle-check", "train-ann", "convert-rate", "convert-ttfs", "simulate")


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_int0 = {"type": "integer", "minimum": 0}
_path = {"type": "string", "minLength": 1}

SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": _int0,
        "output_dir": _path,
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 20},
                "weight_std": _nonneg,
                "bias_mean": _num,
                "bias_std": _nonneg,
                "tau_ref": _int1,
                "samples": _int1,
                "burn_in": _int0,
                "thinning": _int1,
                "schedule": {"enum": ["sequential", "random"]},
                "param_seeds": {"type": "array", "items": _int0, "minItems": 1},
            },
        },
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 8},
                "tau_ref": _int1,
                "draws": _int1,
                "weight_std": _nonneg,
                "bias_mean": _num,
                "bias_std": _nonneg,
                "schedules": {"type": "array", "items": {"enum": ["sequential", "random"]}, "minItems": 1},
                "tolerance": _pos,
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["train_images", "train_labels"],
            "properties": {
                "train_images": _path,
                "train_labels": _path,
                "test_images": _path,
                "test_labels": _path,
                "train_size": _int1,
                "test_size": _int1,
            },
        },
        "ann": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sizes": {"type": "array", "items": _int1, "minItems": 2},
                "epochs": _int1,
                "learning_rate": _nonneg,
                "batch_size": _int1,
                "weights": _path,
            },
        },
        "conversion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "threshold": _pos,
                "timesteps": {"type": "array", "items": _int1, "minItems": 1},
                "encodings": {"type": "array", "items": {"enum": ["analog", "poisson"]}, "minItems": 1},
                "t_max": _pos,
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["topology"],
            "properties": {
                "topology": _path,
                "threshold": _num,
                "bias_scale": _num,
                "horizon": _int1,
                "synaptic_kernel": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["tau_mem", "tau_syn"],
                    "properties": {
                        "tau_mem": _pos,
                        "tau_syn": _pos,
                        "window": _int1,
                    },
                },
                "feedback_kernel": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["tau_ref"],
                            "properties": {"tau_ref": _pos, "window": _int1},
                        },
                    ]
                },
                "input_current": {"type": "array", "items": _num},
                "method": {"enum": ["auto", "recursive", "direct"]},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "sampler": {
        "n": 5,
        "weight_std": 0.3,
        "bias_mean": -1.5,
        "bias_std": 0.5,
        "tau_ref": 10,
        "samples": 1_500_000,
        "burn_in": 10_000,
        "thinning": 1,
        "schedule": "sequential",
        "param_seeds": [0],
    },
    "oracle": {
        "n": 2,
        "tau_ref": 2,
        "draws": 20,
        "weight_std": 0.3,
        "bias_mean": -1.5,
        "bias_std": 0.5,
        "schedules": ["sequential", "random"],
        "tolerance": 1e-9,
    },
    "data": {"train_size": 10_000, "test_size": 1_000},
    "ann": {"sizes": [784, 128, 10], "epochs": 30, "learning_rate": 0.1, "batch_size": 64},
    "conversion": {
        "threshold": 4.0,
        "timesteps": [1, 2, 5, 10, 20, 50, 100, 200],
        "encodings": ["analog", "poisson"],
        "t_max": 1.0,
    },
    "simulation": {
        "threshold": 1.0,
        "bias_scale": 1.0,
        "horizon": 100,
        "synaptic_kernel": {"tau_mem": 10.0, "tau_syn": 2.0},
        "feedback_kernel": {"tau_ref": 5.0},
        "method": "auto",
    },
}

# sections each experiment reads
SECTIONS = {
    "sample": ("sampler",),
    "oracle-check": ("oracle",),
    "train-ann": ("data", "ann"),
    "convert-rate": ("data", "ann", "conversion"),
    "convert-ttfs": ("data", "ann", "conversion"),
    "simulate": ("simulation",),
}

PATH_KEYS = {
    "data": ("train_images", "train_labels", "test_images", "test_labels"),
    "ann": ("weights",),
    "simulation": ("topology",),
}


def _location(error: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)


def validate(doc: dict, where: str = "<config>") -> None:
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{where}: at {_location(e)}: {e.message}")


def resolve(doc: dict, base_dir: Path | None = None, where: str = "<config>") -> dict:
    """Validate, fill defaults for the experiment's sections, absolutise and
    check referenced paths."""
    validate(doc, where)
    out = {"experiment": doc["experiment"], "seed": doc.get("seed", DEFAULTS["seed"])}
    if "output_dir" in doc:
        out["output_dir"] = doc["output_dir"]
    for section in SECTIONS[doc["experiment"]]:
        merged = copy.deepcopy(DEFAULTS.get(section, {}))
        merged.update(copy.deepcopy(doc.get(section, {})))
        if section == "data" and "train_images" not in merged:
            raise ConfigError(f"{where}: at $.data: 'train_images' is a required property")
        if section == "simulation" and "topology" not in merged:
            raise ConfigError(f"{where}: at $.simulation: 'topology' is a required property")
        for key in PATH_KEYS.get(section, ()):
            if key in merged:
                p = Path(merged[key])
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                if not p.exists():
                    raise ConfigError(f"{where}: at $.{section}.{key}: path does not exist: {p}")
                merged[key] = str(p.resolve())
        out[section] = merged
    if "data" in out and ("test_images" in out["data"]) != ("test_labels" in out["data"]):
        raise ConfigError(f"{where}: at $.data: test_images and test_labels must be given together")
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return resolve(doc, path.parent, str(path))
