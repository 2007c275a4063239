"""Experiment configuration: schema, defaults, and strict validation.

A config is a JSON document with sections ``data``, ``model``, ``train``,
``sampling``, ``selfsup``, and ``eval``. Validation rejects unknown sections
and unknown keys by name, type-checks every value, and returns the fully
resolved document (defaults filled in) that the pipeline echoes into its
output directory.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError
from .pooling import AUDIO_POOL_KINDS, TEXT_POOL_KINDS
from .sampling import SAMPLER_STRATEGIES

_BOOL = (bool,)
_INT = (int,)
_NUM = (int, float)
_STR = (str,)

# key -> (allowed python types, allow None, enum of allowed values or None)
_SCHEMA = {
    "data": {
        "path": (_STR, True, None),
        "synth": (None, True, None),  # nested, validated below
    },
    "model": {
        "embed_dim": (_INT, False, None),
        "feature_dim": (_INT, True, None),
        "vocab_size": (_INT, True, None),
    },
    "train": {
        "mode": (_STR, False, ("sentence", "phrase")),
        "audio_pool": (_STR, False, AUDIO_POOL_KINDS),
        "text_pool": (_STR, False, TEXT_POOL_KINDS),
        "margin": (_NUM, False, None),
        "batch_size": (_INT, False, None),
        "max_epochs": (_INT, False, None),
        "early_stop_patience": (_INT, False, None),
        "plateau_patience": (_INT, False, None),
        "lr": (_NUM, False, None),
        "validation_count": (_INT, False, None),
        "seed": (_INT, False, None),
    },
    "sampling": {
        "strategy": (_STR, True, SAMPLER_STRATEGIES),
        "n": (_INT, False, None),
        "tau": (_NUM, False, None),
        "clusters": (_INT, False, None),
        "candidate_batch": (_INT, False, None),
        "resample_each_epoch": (_BOOL, False, None),
    },
    "selfsup": {
        "teacher": (_STR, True, None),
    },
    "eval": {
        "rho": (_NUM, False, None),
        "e_max": (_NUM, False, None),
        "median_window": (_INT, False, None),
    },
}

_SYNTH_SCHEMA = {
    "num_classes": (_INT, False, None),
    "variants_per_class": (_INT, False, None),
    "clips": (_INT, False, None),
    "frames": (_INT, False, None),
    "feature_dim": (_INT, False, None),
    "events_min": (_INT, False, None),
    "events_max": (_INT, False, None),
    "duration_min": (_NUM, False, None),
    "duration_max": (_NUM, False, None),
    "noise_sigma": (_NUM, False, None),
    "noise_smoothing": (_INT, False, None),
    "embed_dim": (_INT, False, None),
    "embed_noise": (_NUM, False, None),
    "seed": (_INT, False, None),
}

DEFAULT_CONFIG_SYNTH = {
    "num_classes": 24,
    "variants_per_class": 4,
    "clips": 2000,
    "frames": 100,
    "feature_dim": 20,
    "events_min": 1,
    "events_max": 3,
    "duration_min": 0.1,
    "duration_max": 0.9,
    "noise_sigma": 0.25,
    "noise_smoothing": 5,
    "embed_dim": 16,
    "embed_noise": 0.1,
    "seed": 0,
}

DEFAULT_CONFIG = {
    "data": {"path": None, "synth": None},
    "model": {"embed_dim": 32, "feature_dim": None, "vocab_size": None},
    "train": {
        "mode": "phrase",
        "audio_pool": "linsoft",
        "text_pool": "mean",
        "margin": 0.2,
        "batch_size": 32,
        "max_epochs": 100,
        "early_stop_patience": 10,
        "plateau_patience": 3,
        "lr": 0.001,
        "validation_count": 200,
        "seed": 0,
    },
    "sampling": {
        "strategy": "random",
        "n": 32,
        "tau": 0.5,
        "clusters": 32,
        "candidate_batch": 128,
        "resample_each_epoch": True,
    },
    "selfsup": {"teacher": None},
    "eval": {"rho": 0.5, "e_max": 800.0, "median_window": 1},
}


def _check_value(section: str, key: str, value, spec) -> None:
    types, allow_none, enum = spec
    if value is None:
        if allow_none:
            return
        raise ConfigError(f"key '{key}' in section '{section}' must not be null")
    if types is not None:
        # bool is an int subclass; keep the two apart
        if bool in types:
            ok = isinstance(value, bool)
        else:
            ok = isinstance(value, types) and not isinstance(value, bool)
        if not ok:
            names = "/".join(t.__name__ for t in types)
            raise ConfigError(
                f"key '{key}' in section '{section}' must be {names}, "
                f"got {type(value).__name__}"
            )
    if enum is not None and value not in enum:
        raise ConfigError(
            f"key '{key}' in section '{section}' must be one of {list(enum)}, "
            f"got {value!r}"
        )


def _validate_section(section: str, doc: dict, schema: dict) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{section}' must be a JSON object")
    for key, value in doc.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{key}' in section '{section}'")
        _check_value(section, key, value, schema[key])


def validate_config(doc: dict) -> dict:
    """Validate and resolve a config document against the schema + defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for section in doc:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section '{section}'")
    resolved = copy.deepcopy(DEFAULT_CONFIG)
    for section, schema in _SCHEMA.items():
        user = doc.get(section, {})
        _validate_section(section, user, schema)
        resolved[section].update(copy.deepcopy(user))

    synth = resolved["data"]["synth"]
    if synth is not None:
        _validate_section("data.synth", synth, _SYNTH_SCHEMA)
        merged = dict(DEFAULT_CONFIG_SYNTH)
        merged.update(synth)
        resolved["data"]["synth"] = merged

    has_path = resolved["data"]["path"] is not None
    has_synth = resolved["data"]["synth"] is not None
    if has_path == has_synth:
        raise ConfigError(
            "section 'data' must set exactly one of 'path' or 'synth'"
        )
    if resolved["train"]["mode"] == "sentence":
        # negatives come from the other clips in the batch, not a sampler
        if doc.get("sampling", {}).get("strategy") is not None:
            raise ConfigError(
                "key 'strategy' in section 'sampling' must be null in sentence mode"
            )
        resolved["sampling"]["strategy"] = None
        if resolved["selfsup"]["teacher"] is not None:
            raise ConfigError(
                "key 'teacher' in section 'selfsup' is only valid in phrase mode"
            )
    return resolved


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path.name}: invalid JSON ({exc})")
    return doc
