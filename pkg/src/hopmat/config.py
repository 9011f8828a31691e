"""Configuration loading, merging and fingerprinting."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("hopmat").joinpath("data/default.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None, overrides: Mapping | None = None) -> dict:
    """Defaults, overlaid with the file at ``path`` and then ``overrides``.

    Unknown top-level sections are rejected so typos fail loudly.
    """
    cfg = default_config()
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, Mapping):
            raise ConfigError(f"config {path} must be a mapping at the top level")
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def fingerprint(cfg: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
