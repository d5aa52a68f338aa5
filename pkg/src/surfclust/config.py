"""Run configuration: YAML files, environment overrides, validation."""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import yaml


class ConfigError(ValueError):
    """Missing or malformed configuration."""


ENV_PREFIX = "SURFCLUST_"

# flat environment aliases for the common command-line flags
_ENV_ALIASES = {
    "SEED": ("sampler", "seed"),
    "CHAINS": ("sampler", "chains"),
    "OUT": ("output", "dir"),
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if cfg is None:
        cfg = {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"config root must be a mapping, got {type(cfg).__name__}")
    return cfg


def apply_env_overrides(cfg: dict, environ=None) -> dict:
    """Fold SURFCLUST_* variables into the configuration.

    ``SURFCLUST_SEED``, ``SURFCLUST_CHAINS`` and ``SURFCLUST_OUT`` map to
    their usual keys; the general form ``SURFCLUST_<SECTION>__<KEY>`` sets
    ``cfg[section][key]`` with a YAML-parsed scalar.
    """
    environ = os.environ if environ is None else environ
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        tail = name[len(ENV_PREFIX):]
        if tail in _ENV_ALIASES:
            section, key = _ENV_ALIASES[tail]
        elif "__" in tail:
            section, key = tail.split("__", 1)
            section, key = section.lower(), key.lower()
        else:
            continue
        cfg.setdefault(section, {})[key] = yaml.safe_load(raw)
    return cfg


def require(cfg: dict, dotted: str) -> Any:
    """Fetch a nested key, failing with the full dotted name."""
    node: Any = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"missing config key: {dotted}")
        node = node[part]
    return node


def get(cfg: dict, dotted: str, default: Any = None) -> Any:
    node: Any = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def config_digest(cfg: dict) -> str:
    """Stable hash of a resolved configuration."""
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()
    ).hexdigest()
