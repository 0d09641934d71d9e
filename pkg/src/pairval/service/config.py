"""JSON config files for the CLI and the labeling service.

A config file is a JSON object with up to five sections: ``dataset``,
``metric_params``, ``classifier``, ``al`` and ``server``.  Every key is
optional; command-line flags override config values, which override the
defaults below.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from pathlib import Path

from pairval.metrics import PixelMetricParams


class ConfigError(Exception):
    pass


DEFAULT_CONFIG: dict = {
    "dataset": {"manifest": None, "cache": None},
    "metric_params": {},
    "classifier": {"kind": "random_forest"},
    "al": {"alpha": 0.9, "beta": 0.05, "dv_fraction": 0.1, "manual_budget": None},
    "server": {"port": 8000, "host": "127.0.0.1", "static_dir": None},
}

_ALLOWED_KEYS = {
    "dataset": {"manifest", "cache"},
    "metric_params": {f.name for f in dataclasses.fields(PixelMetricParams)},
    "classifier": {"kind"},
    "al": {"alpha", "beta", "dv_fraction", "manual_budget"},
    "server": {"port", "host", "static_dir"},
}


def load_config(path: str | Path | None = None) -> dict:
    """Read ``path`` (if given) and merge it over the defaults.

    Unknown sections or keys raise ConfigError so typos do not silently
    fall back to defaults.
    """
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    for section, values in raw.items():
        if section not in _ALLOWED_KEYS:
            raise ConfigError(f"{path}: unknown section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        for key, value in values.items():
            if key not in _ALLOWED_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {section}.{key}")
            cfg[section][key] = value
    return cfg


def metric_params_from(cfg: dict) -> PixelMetricParams:
    section = dict(cfg.get("metric_params", {}))
    for key in ("glcm_offsets",):
        if key in section:
            section[key] = tuple(tuple(int(v) for v in off) for off in section[key])
    try:
        return PixelMetricParams(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad metric_params: {exc}") from None
