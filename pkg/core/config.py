"""
Configuration Loading
=====================
Layers a training configuration from three sources, later ones winning:

    built-in preset (presets/<name>_config.yaml) → config file → CLI overrides

Config files are flat YAML mappings of TrainConfig keys.
"""

import logging
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from .errors import ConfigError
from .training import PRESETS, TrainConfig

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).parent.parent / "presets"

_INT_FIELDS = {"max_epochs", "batch_size", "seed", "embedding_dim", "filters", "gru_hidden",
               "gru_region_size", "gru_pool_stride", "min_count"}
_FLOAT_FIELDS = {"learning_rate", "keep_prob", "embedding_init_scale"}
_BOOL_FIELDS = {"record_runs"}
_OPTIONAL_INT_FIELDS = {"max_len"}
_OPTIONAL_STR_FIELDS = {"embeddings_path", "log_dir"}


def preset_path(name: str) -> Path:
    return PRESET_DIR / f"{name}_config.yaml"


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a flat YAML mapping; an empty file is an empty mapping"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML ({e})") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of config keys, got {type(data).__name__}")
    return data


def _coerce(key: str, value: Any) -> Any:
    try:
        if key in _BOOL_FIELDS:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "yes", "no", "1", "0"):
                return value.lower() in ("true", "yes", "1")
            raise ValueError(value)
        if key in _INT_FIELDS or (key in _OPTIONAL_INT_FIELDS and value is not None):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if key in _OPTIONAL_INT_FIELDS:
            return None
        if key in _FLOAT_FIELDS:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if key == "region_sizes":
            if isinstance(value, str):
                value = [v for v in value.replace(" ", "").split(",") if v]
            if isinstance(value, int):
                value = [value]
            return tuple(int(v) for v in value)
        if key in _OPTIONAL_STR_FIELDS:
            return None if value is None else str(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value for {key}: {value!r}") from e


def _merge(target: Dict[str, Any], source: Mapping[str, Any], origin: str) -> None:
    known = {f.name for f in fields(TrainConfig)}
    for key, value in source.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} in {origin}")
        target[key] = _coerce(key, value)


def load_config(preset: Optional[str] = None, path: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    """
    Build a validated TrainConfig.

    Args:
        preset: en, es, fr, jp (or custom / None for the defaults)
        path: Optional YAML config file
        overrides: Flag values; None entries are ignored

    Raises:
        ConfigError: unknown preset or key, wrong type, or an invariant violation
    """
    values: Dict[str, Any] = {}

    if preset is not None and preset != "custom":
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {PRESETS}")
        _merge(values, read_config_file(preset_path(preset)), f"preset {preset}")
        values["preset"] = preset
        logger.debug(f"📋 Preset {preset} loaded")

    if path is not None:
        _merge(values, read_config_file(path), str(path))
        logger.debug(f"📋 Config file {path} loaded")

    if overrides:
        _merge(values, {k: v for k, v in overrides.items() if v is not None}, "command-line flags")

    config = TrainConfig(**values).validate()
    if config.embeddings == "pretrained" and config.embeddings_path is None:
        logger.warning(f"⚠️  Preset {config.preset} expects pre-trained embeddings but no embeddings_path "
                       f"is set; using random initialization")
    return config
