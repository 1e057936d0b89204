from __future__ import annotations

from importlib.resources import files
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from aoi_access._internal.exceptions import ConfigurationError
from aoi_access._internal.log import get_logger
from aoi_access._internal.models import ExperimentConfig

_logger = get_logger(__name__)

_PRESETS = files("aoi_access").joinpath("presets")


def preset_names() -> list[str]:
    """Names of the presets shipped with the package."""
    return sorted(entry.name.removesuffix(".yaml") for entry in _PRESETS.iterdir() if entry.name.endswith(".yaml"))


def get_preset_text(name: str) -> str:
    """Return the raw YAML of a packaged preset.

    Raises:
        ConfigurationError: If no preset has that name.
    """
    resource = _PRESETS.joinpath(f"{name}.yaml")
    if not resource.is_file():
        msg = f"unknown preset {name!r} (available: {', '.join(preset_names())})"
        raise ConfigurationError(msg)
    return resource.read_text(encoding="utf-8")


def parse_config(text: str, *, source: str = "<string>") -> ExperimentConfig:
    """Validate a YAML document against the configuration schema.

    Raises:
        ConfigurationError: If the YAML is malformed or violates the schema.
    """
    try:
        data: dict[str, Any] = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        msg = f"{source}: invalid YAML: {e}"
        raise ConfigurationError(msg) from e
    if not isinstance(data, dict):
        msg = f"{source}: expected a mapping at the top level, got {type(data).__name__}"
        raise ConfigurationError(msg)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        msg = f"{source}: {e}"
        raise ConfigurationError(msg) from e


def load_config(source: str | Path | None) -> ExperimentConfig:
    """Load a configuration from a file path or a preset name; `None` gives the `full-scale` preset.

    An existing path wins over a preset of the same name.

    Raises:
        ConfigurationError: If the file or preset does not exist or does not validate.
    """
    if source is None:
        source = "full-scale"
    path = Path(source)
    if path.is_file():
        _logger.debug("loading configuration from %s", path)
        return parse_config(path.read_text(encoding="utf-8"), source=str(path))
    if path.suffix in {".yaml", ".yml"} or len(path.parts) > 1:
        msg = f"configuration file not found: {path}"
        raise ConfigurationError(msg)
    _logger.debug("loading preset %s", source)
    return parse_config(get_preset_text(str(source)), source=f"preset {source}")
