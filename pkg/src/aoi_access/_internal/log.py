from __future__ import annotations

import logging
import os

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER = "aoi_access"
LOG_LEVEL_ENV = "AOI_ACCESS_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "WARNING"

_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def get_logger(name: str) -> logging.Logger:
    """Return a logger nested under the `aoi_access` namespace."""
    if name == ROOT_LOGGER or name.startswith(f"{ROOT_LOGGER}."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def resolve_log_level(flag: str | None = None) -> str:
    """Pick the log level: explicit flag, then `AOI_ACCESS_LOG_LEVEL`, then WARNING."""
    level = (flag or os.environ.get(LOG_LEVEL_ENV) or DEFAULT_LOG_LEVEL).upper()
    if level not in _LEVELS:
        from aoi_access._internal.exceptions import ConfigurationError  # noqa: PLC0415

        msg = f"Unknown log level {level!r}; expected one of {', '.join(_LEVELS)}"
        raise ConfigurationError(msg)
    return level


def configure_logging(level: str | int = DEFAULT_LOG_LEVEL, *, console: Console | None = None) -> logging.Logger:
    """Attach a Rich handler to the package logger. Calling it again replaces the handler."""
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=False,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    return logger
