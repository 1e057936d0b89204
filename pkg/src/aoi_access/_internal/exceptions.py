from __future__ import annotations


class AoiAccessError(Exception):
    """Base class for every error raised by aoi-access."""


class ConfigurationError(AoiAccessError):
    """Raised when there's a configuration or setup error.

    This exception is caught by the CLI and displayed as a clean error message
    without a full traceback, making it easier for users to understand what
    went wrong.
    """


class DimensionError(AoiAccessError, ValueError):
    """Raised when array shapes disagree (pilot vs. channel vector, estimate vs. truth)."""


class DivergenceError(AoiAccessError, ArithmeticError):
    """Raised when a solver iterate or a training quantity becomes non-finite.

    Attributes:
        iteration: Layer or iteration index at which the first non-finite value appeared.
        step: Optimizer step during training, `None` outside the trainer.
    """

    def __init__(self, message: str, *, iteration: int | None = None, step: int | None = None) -> None:
        super().__init__(message)
        self.iteration = iteration
        self.step = step


class UndefinedMetricError(AoiAccessError, ValueError):
    """Raised when a metric has no defined value, e.g. a detection rate without active alarm devices."""


class InfeasibleGridError(AoiAccessError, ValueError):
    """Raised when every (threshold, probability) grid point yields an infinite average AoI."""


class CertificationError(AoiAccessError):
    """Raised when a convergence certificate cannot be issued.

    `reason` is one of `"outside-dataset"`, `"pilot-not-normalized"`,
    `"sparsity-not-admissible"` or `"empty-dataset"`.
    """

    def __init__(self, message: str, *, reason: str) -> None:
        super().__init__(message)
        self.reason = reason


class CheckpointError(AoiAccessError):
    """Raised when a training checkpoint is missing, unreadable or of an unsupported version."""
