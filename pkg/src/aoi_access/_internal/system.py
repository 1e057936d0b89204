from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from aoi_access._internal.exceptions import DimensionError
from aoi_access._internal.models import AccessMode

if TYPE_CHECKING:
    from aoi_access._internal.models import SystemConfig

# Columns whose norm is already this close to one are left untouched, which makes
# normalization exactly idempotent.
_UNIT_NORM_TOL = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def normalize_columns(entries: np.ndarray) -> np.ndarray:
    """Scale every column to unit l2 norm.

    Raises:
        DimensionError: If the matrix is not two-dimensional or has an all-zero column.
    """
    entries = np.asarray(entries, dtype=np.float64)
    if entries.ndim != 2:  # noqa: PLR2004
        msg = f"pilot matrix must be 2-D, got shape {entries.shape}"
        raise DimensionError(msg)
    norms = np.linalg.norm(entries, axis=0)
    if np.any(norms == 0.0):
        msg = "pilot matrix has an all-zero column"
        raise DimensionError(msg)
    scale = np.where(np.abs(norms - 1.0) <= _UNIT_NORM_TOL, 1.0, norms)
    return entries / scale


@dataclass(frozen=True)
class PilotMatrix:
    """Column-normalized M x S pilot matrix P = [A, B]: alarm pilots first, monitor pilots last."""

    entries: np.ndarray
    n_alarm: int = 0

    def __post_init__(self) -> None:
        entries = normalize_columns(self.entries)
        if not np.all(np.isfinite(entries)):
            msg = "pilot matrix has non-finite entries"
            raise DimensionError(msg)
        if not 0 <= self.n_alarm <= entries.shape[1]:
            msg = f"n_alarm={self.n_alarm} outside 0..{entries.shape[1]}"
            raise DimensionError(msg)
        object.__setattr__(self, "entries", _frozen(entries))

    @classmethod
    def random(cls, pilot_len: int, n_devices: int, rng: np.random.Generator, *, n_alarm: int = 0) -> PilotMatrix:
        """Draw i.i.d. standard-normal entries and normalize the columns."""
        return cls(random_pilot_matrix(pilot_len, n_devices, rng), n_alarm=n_alarm)

    @classmethod
    def for_system(cls, cfg: SystemConfig, rng: np.random.Generator) -> PilotMatrix:
        return cls.random(cfg.pilot_len, cfg.n_devices, rng, n_alarm=cfg.n_alarm)

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.entries.shape
        return rows, cols

    @property
    def pilot_len(self) -> int:
        return self.entries.shape[0]

    @property
    def n_devices(self) -> int:
        return self.entries.shape[1]

    @property
    def alarm(self) -> np.ndarray:
        """Pilots A of the alarm devices."""
        return self.entries[:, : self.n_alarm]

    @property
    def monitor(self) -> np.ndarray:
        """Pilots B of the monitor devices."""
        return self.entries[:, self.n_alarm :]


def random_pilot_matrix(pilot_len: int, n_devices: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian M x S matrix with unit-norm columns, as raw array."""
    return normalize_columns(rng.standard_normal((pilot_len, n_devices)))


@dataclass(frozen=True)
class SparseChannelVector:
    """Channel vector h of all S devices; the support is the set of nonzero entries."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            msg = f"channel vector must be 1-D, got shape {values.shape}"
            raise DimensionError(msg)
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, n_devices: int) -> SparseChannelVector:
        return cls(np.zeros(n_devices))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.values))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AgeVector:
    """Instantaneous AoI of every monitor device, in slots (always >= 1)."""

    ages: np.ndarray

    def __post_init__(self) -> None:
        ages = np.asarray(self.ages)
        if ages.ndim != 1 or not np.issubdtype(ages.dtype, np.integer):
            msg = "ages must be a 1-D integer vector"
            raise DimensionError(msg)
        if np.any(ages < 1):
            msg = "every age must be >= 1"
            raise ValueError(msg)
        object.__setattr__(self, "ages", _frozen(ages.astype(np.int64)))

    @classmethod
    def fresh(cls, n_monitor: int) -> AgeVector:
        """All devices just delivered an update."""
        return cls(np.ones(n_monitor, dtype=np.int64))

    @classmethod
    def uniform(cls, n_monitor: int, age_max: int, rng: np.random.Generator) -> AgeVector:
        """Ages drawn uniformly from 1..age_max (the training-data assumption)."""
        return cls(rng.integers(1, age_max + 1, size=n_monitor))

    def eligible(self, delta: int) -> np.ndarray:
        """Devices allowed to transmit under age-based access: age > delta."""
        return self.ages > delta

    def advance(self, success: np.ndarray) -> AgeVector:
        """Reset successful devices to 1 and age every other device by one slot."""
        success = np.asarray(success, dtype=bool)
        if success.shape != self.ages.shape:
            msg = f"success indicator shape {success.shape} != ages shape {self.ages.shape}"
            raise DimensionError(msg)
        return AgeVector(np.where(success, 1, self.ages + 1))

    @property
    def mean(self) -> float:
        return float(self.ages.mean())

    def __len__(self) -> int:
        return self.ages.shape[0]


@dataclass(frozen=True)
class ActivityMask:
    """Which alarm and monitor devices transmit in a slot."""

    alarm_active: np.ndarray
    monitor_active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self) -> None:
        object.__setattr__(self, "alarm_active", _frozen(np.asarray(self.alarm_active, dtype=bool)))
        object.__setattr__(self, "monitor_active", _frozen(np.asarray(self.monitor_active, dtype=bool)))

    @property
    def active(self) -> np.ndarray:
        """Boolean activity of all S devices, alarm devices first."""
        return np.concatenate([self.alarm_active, self.monitor_active])

    @property
    def alarm_support(self) -> np.ndarray:
        return np.flatnonzero(self.alarm_active)

    @property
    def n_active_alarm(self) -> int:
        return int(self.alarm_active.sum())

    @property
    def n_active_monitor(self) -> int:
        return int(self.monitor_active.sum())


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def draw_activity(cfg: SystemConfig, eligible: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw alarm and monitor activity; `eligible` is (K,) or (K, Q) for Q instances at once.

    Uniforms are drawn for every device regardless of eligibility, so the stream
    consumption does not depend on the ages.
    """
    eligible = np.asarray(eligible, dtype=bool)
    batch = eligible.shape[1:]
    alarm_active = rng.random((cfg.n_alarm, *batch)) < cfg.ad_active_prob
    monitor_active = eligible & (rng.random(eligible.shape) < cfg.access_prob)
    return alarm_active, monitor_active


def draw_channels(active: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal values on active positions, exact zeros elsewhere."""
    return np.where(active, rng.standard_normal(active.shape), 0.0)


def eligible_monitors(cfg: SystemConfig, ages: np.ndarray, access: AccessMode = AccessMode.ARA) -> np.ndarray:
    if access is AccessMode.RANDOM:
        return np.ones(np.shape(ages), dtype=bool)
    return np.asarray(ages) > cfg.age_threshold


def generate_instance(
    cfg: SystemConfig,
    ages: AgeVector,
    rng: np.random.Generator,
    *,
    access: AccessMode = AccessMode.ARA,
) -> tuple[SparseChannelVector, ActivityMask]:
    """Draw one slot's activity and channel vector.

    Under age-based access a monitor device is active with probability p iff its age
    exceeds the threshold; under random access every monitor device is.
    """
    if len(ages) != cfg.n_monitor:
        msg = f"expected {cfg.n_monitor} ages, got {len(ages)}"
        raise DimensionError(msg)
    alarm_active, monitor_active = draw_activity(cfg, eligible_monitors(cfg, ages.ages, access), rng)
    mask = ActivityMask(alarm_active, monitor_active)
    return SparseChannelVector(draw_channels(mask.active, rng)), mask


def expected_signal_power(
    cfg: SystemConfig,
    ages: AgeVector | None = None,
    access: AccessMode = AccessMode.ARA,
) -> float:
    """Analytic E||P h||^2 for unit-norm pilots and unit-variance nonzeros.

    Equals the expected number of active devices. Without ages the eligible count is
    the uniform-age expectation K (a_max - delta) / a_max.
    """
    if access is AccessMode.RANDOM:
        eligible = float(cfg.n_monitor)
    elif ages is None:
        eligible = cfg.n_monitor * (cfg.age_max - cfg.age_threshold) / cfg.age_max
    else:
        eligible = float(np.count_nonzero(ages.eligible(cfg.age_threshold)))
    return cfg.n_alarm * cfg.ad_active_prob + cfg.access_prob * eligible


def noise_variance(signal_power: float | np.ndarray, pilot_len: int, snr_db: float) -> float | np.ndarray:
    """Per-entry noise variance so that E||n||^2 = signal_power / 10^(snr_db/10)."""
    return np.asarray(signal_power) / (pilot_len * 10.0 ** (snr_db / 10.0))


def awgn(
    shape: tuple[int, ...],
    signal_power: float | np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """White Gaussian noise realizing `snr_db` against `signal_power`; exact zeros at infinite SNR."""
    if math.isinf(snr_db):
        return np.zeros(shape)
    std = np.sqrt(noise_variance(signal_power, shape[0], snr_db))
    return rng.standard_normal(shape) * std


def encode(
    pilot: PilotMatrix | np.ndarray,
    h: SparseChannelVector | np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
    *,
    signal_power: float | None = None,
) -> np.ndarray:
    """Superimposed received pilot signal y = P h + n.

    `h` may be a single vector or an S x Q matrix with one instance per column. The
    noise variance follows `signal_power` when given, otherwise each instance's own
    ||P h||^2. With `snr_db = inf` the result is exactly P h and no random number is
    drawn.

    Raises:
        DimensionError: If the column count of P differs from the length of h.
    """
    entries = pilot.entries if isinstance(pilot, PilotMatrix) else np.asarray(pilot, dtype=np.float64)
    values = h.values if isinstance(h, SparseChannelVector) else np.asarray(h, dtype=np.float64)
    if entries.shape[1] != values.shape[0]:
        msg = f"pilot matrix has {entries.shape[1]} columns but h has length {values.shape[0]}"
        raise DimensionError(msg)
    clean = entries @ values
    if math.isinf(snr_db):
        return clean
    power = np.sum(clean**2, axis=0) if signal_power is None else signal_power
    return clean + awgn(clean.shape, power, snr_db, rng)


# ---------------------------------------------------------------------------
# Complex scenarios
# ---------------------------------------------------------------------------


def stack_complex(pilot: np.ndarray, h: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Real-valued equivalent of a complex model: M x S becomes 2M x 2S.

    `[[Re P, -Im P], [Im P, Re P]] @ [Re h; Im h]` equals `[Re(P h); Im(P h)]`.
    """
    pilot = np.asarray(pilot, dtype=np.complex128)
    real = np.block([[pilot.real, -pilot.imag], [pilot.imag, pilot.real]])
    if h is None:
        return real, None
    h = np.asarray(h, dtype=np.complex128)
    return real, np.concatenate([h.real, h.imag])


def unstack_complex(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    half = values.shape[0] // 2
    if values.shape[0] != 2 * half:
        msg = "stacked vector must have even length"
        raise DimensionError(msg)
    return values[:half] + 1j * values[half:]


def draw_complex_channels(active: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """CN(0, 1) values on active positions."""
    draws = (rng.standard_normal(active.shape) + 1j * rng.standard_normal(active.shape)) / math.sqrt(2.0)
    return np.where(active, draws, 0.0)
