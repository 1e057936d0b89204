from __future__ import annotations

import functools
import math
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import gammaln, logsumexp, xlog1py, xlogy

from aoi_access._internal.exceptions import ConfigurationError, InfeasibleGridError
from aoi_access._internal.log import get_logger
from aoi_access._internal.models import AccessMode, PopulationRounding

if TYPE_CHECKING:
    from collections.abc import Iterable

    from aoi_access._internal.models import GridSpec, SystemConfig

_logger = get_logger(__name__)


class AccessParams(BaseModel):
    """Optimal access parameters and the AoI they achieve."""

    model_config = ConfigDict(frozen=True)

    delta: int = Field(ge=1, description="Age threshold delta.")
    p: float = Field(ge=0.0, le=1.0, description="Access probability of an eligible monitor device.")
    q: float = Field(ge=0.0, le=1.0, description="Implied per-slot success probability.")
    avg_aoi: float = Field(description="Average AoI of a monitor device; inf when pq = 0.")


class AccessSurface(BaseModel):
    """Average AoI and success rate over the whole (delta, p) grid; rows are thresholds."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    deltas: np.ndarray
    ps: np.ndarray
    q: np.ndarray
    avg_aoi: np.ndarray


# ---------------------------------------------------------------------------
# Average AoI
# ---------------------------------------------------------------------------


def avg_aoi(delta: float, p: float, q: float) -> float:
    """Average AoI of a monitor device under age-based access.

    `delta/2 + 1/(pq) - delta / (2 (delta pq + 1 - pq))`; positive infinity when pq = 0.
    """
    r = p * q
    if r <= 0.0:
        return math.inf
    return delta / 2.0 + 1.0 / r - delta / (2.0 * (delta * r + 1.0 - r))


def aoi_chain_mean(first_eligible_age: int, r: float) -> float:
    """Stationary mean of the AoI chain that may succeed (with probability r) once AoI >= `first_eligible_age`.

    `avg_aoi(delta, p, q)` equals `aoi_chain_mean(delta, p * q)`. The transmit rule
    `age > delta` makes `delta + 1` the first eligible age.
    """
    if r <= 0.0:
        return math.inf
    d0 = first_eligible_age
    stay = 1.0 / (r * (d0 - 1) + 1.0)
    return stay * r * ((d0 - 1) * d0 / 2.0 + d0 / r + (1.0 - r) / r**2)


def simulate_age_chain(
    first_eligible_age: int,
    p: float,
    q: float,
    *,
    devices: int,
    slots: int,
    rng: np.random.Generator,
    warmup: int = 0,
) -> float:
    """Monte-Carlo time-and-device average of the AoI chain with i.i.d. success probability q.

    Every device starts fresh (age 1); each slot an eligible device transmits with
    probability p and a transmission succeeds with probability q. Ages are averaged
    over the slots after `warmup`.
    """
    ages = np.ones(devices, dtype=np.int64)
    total = 0.0
    for t in range(slots):
        eligible = ages >= first_eligible_age
        success = eligible & (rng.random(devices) < p) & (rng.random(devices) < q)
        ages = np.where(success, 1, ages + 1)
        if t >= warmup:
            total += float(ages.mean())
    return total / max(slots - warmup, 1)


# ---------------------------------------------------------------------------
# Success rate
# ---------------------------------------------------------------------------


@functools.cache
def s_max(pilot_len: int, n_devices: int) -> int:
    """Largest sparsity S_t with S_t log2(1 + S / S_t) <= M.

    The left side increases with S_t, so the scan stops at the first violation.
    """
    if pilot_len >= n_devices:
        return n_devices
    best = 0
    for sparsity in range(1, n_devices + 1):
        if sparsity * math.log2(1.0 + n_devices / sparsity) > pilot_len:
            break
        best = sparsity
    return best


def eligible_population(
    delta: int,
    n_monitor: int,
    age_max: int,
    rounding: PopulationRounding = PopulationRounding.FLOOR,
) -> int:
    """Expected number of monitor devices above the threshold under uniform ages."""
    expected = max(age_max - delta, 0) / age_max * n_monitor
    if rounding is PopulationRounding.NEAREST:
        return math.floor(expected + 0.5)
    # 1e-9 absorbs products like 0.71 * 128 landing just below an integer
    return math.floor(expected + 1e-9)


def binomial_log_pmf(n: int, p: float) -> np.ndarray:
    """log P(X = k) for k = 0..n, X ~ Binomial(n, p), via log-gamma."""
    k = np.arange(n + 1, dtype=np.float64)
    log_choose = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    return log_choose + xlogy(k, p) + xlog1py(n - k, -p)


def binomial_cdf(limit: int, n: int, p: float) -> float:
    """P(X <= limit) with the k = 0 term included; 0 for a negative limit."""
    if limit < 0:
        return 0.0
    if limit >= n or p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0
    log_pmf = binomial_log_pmf(n, p)
    return float(np.clip(np.exp(logsumexp(log_pmf[: limit + 1])), 0.0, 1.0))


def success_rate(
    delta: int,
    p: float,
    n_monitor: int,
    age_max: int,
    n_alarm_active: int,
    pilot_len: int,
    n_devices: int,
    *,
    rounding: PopulationRounding = PopulationRounding.FLOOR,
) -> float:
    """Probability that the active set stays recoverable: P(K_t <= s_max - N_t).

    K_t, the number of transmitting monitor devices, is binomial over the eligible
    population. Returns 0 when the alarm devices alone exceed s_max.
    """
    limit = s_max(pilot_len, n_devices) - n_alarm_active
    population = eligible_population(delta, n_monitor, age_max, rounding)
    return binomial_cdf(limit, population, p)


def success_rate_random_access(p: float, n_monitor: int, n_alarm_active: int, pilot_len: int, n_devices: int) -> float:
    """Success rate when every monitor device contends in every slot."""
    return binomial_cdf(s_max(pilot_len, n_devices) - n_alarm_active, n_monitor, p)


def success_surface(
    grid: GridSpec,
    cfg: SystemConfig,
    *,
    access: AccessMode = AccessMode.ARA,
) -> AccessSurface:
    """Evaluate q and the average AoI at every grid point.

    Thresholds above `age_max` are dropped from the grid.
    """
    deltas = grid.delta_values()
    deltas = deltas[deltas <= cfg.age_max]
    ps = grid.p_values()
    n_alarm_active = cfg.expected_active_alarms
    q = np.empty((deltas.size, ps.size))
    for i, delta in enumerate(deltas):
        for j, p in enumerate(ps):
            if access is AccessMode.RANDOM:
                q[i, j] = success_rate_random_access(p, cfg.n_monitor, n_alarm_active, cfg.pilot_len, cfg.n_devices)
            else:
                q[i, j] = success_rate(
                    int(delta),
                    float(p),
                    cfg.n_monitor,
                    cfg.age_max,
                    n_alarm_active,
                    cfg.pilot_len,
                    cfg.n_devices,
                    rounding=cfg.population_rounding,
                )
    # random access has no threshold: the AoI is geometric with mean 1/(pq)
    effective = np.zeros_like(deltas) if access is AccessMode.RANDOM else deltas
    aoi = np.array([[avg_aoi(int(d), float(p), q[i, j]) for j, p in enumerate(ps)] for i, d in enumerate(effective)])
    return AccessSurface(deltas=deltas, ps=ps, q=q, avg_aoi=aoi.reshape(deltas.size, ps.size))


def optimize_access(grid: GridSpec, cfg: SystemConfig) -> AccessParams:
    """Exhaustive two-dimensional search for the (delta, p) minimizing the average AoI.

    Ties go to the smaller delta, then to the smaller p.

    Raises:
        InfeasibleGridError: If the average AoI is infinite at every grid point.
    """
    surface = success_surface(grid, cfg)
    if surface.avg_aoi.size == 0 or not np.any(np.isfinite(surface.avg_aoi)):
        msg = f"no grid point yields a finite average AoI (M={cfg.pilot_len}, S={cfg.n_devices})"
        raise InfeasibleGridError(msg)
    # row-major argmin returns the first minimum: smallest delta, then smallest p
    flat = int(np.argmin(surface.avg_aoi))
    i, j = np.unravel_index(flat, surface.avg_aoi.shape)
    params = AccessParams(
        delta=int(surface.deltas[i]),
        p=float(surface.ps[j]),
        q=float(surface.q[i, j]),
        avg_aoi=float(surface.avg_aoi[i, j]),
    )
    _logger.debug("M=%d: delta=%d p=%.2f q=%.4f aoi=%.3f", cfg.pilot_len, params.delta, params.p, params.q, params.avg_aoi)
    return params


def optimize_over_pilot_lengths(grid: GridSpec, cfg: SystemConfig, pilot_lengths: Iterable[int]) -> list[tuple[int, AccessParams]]:
    """Optimal access parameters for each pilot length, other system parameters fixed."""
    lengths = list(pilot_lengths)
    if not lengths:
        msg = "no pilot lengths to optimize over"
        raise ConfigurationError(msg)
    return [(m, optimize_access(grid, cfg.model_copy(update={"pilot_len": m}))) for m in lengths]


def tuned_system(cfg: SystemConfig, grid: GridSpec) -> SystemConfig:
    """Copy of `cfg` with age threshold and access probability set to their optimum."""
    params = optimize_access(grid, cfg)
    return cfg.model_copy(update={"age_threshold": params.delta, "access_prob": params.p})
