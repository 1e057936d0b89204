from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np
import pandas as pd

from aoi_access._internal.exceptions import AoiAccessError, ConfigurationError, DivergenceError
from aoi_access._internal.log import get_logger
from aoi_access._internal.models import AccessMode, SchemeSpec, SolverKind
from aoi_access._internal.solvers import (
    AgeGate,
    SolverParams,
    detect,
    detection_rate,
    ista_solve,
    lista_age_forward,
    max_step_size,
)
from aoi_access._internal.system import (
    AgeVector,
    PilotMatrix,
    SparseChannelVector,
    encode,
    expected_signal_power,
    generate_instance,
)

if TYPE_CHECKING:
    from aoi_access._internal.models import SystemConfig
    from aoi_access._internal.system import ActivityMask

_logger = get_logger(__name__)

SLOT_COLUMNS = ("t", "n_active_ad", "n_active_md", "ad_detect_rate", "md_successes", "avg_aoi")


# ---------------------------------------------------------------------------
# Decoders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """What the base station sees in one slot, plus the ground truth for calibration decoders."""

    y: np.ndarray
    gate: AgeGate
    pilot: PilotMatrix
    truth: SparseChannelVector
    mask: ActivityMask
    rng: np.random.Generator


@runtime_checkable
class Decoder(Protocol):
    @property
    def gated(self) -> bool: ...

    def decode(self, obs: Observation) -> SparseChannelVector: ...


@dataclass(frozen=True)
class IstaDecoder:
    """Classical ISTA with a fixed threshold; `omega=None` uses 1 / lambda_max(P^T P)."""

    iters: int = 1000
    theta: float = 0.01
    omega: float | None = None

    @property
    def gated(self) -> bool:
        return False

    def decode(self, obs: Observation) -> SparseChannelVector:
        omega = self.omega if self.omega is not None else max_step_size(obs.pilot)
        return ista_solve(obs.pilot, obs.y, omega, self.theta, self.iters)


@dataclass(frozen=True)
class UnfoldedDecoder:
    """Trained unfolded network; with `gated` the age gate zeroes ineligible monitor devices."""

    params: SolverParams
    gated: bool = True

    def decode(self, obs: Observation) -> SparseChannelVector:
        estimate, _ = lista_age_forward(obs.pilot, obs.y, obs.gate if self.gated else None, self.params, keep_trajectory=False)
        return estimate


@dataclass(frozen=True)
class OracleDecoder:
    """Returns the truth for each active device independently with probability `success_prob`, zero otherwise."""

    success_prob: float = 1.0

    @property
    def gated(self) -> bool:
        return False

    def decode(self, obs: Observation) -> SparseChannelVector:
        hit = obs.rng.random(len(obs.truth)) < self.success_prob
        return SparseChannelVector(np.where(hit, obs.truth.values, 0.0))


@dataclass(frozen=True)
class NullDecoder:
    """Always estimates the all-zero vector."""

    @property
    def gated(self) -> bool:
        return False

    def decode(self, obs: Observation) -> SparseChannelVector:
        return SparseChannelVector.zeros(len(obs.truth))


@dataclass(frozen=True)
class SchemePlug:
    """A compared method: decoder, the pilot matrix it decodes with, and the access rule of its devices."""

    name: str
    decoder: Decoder
    pilot: PilotMatrix
    use_ara: bool = True

    def __post_init__(self) -> None:
        if self.decoder.gated and not self.use_ara:
            msg = f"scheme {self.name!r}: the age gate is only defined under age-based access"
            raise ConfigurationError(msg)

    @property
    def access(self) -> AccessMode:
        return AccessMode.ARA if self.use_ara else AccessMode.RANDOM


def scheme_catalog(checkpoint_dir: str = "checkpoints") -> dict[str, SchemeSpec]:
    """The compared methods, with checkpoints expected at `<dir>/<name>-M{pilot_len}.npz`."""

    def trained(name: str, solver: SolverKind, *, use_ara: bool) -> SchemeSpec:
        return SchemeSpec(name=name, solver=solver, use_ara=use_ara, checkpoint=f"{checkpoint_dir}/{name}-M{{pilot_len}}.npz")

    schemes = [
        trained("A-PIAAE", SolverKind.LISTA_AGE, use_ara=True),
        trained("A-LISTA-AE", SolverKind.LISTA, use_ara=True),
        trained("A-LISTA", SolverKind.LISTA, use_ara=True),
        trained("LISTA-AE", SolverKind.LISTA, use_ara=False),
        trained("LISTA", SolverKind.LISTA, use_ara=False),
        SchemeSpec(name="A-ISTA", solver=SolverKind.ISTA, iterations=1000),
        SchemeSpec(name="A-ISTA-15", solver=SolverKind.ISTA, iterations=15),
    ]
    return {scheme.name: scheme for scheme in schemes}


# ---------------------------------------------------------------------------
# Slots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlotRecord:
    t: int
    n_active_ad: int
    n_active_md: int
    ad_detect_rate: float | None
    """None when no alarm device was active."""
    md_successes: int
    avg_aoi: float
    """Mean AoI over monitor devices after the slot's update."""


def step(
    ages: AgeVector,
    scheme: SchemePlug,
    cfg: SystemConfig,
    rng: np.random.Generator,
    t: int = 0,
) -> tuple[SlotRecord, AgeVector]:
    """Simulate one slot and return its record together with the updated ages.

    A monitor device's update is delivered when it is detected within tolerance and
    appears in the estimated support. A diverging decoder counts as a slot in which
    nothing is delivered.
    """
    truth, mask = generate_instance(cfg, ages, rng, access=scheme.access)
    if scheme.use_ara and np.any(mask.monitor_active & ~ages.eligible(cfg.age_threshold)):
        msg = f"slot {t}: a monitor device at or below the age threshold transmitted"
        raise AoiAccessError(msg)
    power = expected_signal_power(cfg, ages, scheme.access)
    y = encode(scheme.pilot, truth, cfg.snr_db, rng, signal_power=power)
    if scheme.use_ara:
        gate = AgeGate.from_ages(ages, cfg.n_alarm, cfg.age_threshold)
    else:
        gate = AgeGate.open(cfg.n_devices, cfg.n_alarm)
    obs = Observation(y=y, gate=gate, pilot=scheme.pilot, truth=truth, mask=mask, rng=rng)

    try:
        estimate = scheme.decoder.decode(obs)
    except DivergenceError as exc:
        _logger.warning("slot %d: %s diverged (%s), counting the slot as failed", t, scheme.name, exc)
        estimate = None

    if estimate is None:
        delivered = np.zeros(cfg.n_devices, dtype=bool)
        ad_rate = 0.0 if mask.n_active_alarm else None
    else:
        result = detect(estimate, truth, mask, cfg)
        delivered = result.per_device_success & (np.abs(estimate.values) > cfg.support_tol)
        ad_rate = detection_rate(result, mask.alarm_support) if mask.n_active_alarm else None

    md_delivered = delivered[cfg.n_alarm :]
    new_ages = ages.advance(md_delivered)
    record = SlotRecord(
        t=t,
        n_active_ad=mask.n_active_alarm,
        n_active_md=mask.n_active_monitor,
        ad_detect_rate=ad_rate,
        md_successes=int(md_delivered.sum()),
        avg_aoi=new_ages.mean,
    )
    return record, new_ages


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    scheme: str
    records: list[SlotRecord]
    warmup: int
    stationary_aoi: float
    """Mean over monitor devices and post-warmup slots."""
    mean_detection_rate: float
    """Mean alarm detection rate over post-warmup slots with active alarms; nan if there were none."""

    @property
    def slots(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [(r.t, r.n_active_ad, r.n_active_md, r.ad_detect_rate, r.md_successes, r.avg_aoi) for r in self.records],
            columns=list(SLOT_COLUMNS),
        )
        frame["ad_detect_rate"] = frame["ad_detect_rate"].astype(float)
        return frame


def run(
    scheme: SchemePlug,
    cfg: SystemConfig,
    rng: np.random.Generator,
    *,
    horizon: int,
    warmup: int | None = None,
    initial_ages: AgeVector | None = None,
) -> SimulationResult:
    """Simulate `horizon` slots from all ages 1 and summarize the stationary part.

    `warmup` defaults to a fifth of the horizon.

    Raises:
        ConfigurationError: If the warmup does not leave at least one slot.
    """
    warmup = horizon // 5 if warmup is None else warmup
    if horizon < 1 or not 0 <= warmup < horizon:
        msg = f"need horizon >= 1 and 0 <= warmup < horizon, got horizon={horizon} warmup={warmup}"
        raise ConfigurationError(msg)
    ages = initial_ages if initial_ages is not None else AgeVector.fresh(cfg.n_monitor)
    records = []
    for t in range(horizon):
        record, ages = step(ages, scheme, cfg, rng, t)
        records.append(record)
        if t and t % 1000 == 0:
            _logger.debug("%s: slot %d, average AoI %.3f", scheme.name, t, record.avg_aoi)

    stationary = records[warmup:]
    rates = [r.ad_detect_rate for r in stationary if r.ad_detect_rate is not None]
    result = SimulationResult(
        scheme=scheme.name,
        records=records,
        warmup=warmup,
        stationary_aoi=float(np.mean([r.avg_aoi for r in stationary])),
        mean_detection_rate=float(np.mean(rates)) if rates else math.nan,
    )
    _logger.info(
        "%s: stationary AoI %.3f, detection rate %.4f over %d slots",
        scheme.name,
        result.stationary_aoi,
        result.mean_detection_rate,
        len(stationary),
    )
    return result
