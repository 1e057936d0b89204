from __future__ import annotations

import math
from enum import StrEnum
from typing import Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class AccessMode(StrEnum):
    """How monitor devices decide to transmit."""

    ARA = "ara"
    """Age-based random access: transmit with probability p only once AoI exceeds the threshold."""
    RANDOM = "random"
    """Plain random access: transmit with probability p in every slot."""


class PopulationRounding(StrEnum):
    """Rounding of the expected eligible population (a_max - delta) / a_max * K."""

    FLOOR = "floor"
    NEAREST = "nearest"


class SolverKind(StrEnum):
    """Decoder families a simulated scheme can use."""

    ISTA = "ista"
    LISTA = "lista"
    LISTA_AGE = "lista-age"
    ORACLE = "oracle"
    NULL = "null"


class SweepKind(StrEnum):
    """Axis swept by a simulation scenario."""

    PILOT_LENGTH = "pilot_length"
    SNR = "snr"
    THRESHOLD = "threshold"
    POPULATION = "population"


class _Config(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ---------------------------------------------------------------------------
# System
# ---------------------------------------------------------------------------


class SystemConfig(_Config):
    """Physical-layer and traffic parameters of one cell."""

    n_alarm: int = Field(default=64, ge=0, description="Number of alarm devices N (indices 0..N-1).")
    n_monitor: int = Field(default=128, ge=1, description="Number of monitor devices K (indices N..N+K-1).")
    pilot_len: int = Field(default=39, ge=1, description="Pilot length M, the number of rows of the pilot matrix.")
    snr_db: float = Field(default=20.0, description="Receive SNR in dB; `.inf` disables noise.")
    ad_active_prob: float = Field(default=0.05, ge=0.0, le=1.0, description="Per-slot activation probability of an alarm device.")
    age_max: int = Field(default=100, ge=1, description="Upper end of the uniform age distribution used for training data.")
    access_prob: float = Field(default=0.05, ge=0.0, le=1.0, description="Access probability p of an eligible monitor device.")
    age_threshold: int = Field(default=29, ge=1, description="Age threshold delta; a monitor device is eligible when age > delta.")
    detect_tol: float = Field(default=0.1, gt=0.0, description="Per-device detection tolerance tau on |h - h_hat|.")
    support_tol: float = Field(default=1e-3, ge=0.0, description="Magnitude above which an estimate entry counts as detected.")
    population_rounding: PopulationRounding = Field(
        default=PopulationRounding.FLOOR,
        description="Rounding of the eligible-population expectation in the success-rate formula.",
    )
    seed: int = Field(default=0, ge=0, description="Base seed for every random stream derived from this system.")

    @field_validator("snr_db")
    @classmethod
    def _snr_is_usable(cls, value: float) -> float:
        if math.isnan(value) or value == -math.inf:
            msg = "snr_db must be a number or +inf"
            raise ValueError(msg)
        return value

    @model_validator(mode="after")
    def _threshold_within_age_range(self) -> SystemConfig:
        if self.age_threshold > self.age_max:
            msg = f"age_threshold ({self.age_threshold}) must not exceed age_max ({self.age_max})"
            raise ValueError(msg)
        return self

    @property
    def n_devices(self) -> int:
        """Total number of devices S = N + K."""
        return self.n_alarm + self.n_monitor

    @property
    def noise_free(self) -> bool:
        return math.isinf(self.snr_db)

    @property
    def expected_active_alarms(self) -> int:
        """N_t used by the access optimizer: N * ad_active_prob rounded half up."""
        return math.floor(self.n_alarm * self.ad_active_prob + 0.5)


# ---------------------------------------------------------------------------
# Access-parameter grid
# ---------------------------------------------------------------------------


class GridSpec(_Config):
    """Search grid of the access optimizer."""

    p_min: float = Field(default=0.0, ge=0.0, le=1.0)
    p_max: float = Field(default=1.0, ge=0.0, le=1.0)
    p_step: float = Field(default=0.01, gt=0.0, le=1.0)
    delta_min: int = Field(default=1, ge=1)
    delta_max: int = Field(default=100, ge=1)
    delta_step: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _ranges_are_ordered(self) -> GridSpec:
        if self.p_min > self.p_max or self.delta_min > self.delta_max:
            msg = "grid minimum must not exceed its maximum"
            raise ValueError(msg)
        return self

    def p_values(self) -> np.ndarray:
        count = math.floor((self.p_max - self.p_min) / self.p_step + 1e-9) + 1
        return np.round(self.p_min + self.p_step * np.arange(count), 12)

    def delta_values(self) -> np.ndarray:
        return np.arange(self.delta_min, self.delta_max + 1, self.delta_step, dtype=np.int64)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class TrainConfig(_Config):
    """Stage-wise Adam training of the unfolded detector and, optionally, the pilot matrix."""

    layers: int = Field(default=15, ge=1, description="Number of unfolded layers L.")
    batch_size: int = Field(default=64, ge=1, description="Instances per optimizer step.")
    learning_rate: float = Field(default=1e-3, gt=0.0, description="Initial Adam learning rate lr0.")
    decay_factors: tuple[float, ...] = Field(
        default=(0.5, 0.1, 0.01),
        max_length=3,
        description="Successive learning rates as multiples of lr0, applied on each detected plateau.",
    )
    plateau_window: int = Field(default=100, ge=1, description="Moving-average window of the plateau detector.")
    plateau_patience: int = Field(default=500, ge=1, description="Steps without moving-average improvement that count as a plateau.")
    stagewise: bool = Field(default=True, description="Grow the network one layer at a time.")
    stage_steps: int = Field(default=2000, ge=0, description="Step cap of each stage phase (new-layer phase and fine-tune phase).")
    max_steps: int = Field(default=20000, ge=0, description="Step cap of joint training (non-stagewise runs and resumed runs).")
    initial_threshold: float = Field(default=0.1, ge=0.0, description="Initial value of every layer threshold.")
    learn_pilot: bool = Field(default=True, description="Train the pilot matrix jointly (autoencoder) or keep the Gaussian draw.")
    gated: bool = Field(default=True, description="Apply the age gate inside every layer.")
    access: AccessMode = Field(default=AccessMode.ARA, description="Access rule used to draw training activity.")

    @field_validator("decay_factors")
    @classmethod
    def _factors_in_unit_interval(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if any(not 0.0 < f <= 1.0 for f in value):
            msg = "decay factors must lie in (0, 1]"
            raise ValueError(msg)
        return value

    @model_validator(mode="after")
    def _gate_needs_age_access(self) -> TrainConfig:
        if self.gated and self.access is not AccessMode.ARA:
            msg = "a gated detector needs age-based access (access: ara)"
            raise ValueError(msg)
        return self

    @property
    def variant(self) -> str:
        """Name of the detector variant these flags select."""
        prefix = "A-" if self.access is AccessMode.ARA else ""
        if self.gated:
            return "A-PIAAE" if self.learn_pilot else "A-LISTA-AGE"
        return f"{prefix}LISTA-AE" if self.learn_pilot else f"{prefix}LISTA"

    def with_variant(self, name: str) -> TrainConfig:
        """Copy with the flags of a named variant (see `VARIANTS`)."""
        try:
            flags = VARIANTS[name]
        except KeyError:
            msg = f"unknown variant {name!r} (known: {', '.join(VARIANTS)})"
            raise ValueError(msg) from None
        return self.model_copy(update=flags)


VARIANTS: dict[str, dict[str, bool | AccessMode]] = {
    "A-PIAAE": {"learn_pilot": True, "gated": True, "access": AccessMode.ARA},
    "A-LISTA-AGE": {"learn_pilot": False, "gated": True, "access": AccessMode.ARA},
    "A-LISTA-AE": {"learn_pilot": True, "gated": False, "access": AccessMode.ARA},
    "A-LISTA": {"learn_pilot": False, "gated": False, "access": AccessMode.ARA},
    "LISTA-AE": {"learn_pilot": True, "gated": False, "access": AccessMode.RANDOM},
    "LISTA": {"learn_pilot": False, "gated": False, "access": AccessMode.RANDOM},
}
"""Training flags of every detector variant, keyed by the name `TrainConfig.variant` reports."""


# ---------------------------------------------------------------------------
# Simulation and certification
# ---------------------------------------------------------------------------


class SimulationConfig(_Config):
    """Horizon and seeds of slotted simulation runs."""

    horizon: int = Field(default=5000, ge=1, description="Slots per run.")
    warmup: int | None = Field(default=None, ge=0, description="Slots discarded before averaging; default 20% of the horizon.")
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1, description="One run per seed.")
    workers: int = Field(default=1, ge=1, description="Parallel worker processes.")

    @model_validator(mode="after")
    def _warmup_before_horizon(self) -> SimulationConfig:
        if self.warmup is not None and self.warmup >= self.horizon:
            msg = f"warmup ({self.warmup}) must be shorter than the horizon ({self.horizon})"
            raise ValueError(msg)
        return self

    @property
    def effective_warmup(self) -> int:
        return self.warmup if self.warmup is not None else self.horizon // 5


class CertifyConfig(_Config):
    """Constructed instances for the convergence certificate of the age-gated iteration."""

    pilot_len: int = Field(default=40, ge=1)
    n_devices: int = Field(default=50, ge=2)
    sparsity: int = Field(default=2, ge=1, description="Maximum number of nonzeros s of every ground truth.")
    amplitude: float = Field(default=1.0, gt=0.0, description="Bound B on every nonzero magnitude.")
    noise_l1: float = Field(default=0.0, ge=0.0, description="Bound sigma on the l1 norm of the noise.")
    dataset_size: int = Field(default=20, ge=1)
    layers: int = Field(default=25, ge=1)
    instances: int = Field(default=50, ge=1)
    gated_fraction: float = Field(default=0.5, ge=0.0, lt=1.0, description="Share of columns excluded by the age gate.")
    max_tries: int = Field(default=200, ge=1, description="Pilot redraws allowed per instance before giving up.")
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _shape_is_feasible(self) -> CertifyConfig:
        if self.pilot_len > self.n_devices:
            msg = "certification instances need pilot_len <= n_devices"
            raise ValueError(msg)
        if self.n_devices - math.floor(self.gated_fraction * self.n_devices) < self.sparsity:
            msg = "the gate leaves fewer ungated columns than the sparsity"
            raise ValueError(msg)
        return self


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


class SchemeSpec(_Config):
    """One compared method of a scenario."""

    name: str = Field(description="Label used in CSV output, e.g. A-PIAAE.")
    solver: SolverKind
    use_ara: bool = Field(default=True, description="Monitor devices follow age-based access.")
    checkpoint: str | None = Field(
        default=None,
        description="Trained state for unfolded solvers; `{pilot_len}` is substituted per sweep point.",
    )
    iterations: int = Field(default=1000, ge=1, description="ISTA iterations.")
    threshold: float = Field(default=0.01, ge=0.0, description="ISTA threshold.")
    success_prob: float = Field(default=1.0, ge=0.0, le=1.0, description="Oracle per-device success probability.")

    @model_validator(mode="after")
    def _solver_requirements(self) -> SchemeSpec:
        if self.solver in {SolverKind.LISTA, SolverKind.LISTA_AGE} and not self.checkpoint:
            msg = f"scheme {self.name!r} uses a trained solver but names no checkpoint"
            raise ValueError(msg)
        if self.solver is SolverKind.LISTA_AGE and not self.use_ara:
            msg = f"scheme {self.name!r}: the age-gated solver requires use_ara"
            raise ValueError(msg)
        return self


class SweepSpec(_Config):
    kind: SweepKind
    values: list[float] = Field(min_length=1)
    monitor_per_alarm: float = Field(default=2.0, gt=0.0, description="MD:AD ratio for population sweeps.")


class Scenario(_Config):
    """A sweep over one system parameter, comparing several schemes."""

    name: str
    sweep: SweepSpec
    schemes: list[SchemeSpec] = Field(min_length=1)
    optimize_access: bool = Field(
        default=False,
        description="Re-optimize (delta, p) at every sweep point instead of using the system values.",
    )

    @model_validator(mode="after")
    def _unique_scheme_names(self) -> Scenario:
        names = [scheme.name for scheme in self.schemes]
        if len(set(names)) != len(names):
            msg = "scheme names must be unique within a scenario"
            raise ValueError(msg)
        return self


class ExperimentConfig(_Config):
    """Top-level layout of a YAML configuration file."""

    system: SystemConfig = Field(default_factory=SystemConfig)
    grid: GridSpec = Field(default_factory=GridSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    certify: CertifyConfig = Field(default_factory=CertifyConfig)
    pilot_lengths: list[Annotated[int, Field(ge=1)]] | None = Field(
        default=None,
        description="Pilot lengths tabulated by `optimize`; defaults to the system pilot length.",
    )
    scenario: Scenario | None = None
