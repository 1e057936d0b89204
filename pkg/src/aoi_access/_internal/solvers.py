# Sparse recovery: ISTA, the unfolded (learned) iteration with an age gate, and detection metrics.
#
# ISTA and the unfolded decoder share one iteration, `unfold`, so an all-true gate with
# a constant threshold reproduces ISTA bit for bit.


from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import eigvalsh

from aoi_access._internal.exceptions import DimensionError, DivergenceError, UndefinedMetricError
from aoi_access._internal.system import AgeVector, PilotMatrix, SparseChannelVector

if TYPE_CHECKING:
    from collections.abc import Sequence

    from aoi_access._internal.models import SystemConfig
    from aoi_access._internal.system import ActivityMask


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64 if array.dtype != bool else bool, copy=True)
    array.setflags(write=False)
    return array


def _matrix(pilot: PilotMatrix | np.ndarray) -> np.ndarray:
    if isinstance(pilot, PilotMatrix):
        return pilot.entries
    return np.asarray(pilot, dtype=np.float64)


# ---------------------------------------------------------------------------
# Parameters and gate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverParams:
    """Step size omega and one threshold per layer."""

    omega: float
    thetas: np.ndarray

    def __post_init__(self) -> None:
        thetas = np.asarray(self.thetas, dtype=np.float64)
        if thetas.ndim != 1:
            msg = f"thetas must be 1-D, got shape {thetas.shape}"
            raise DimensionError(msg)
        if not (np.isfinite(self.omega) and self.omega > 0.0):
            msg = f"omega must be positive and finite, got {self.omega}"
            raise ValueError(msg)
        if np.any(~np.isfinite(thetas)) or np.any(thetas < 0.0):
            msg = "thresholds must be finite and nonnegative"
            raise ValueError(msg)
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "thetas", _frozen(thetas))

    @classmethod
    def constant(cls, omega: float, theta: float, layers: int) -> SolverParams:
        return cls(omega, np.full(layers, float(theta)))

    @property
    def layers(self) -> int:
        return self.thetas.shape[0]


@dataclass(frozen=True)
class AgeGate:
    """Per-device gate gamma: alarm devices always pass, monitor devices pass iff age > delta."""

    gamma: np.ndarray
    n_alarm: int = 0

    def __post_init__(self) -> None:
        gamma = np.asarray(self.gamma, dtype=bool)
        if gamma.ndim != 1:
            msg = f"gate must be 1-D, got shape {gamma.shape}"
            raise DimensionError(msg)
        if not np.all(gamma[: self.n_alarm]):
            msg = "alarm devices can never be gated"
            raise ValueError(msg)
        gamma = gamma.copy()
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_ages(cls, ages: AgeVector | np.ndarray, n_alarm: int, delta: int) -> AgeGate:
        values = ages.ages if isinstance(ages, AgeVector) else np.asarray(ages)
        return cls(np.concatenate([np.ones(n_alarm, dtype=bool), values > delta]), n_alarm=n_alarm)

    @classmethod
    def open(cls, n_devices: int, n_alarm: int = 0) -> AgeGate:
        """Gate that passes every device."""
        return cls(np.ones(n_devices, dtype=bool), n_alarm=n_alarm)

    @property
    def gated(self) -> np.ndarray:
        """Indices forced to zero."""
        return np.flatnonzero(~self.gamma)

    def __len__(self) -> int:
        return self.gamma.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Retained forward pass: iterates h^0..h^L and pre-activations z^0..z^(L-1).

    Arrays carry a trailing instance axis when the forward pass was batched.
    """

    y: np.ndarray
    states: np.ndarray
    pre_activations: np.ndarray
    gamma: np.ndarray | None

    @property
    def layers(self) -> int:
        return self.pre_activations.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class DetectionResult:
    estimated_support: np.ndarray
    estimate: SparseChannelVector
    per_device_success: np.ndarray


# ---------------------------------------------------------------------------
# Thresholding
# ---------------------------------------------------------------------------


def soft_threshold(x: np.ndarray, theta: float) -> np.ndarray:
    """sign(x) * max(|x| - theta, 0), elementwise."""
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


def age_gated_threshold(x: np.ndarray, gate: AgeGate | np.ndarray, theta: float) -> np.ndarray:
    """Soft-threshold where the gate is open, exact zero where it is closed."""
    gamma = gate.gamma if isinstance(gate, AgeGate) else np.asarray(gate, dtype=bool)
    x = np.asarray(x, dtype=np.float64)
    if gamma.shape[0] != x.shape[0]:
        msg = f"gate length {gamma.shape[0]} != vector length {x.shape[0]}"
        raise DimensionError(msg)
    if gamma.ndim < x.ndim:
        gamma = gamma.reshape(gamma.shape + (1,) * (x.ndim - gamma.ndim))
    return np.where(gamma, soft_threshold(x, theta), 0.0)


def max_step_size(pilot: PilotMatrix | np.ndarray) -> float:
    """1 / lambda_max(P^T P), the largest step with guaranteed ISTA descent."""
    entries = _matrix(pilot)
    # P P^T shares the nonzero spectrum of P^T P and is the smaller matrix when M < S
    gram = entries @ entries.T if entries.shape[0] <= entries.shape[1] else entries.T @ entries
    return 1.0 / float(eigvalsh(gram)[-1])


def lasso_objective(pilot: PilotMatrix | np.ndarray, y: np.ndarray, h: np.ndarray, lam: float) -> float:
    """1/2 ||y - P h||^2 + lam ||h||_1.

    ISTA with step omega and threshold theta descends this objective for lam = theta / omega.
    """
    residual = np.asarray(y) - _matrix(pilot) @ np.asarray(h)
    return 0.5 * float(residual @ residual) + lam * float(np.abs(h).sum())


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


def unfold(
    pilot: PilotMatrix | np.ndarray,
    y: np.ndarray,
    omega: float,
    thetas: Sequence[float] | np.ndarray,
    gamma: np.ndarray | None = None,
    *,
    keep_trajectory: bool = False,
) -> tuple[np.ndarray, Trajectory | None]:
    """Run h <- eta(omega P^T y + (I - omega P^T P) h; gamma, theta_l) for each threshold, from h = 0.

    `y` is (M,) or (M, Q) with one instance per column; `gamma` is None (no gate),
    (S,) or (S, Q).

    Raises:
        DimensionError: If `y` or `gamma` does not fit the pilot matrix.
        DivergenceError: If a pre-activation becomes non-finite.
    """
    entries = _matrix(pilot)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != entries.shape[0]:
        msg = f"measurement length {y.shape[0]} != pilot length {entries.shape[0]}"
        raise DimensionError(msg)
    n_devices = entries.shape[1]
    if gamma is not None:
        gamma = np.asarray(gamma, dtype=bool)
        if gamma.shape[0] != n_devices:
            msg = f"gate length {gamma.shape[0]} != {n_devices} devices"
            raise DimensionError(msg)
    bias = omega * (entries.T @ y)
    weight = np.eye(n_devices) - omega * (entries.T @ entries)
    h = np.zeros_like(bias)
    states = [h]
    pre_activations = []
    for layer, theta in enumerate(thetas):
        z = bias + weight @ h
        if not np.all(np.isfinite(z)):
            msg = f"iteration {layer} produced a non-finite value"
            raise DivergenceError(msg, iteration=layer)
        h = soft_threshold(z, theta) if gamma is None else age_gated_threshold(z, gamma, theta)
        if keep_trajectory:
            states.append(h)
            pre_activations.append(z)
    if not keep_trajectory:
        return h, None
    trajectory = Trajectory(
        y=y,
        states=np.stack(states),
        pre_activations=np.stack(pre_activations) if pre_activations else np.zeros((0, *bias.shape)),
        gamma=gamma,
    )
    return h, trajectory


def ista_solve(
    pilot: PilotMatrix | np.ndarray,
    y: np.ndarray,
    omega: float,
    theta: float,
    iters: int,
) -> SparseChannelVector:
    """Classical ISTA from h = 0 with a fixed step and threshold."""
    h, _ = unfold(pilot, y, omega, np.full(iters, float(theta)))
    return SparseChannelVector(h)


def lista_age_forward(
    pilot: PilotMatrix | np.ndarray,
    y: np.ndarray,
    gate: AgeGate | None,
    params: SolverParams,
    *,
    keep_trajectory: bool = True,
) -> tuple[SparseChannelVector, Trajectory | None]:
    """Unfolded decoder with per-layer thresholds; `gate=None` gives the ungated LISTA layer."""
    gamma = None if gate is None else gate.gamma
    h, trajectory = unfold(pilot, y, params.omega, params.thetas, gamma, keep_trajectory=keep_trajectory)
    return SparseChannelVector(h), trajectory


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


def detect(
    estimate: SparseChannelVector | np.ndarray,
    truth: SparseChannelVector,
    truth_mask: ActivityMask,
    cfg: SystemConfig,
) -> DetectionResult:
    """Per-device success: truly active and |h - h_hat| <= tau."""
    est = estimate if isinstance(estimate, SparseChannelVector) else SparseChannelVector(estimate)
    active = truth_mask.active
    if not len(est) == len(truth) == active.shape[0]:
        msg = f"estimate ({len(est)}), truth ({len(truth)}) and mask ({active.shape[0]}) lengths differ"
        raise DimensionError(msg)
    success = active & (np.abs(truth.values - est.values) <= cfg.detect_tol)
    return DetectionResult(
        estimated_support=np.flatnonzero(np.abs(est.values) > cfg.support_tol),
        estimate=est,
        per_device_success=success,
    )


def detection_rate(result: DetectionResult, true_alarm_support: np.ndarray | Sequence[int]) -> float:
    """Share of truly active alarm devices that are in the estimated support and pass the tolerance.

    Raises:
        UndefinedMetricError: If no alarm device is active.
    """
    support = np.asarray(true_alarm_support, dtype=np.int64)
    if support.size == 0:
        msg = "detection rate is undefined without active alarm devices"
        raise UndefinedMetricError(msg)
    detected = np.isin(support, result.estimated_support) & result.per_device_success[support]
    return float(detected.mean())
