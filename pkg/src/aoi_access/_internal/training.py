# Training of the unfolded detector and, optionally, of the pilot matrix (autoencoder).
#
# The loss is the batch sum of squared errors. Gradients are computed in reverse mode by
# hand: every layer shares P through `B = omega P^T y` and `W = I - omega P^T P`, and
# the measurements themselves depend on P through `y = P h* + n`; the gradient of P sums
# all three paths.


from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from aoi_access._internal.exceptions import DimensionError, DivergenceError
from aoi_access._internal.log import get_logger
from aoi_access._internal.models import AccessMode
from aoi_access._internal.solvers import (
    AgeGate,
    SolverParams,
    Trajectory,
    max_step_size,
    unfold,
)
from aoi_access._internal.system import (
    PilotMatrix,
    SparseChannelVector,
    awgn,
    draw_activity,
    draw_channels,
    eligible_monitors,
    expected_signal_power,
    normalize_columns,
    random_pilot_matrix,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator

    from aoi_access._internal.models import SystemConfig, TrainConfig

_logger = get_logger(__name__)

_MIN_OMEGA = 1e-12


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Batch:
    """Q training instances as columns: truths h* (S, Q), ages (K, Q), gates (S, Q), noise (M, Q).

    Iterating yields `(h*, AgeGate, y)` triples.
    """

    truths: np.ndarray
    ages: np.ndarray
    gates: np.ndarray
    noise: np.ndarray
    pilot: np.ndarray
    n_alarm: int

    @property
    def size(self) -> int:
        return self.truths.shape[1]

    def measurements(self, pilot: np.ndarray | None = None) -> np.ndarray:
        """y = P h* + n for the given pilot (default: the one the batch was drawn with)."""
        entries = self.pilot if pilot is None else pilot
        return entries @ self.truths + self.noise

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[tuple[SparseChannelVector, AgeGate, np.ndarray]]:
        y = self.measurements()
        for q in range(self.size):
            yield SparseChannelVector(self.truths[:, q]), AgeGate(self.gates[:, q], n_alarm=self.n_alarm), y[:, q]


def make_batch(
    cfg: SystemConfig,
    batch: int,
    rng: np.random.Generator,
    *,
    pilot: PilotMatrix | np.ndarray | None = None,
    access: AccessMode = AccessMode.ARA,
) -> Batch:
    """Draw a fresh batch with ages uniform on 1..a_max.

    Gates follow the age rule under age-based access and are all open under random
    access. Noise is scaled to the analytic expected signal power.
    """
    if pilot is None:
        entries = random_pilot_matrix(cfg.pilot_len, cfg.n_devices, rng)
    else:
        entries = pilot.entries if isinstance(pilot, PilotMatrix) else np.asarray(pilot, dtype=np.float64)
    ages = rng.integers(1, cfg.age_max + 1, size=(cfg.n_monitor, batch))
    eligible = eligible_monitors(cfg, ages, access)
    alarm_active, monitor_active = draw_activity(cfg, eligible, rng)
    truths = draw_channels(np.concatenate([alarm_active, monitor_active]), rng)
    if access is AccessMode.ARA:
        gates = np.concatenate([np.ones((cfg.n_alarm, batch), dtype=bool), ages > cfg.age_threshold])
    else:
        gates = np.ones((cfg.n_devices, batch), dtype=bool)
    noise = awgn((cfg.pilot_len, batch), expected_signal_power(cfg, None, access), cfg.snr_db, rng)
    return Batch(truths=truths, ages=ages, gates=gates, noise=noise, pilot=entries, n_alarm=cfg.n_alarm)


def loss(estimates: np.ndarray, truths: np.ndarray) -> float:
    """Sum over the batch of squared l2 errors."""
    estimates = np.asarray(estimates, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if estimates.shape != truths.shape:
        msg = f"estimate shape {estimates.shape} != truth shape {truths.shape}"
        raise DimensionError(msg)
    return float(np.sum((estimates - truths) ** 2))


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gradients:
    pilot: np.ndarray
    omega: float
    thetas: np.ndarray


def backward(
    trajectory: Trajectory | None,
    truths: np.ndarray,
    pilot: np.ndarray,
    params: SolverParams,
) -> Gradients:
    """Reverse-mode gradients of the batch loss with respect to P, omega and every threshold.

    The soft-threshold derivative is taken as 0 at its kinks and at gated coordinates.
    Noise is data; the encoder's dependence on P is differentiated.
    """
    if trajectory is None or trajectory.layers != params.layers:
        msg = "backward needs the retained trajectory of a forward pass over the same layers"
        raise ValueError(msg)
    truths = np.asarray(truths, dtype=np.float64)
    if truths.ndim == 1:
        truths = truths[:, None]
    states = trajectory.states.reshape(trajectory.states.shape[0], truths.shape[0], -1)
    pre = trajectory.pre_activations.reshape(trajectory.layers, truths.shape[0], -1)
    y = trajectory.y.reshape(pilot.shape[0], -1)
    gamma = np.ones(truths.shape, dtype=bool) if trajectory.gamma is None else trajectory.gamma.reshape(truths.shape[0], -1)

    omega = params.omega
    gram = pilot.T @ pilot
    weight = np.eye(pilot.shape[1]) - omega * gram

    grad_h = 2.0 * (states[-1] - truths)
    grad_bias = np.zeros_like(truths)
    grad_weight = np.zeros_like(weight)
    grad_thetas = np.zeros(params.layers)
    for layer in reversed(range(params.layers)):
        z = pre[layer]
        passing = gamma & (np.abs(z) > params.thetas[layer])
        grad_z = np.where(passing, grad_h, 0.0)
        grad_thetas[layer] = -float(np.sum(np.sign(z) * grad_z))
        grad_bias += grad_z
        grad_weight += grad_z @ states[layer].T
        grad_h = weight @ grad_z

    pty = pilot.T @ y
    grad_omega = float(np.sum(grad_bias * pty) - np.sum(grad_weight * gram))
    grad_pilot = (
        omega * (y @ grad_bias.T)
        + omega * (pilot @ grad_bias) @ truths.T
        - omega * pilot @ (grad_weight + grad_weight.T)
    )
    return Gradients(pilot=grad_pilot, omega=grad_omega, thetas=grad_thetas)


def loss_and_gradients(
    pilot: np.ndarray,
    params: SolverParams,
    batch: Batch,
    *,
    gated: bool,
) -> tuple[float, Gradients]:
    y = batch.measurements(pilot)
    estimate, trajectory = unfold(
        pilot, y, params.omega, params.thetas, batch.gates if gated else None, keep_trajectory=True
    )
    return loss(estimate, batch.truths), backward(trajectory, batch.truths, pilot, params)


def batch_loss(pilot: np.ndarray, params: SolverParams, batch: Batch, *, gated: bool) -> float:
    estimate, _ = unfold(pilot, batch.measurements(pilot), params.omega, params.thetas, batch.gates if gated else None)
    return loss(estimate, batch.truths)


def gradient_check(
    rng: np.random.Generator,
    *,
    n_alarm: int = 4,
    n_monitor: int = 8,
    pilot_len: int = 8,
    layers: int = 3,
    batch: int = 4,
    step: float = 1e-6,
) -> dict[str, float]:
    """Relative error between analytic and central finite-difference gradients per parameter group."""
    n_devices = n_alarm + n_monitor
    pilot = random_pilot_matrix(pilot_len, n_devices, rng)
    gamma = np.concatenate([np.ones((n_alarm, batch), dtype=bool), rng.random((n_monitor, batch)) < 0.7])
    truths = draw_channels(gamma & (rng.random((n_devices, batch)) < 0.4), rng)
    data = Batch(
        truths=truths,
        ages=np.ones((n_monitor, batch), dtype=np.int64),
        gates=gamma,
        noise=0.05 * rng.standard_normal((pilot_len, batch)),
        pilot=pilot,
        n_alarm=n_alarm,
    )
    params = SolverParams(max_step_size(pilot), rng.uniform(0.05, 0.2, size=layers))
    _, grads = loss_and_gradients(pilot, params, data, gated=True)

    def at(p: np.ndarray, omega: float, thetas: np.ndarray) -> float:
        return batch_loss(p, SolverParams(omega, thetas), data, gated=True)

    fd_pilot = np.zeros_like(pilot)
    for index in np.ndindex(pilot.shape):
        bump = np.zeros_like(pilot)
        bump[index] = step
        fd_pilot[index] = (at(pilot + bump, params.omega, params.thetas) - at(pilot - bump, params.omega, params.thetas)) / (2 * step)
    fd_omega = (at(pilot, params.omega + step, params.thetas) - at(pilot, params.omega - step, params.thetas)) / (2 * step)
    fd_thetas = np.zeros(layers)
    for layer in range(layers):
        bump = np.zeros(layers)
        bump[layer] = step
        fd_thetas[layer] = (at(pilot, params.omega, params.thetas + bump) - at(pilot, params.omega, params.thetas - bump)) / (2 * step)

    def relative(analytic: np.ndarray | float, numeric: np.ndarray | float) -> float:
        a, n = np.atleast_1d(analytic), np.atleast_1d(numeric)
        scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-12)
        return float(np.linalg.norm(a - n)) / scale

    return {
        "pilot": relative(grads.pilot, fd_pilot),
        "omega": relative(grads.omega, fd_omega),
        "thetas": relative(grads.thetas, fd_thetas),
    }


# ---------------------------------------------------------------------------
# Optimizer and schedule
# ---------------------------------------------------------------------------


class Adam:
    """Adam with bias-corrected moments kept per named parameter."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def reset(self) -> None:
        self.m.clear()
        self.v.clear()
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Return updated copies of `params`; names missing from `grads` are left as they are."""
        self.t += 1
        updated = dict(params)
        for name, grad in grads.items():
            m = self.m.get(name, np.zeros_like(grad))
            v = self.v.get(name, np.zeros_like(grad))
            m = self.beta1 * m + (1 - self.beta1) * grad
            v = self.beta2 * v + (1 - self.beta2) * grad**2
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            updated[name] = params[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"adam_m_{name}": value for name, value in self.m.items()}
        arrays.update({f"adam_v_{name}": value for name, value in self.v.items()})
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.reset()
        for key, value in arrays.items():
            if key.startswith("adam_m_"):
                self.m[key.removeprefix("adam_m_")] = np.array(value)
            elif key.startswith("adam_v_"):
                self.v[key.removeprefix("adam_v_")] = np.array(value)
        self.t = t


class PlateauScheduler:
    """Learning-rate decay on plateaus of the moving-average loss.

    A plateau is `patience` steps without a new minimum of the `window`-step moving
    average. Each plateau moves to the next factor of `decay_factors` (relative to the
    initial rate); a plateau after the last factor marks the schedule exhausted.
    """

    def __init__(self, lr0: float, decay_factors: tuple[float, ...], *, patience: int = 500, window: int = 100) -> None:
        self.lr0 = lr0
        self.lr = lr0
        self.decay_factors = decay_factors
        self.patience = patience
        self.decays = 0
        self.exhausted = False
        self._window: deque[float] = deque(maxlen=window)
        self._best = np.inf
        self._since_best = 0

    def observe(self, value: float) -> bool:
        """Record one loss; return True when the learning rate changed."""
        self._window.append(value)
        average = float(np.mean(self._window))
        if average < self._best:
            self._best = average
            self._since_best = 0
            return False
        self._since_best += 1
        if self._since_best < self.patience:
            return False
        self._since_best = 0
        self._best = average
        if self.decays < len(self.decay_factors):
            self.lr = self.lr0 * self.decay_factors[self.decays]
            self.decays += 1
            return True
        self.exhausted = True
        return False

    def resume_at(self, lr: float) -> None:
        """Continue a schedule that had already decayed to `lr`."""
        self.lr = lr
        self.decays = sum(1 for factor in self.decay_factors if self.lr0 * factor >= lr * (1 - 1e-12))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    """Trainable parameters, optimizer moments and bookkeeping of a training run."""

    pilot: np.ndarray
    omega: float
    thetas: np.ndarray
    n_alarm: int
    step: int = 0
    stage: int = 0
    lr: float = 1e-3
    adam: Adam = field(default_factory=Adam)
    loss_history: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)

    @classmethod
    def initial(cls, cfg: SystemConfig, tcfg: TrainConfig, rng: np.random.Generator) -> TrainState:
        """Gaussian column-normalized pilot, every threshold at its initial value, omega = 1 / lambda_max."""
        pilot = random_pilot_matrix(cfg.pilot_len, cfg.n_devices, rng)
        return cls(
            pilot=pilot,
            omega=max_step_size(pilot),
            thetas=np.full(tcfg.layers, tcfg.initial_threshold),
            n_alarm=cfg.n_alarm,
            lr=tcfg.learning_rate,
            adam=Adam(tcfg.learning_rate),
        )

    @property
    def params(self) -> SolverParams:
        return SolverParams(self.omega, self.thetas)

    @property
    def pilot_matrix(self) -> PilotMatrix:
        return PilotMatrix(self.pilot, n_alarm=self.n_alarm)


@dataclass(frozen=True)
class TrainResult:
    state: TrainState
    losses: list[float]


@dataclass(frozen=True)
class _Phase:
    name: str
    layers: int
    trainable_thetas: np.ndarray
    train_pilot: bool
    steps: int
    reset_optimizer: bool = True


def _run_phase(
    state: TrainState,
    phase: _Phase,
    cfg: SystemConfig,
    tcfg: TrainConfig,
    rng: np.random.Generator,
    on_step: Callable[[TrainState], None] | None,
) -> None:
    if phase.steps == 0:
        return
    scheduler = PlateauScheduler(
        tcfg.learning_rate, tcfg.decay_factors, patience=tcfg.plateau_patience, window=tcfg.plateau_window
    )
    if phase.reset_optimizer:
        state.adam = Adam(tcfg.learning_rate)
        state.lr = tcfg.learning_rate
    else:
        scheduler.resume_at(state.lr)
    _logger.info("%s: %d layer(s), pilot %s, up to %d steps", phase.name, phase.layers, "trained" if phase.train_pilot else "fixed", phase.steps)
    for _ in range(phase.steps):
        batch = make_batch(cfg, tcfg.batch_size, rng, pilot=state.pilot, access=tcfg.access)
        params = SolverParams(state.omega, state.thetas[: phase.layers])
        try:
            value, grads = loss_and_gradients(state.pilot, params, batch, gated=tcfg.gated)
        except DivergenceError as exc:
            msg = f"forward pass diverged at step {state.step}: {exc}"
            raise DivergenceError(msg, iteration=exc.iteration, step=state.step) from exc
        if not np.isfinite(value) or not np.all(np.isfinite(grads.pilot)):
            msg = f"non-finite loss or gradient at step {state.step} ({phase.name})"
            raise DivergenceError(msg, step=state.step)

        current = {"thetas": params.thetas.copy(), "omega": np.array([state.omega]), "pilot": state.pilot}
        update = {
            "thetas": np.where(phase.trainable_thetas[: phase.layers], grads.thetas, 0.0),
            "omega": np.array([grads.omega]),
        }
        if phase.train_pilot:
            update["pilot"] = grads.pilot
        state.adam.lr = state.lr
        stepped = state.adam.step(current, update)

        thetas = state.thetas.copy()
        thetas[: phase.layers] = np.maximum(stepped["thetas"], 0.0)
        state.thetas = thetas
        state.omega = max(float(stepped["omega"][0]), _MIN_OMEGA)
        state.pilot = normalize_columns(stepped["pilot"])
        state.step += 1
        state.loss_history.append(value)
        state.lr_history.append(state.lr)
        if state.step % 100 == 0:
            _logger.debug("step %d: loss %.6g lr %.3g", state.step, value, state.lr)
        if on_step is not None:
            on_step(state)

        if scheduler.observe(value):
            state.lr = scheduler.lr
            _logger.info("plateau at step %d: learning rate -> %.3g", state.step, state.lr)
        elif scheduler.exhausted:
            _logger.info("plateau after the last decay at step %d, ending %s", state.step, phase.name)
            break


def _phases(tcfg: TrainConfig, *, resumed: bool) -> list[_Phase]:
    every = np.ones(tcfg.layers, dtype=bool)
    if resumed or not tcfg.stagewise:
        return [_Phase("joint training", tcfg.layers, every, tcfg.learn_pilot, tcfg.max_steps, reset_optimizer=not resumed)]
    phases = []
    for layer in range(1, tcfg.layers + 1):
        newest = np.zeros(tcfg.layers, dtype=bool)
        newest[layer - 1] = True
        phases.extend((
            _Phase(f"stage {layer} (new layer)", layer, newest, False, tcfg.stage_steps),
            _Phase(f"stage {layer} (fine-tune)", layer, every, tcfg.learn_pilot, tcfg.stage_steps),
        ))
    return phases


def _check_resume(state: TrainState, cfg: SystemConfig, tcfg: TrainConfig) -> None:
    if state.thetas.shape[0] != tcfg.layers:
        msg = f"checkpoint has {state.thetas.shape[0]} layers, config asks for {tcfg.layers}"
        raise DimensionError(msg)
    expected = (cfg.pilot_len, cfg.n_devices)
    if state.pilot.shape != expected:
        msg = f"checkpoint was trained for pilot {state.pilot.shape[0]}x{state.pilot.shape[1]}, config asks for {expected[0]}x{expected[1]}"
        raise DimensionError(msg)
    if state.n_alarm != cfg.n_alarm:
        msg = f"checkpoint was trained with {state.n_alarm} alarm devices, config has {cfg.n_alarm}"
        raise DimensionError(msg)


def train(
    cfg: SystemConfig,
    tcfg: TrainConfig,
    rng: np.random.Generator,
    *,
    resume: TrainState | None = None,
    on_step: Callable[[TrainState], None] | None = None,
) -> TrainResult:
    """Online training with a fresh batch per step.

    Stage-wise runs grow the network one layer at a time: first the newest threshold
    and omega, then every parameter (P included when the pilot is learned). A resumed
    state continues with joint training for `max_steps` steps.
    """
    if resume is not None:
        _check_resume(resume, cfg, tcfg)
    state = resume if resume is not None else TrainState.initial(cfg, tcfg, rng)
    start = len(state.loss_history)
    _logger.info("training %s: S=%d M=%d L=%d", tcfg.variant, cfg.n_devices, cfg.pilot_len, tcfg.layers)
    for index, phase in enumerate(_phases(tcfg, resumed=resume is not None)):
        state.stage = index
        _run_phase(state, phase, cfg, tcfg, rng, on_step)
    if len(state.loss_history) > start:
        _logger.info("finished at step %d: loss %.6g", state.step, state.loss_history[-1])
    return TrainResult(state=state, losses=state.loss_history[start:])


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    mse: float
    """Mean squared error per instance."""
    detection_rate: float
    """Share of active alarm devices detected within tolerance; nan when none was active."""


def evaluate(
    state: TrainState,
    cfg: SystemConfig,
    tcfg: TrainConfig,
    rng: np.random.Generator,
    *,
    instances: int = 1000,
) -> Evaluation:
    """Held-out error and alarm detection rate of a trained state."""
    batch = make_batch(cfg, instances, rng, pilot=state.pilot, access=tcfg.access)
    estimate, _ = unfold(state.pilot, batch.measurements(), state.omega, state.thetas, batch.gates if tcfg.gated else None)
    truths = batch.truths
    alarm_truth = truths[: cfg.n_alarm]
    alarm_est = estimate[: cfg.n_alarm]
    active = alarm_truth != 0.0
    detected = active & (np.abs(alarm_est) > cfg.support_tol) & (np.abs(alarm_truth - alarm_est) <= cfg.detect_tol)
    total = int(active.sum())
    return Evaluation(
        mse=loss(estimate, truths) / instances,
        detection_rate=float(detected.sum()) / total if total else float("nan"),
    )


def describe(state: TrainState) -> dict[str, Any]:
    """Parameter counts of a state (for dry runs and logs)."""
    return {
        "pilot": int(state.pilot.size),
        "omega": 1,
        "thetas": int(state.thetas.size),
        "total": int(state.pilot.size + 1 + state.thetas.size),
    }
