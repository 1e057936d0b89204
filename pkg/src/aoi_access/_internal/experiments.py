# Experiment orchestration: access-parameter tables and scenario sweeps over schemes and seeds.
#
# Each run of a scenario is one (sweep point, scheme, seed) task. Its random streams are
# derived from `SeedSequence([seed, point index])` only, so results do not depend on the
# worker count or on scheduling, and schemes at the same point and seed see the same pilot
# draw and traffic stream.


from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.stats import binomtest

from aoi_access._internal.access import optimize_access, s_max
from aoi_access._internal.checkpoint import load_checkpoint
from aoi_access._internal.exceptions import CheckpointError, ConfigurationError
from aoi_access._internal.log import get_logger
from aoi_access._internal.models import SolverKind, SweepKind, SystemConfig
from aoi_access._internal.simulation import (
    IstaDecoder,
    NullDecoder,
    OracleDecoder,
    SchemePlug,
    UnfoldedDecoder,
    run,
)
from aoi_access._internal.system import PilotMatrix

if TYPE_CHECKING:
    from collections.abc import Sequence
    from os import PathLike

    from aoi_access._internal.models import ExperimentConfig, GridSpec, Scenario, SchemeSpec
    from aoi_access._internal.simulation import Decoder

_logger = get_logger(__name__)

RUN_COLUMNS = (
    "scenario",
    "sweep_kind",
    "sweep_value",
    "scheme",
    "seed",
    "pilot_len",
    "snr_db",
    "delta",
    "p",
    "stationary_aoi",
    "detection_rate",
    "slots",
)
AGGREGATE_COLUMNS = (
    "scenario",
    "sweep_kind",
    "sweep_value",
    "scheme",
    "aoi_mean",
    "aoi_std",
    "detection_mean",
    "detection_std",
    "runs",
)
OPTIMIZE_COLUMNS = ("pilot_len", "delta", "p", "q", "avg_aoi", "s_max", "n_alarm_active")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_csv(frame: pd.DataFrame, path: str | PathLike[str]) -> Path:
    """Comma-separated, header row, dot decimal, no index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_csv(path: str | PathLike[str]) -> pd.DataFrame:
    """Read a CSV written by `write_csv` back with bit-exact floats."""
    return pd.read_csv(path, float_precision="round_trip")


# ---------------------------------------------------------------------------
# Access-parameter table
# ---------------------------------------------------------------------------


def optimize_table(config: ExperimentConfig) -> pd.DataFrame:
    """Optimal (delta, p) with the implied q and average AoI for every configured pilot length."""
    lengths = config.pilot_lengths if config.pilot_lengths is not None else [config.system.pilot_len]
    if not lengths:
        msg = "pilot_lengths is empty; nothing to optimize"
        raise ConfigurationError(msg)
    rows = []
    for pilot_len in lengths:
        system = config.system.model_copy(update={"pilot_len": pilot_len})
        params = optimize_access(config.grid, system)
        rows.append(
            (
                pilot_len,
                params.delta,
                params.p,
                params.q,
                params.avg_aoi,
                s_max(pilot_len, system.n_devices),
                system.expected_active_alarms,
            )
        )
    return pd.DataFrame(rows, columns=list(OPTIMIZE_COLUMNS))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    index: int
    value: float
    system: SystemConfig


def _updated(system: SystemConfig, **update: Any) -> SystemConfig:
    try:
        return SystemConfig.model_validate({**system.model_dump(), **update})
    except ValidationError as e:
        msg = f"sweep point {update} is not a valid system: {e}"
        raise ConfigurationError(msg) from e


def _integral(value: float, kind: SweepKind) -> int:
    if not float(value).is_integer():
        msg = f"{kind} sweep values must be integers, got {value}"
        raise ConfigurationError(msg)
    return int(value)


def sweep_points(scenario: Scenario, system: SystemConfig, grid: GridSpec) -> list[SweepPoint]:
    """Systems of every sweep point, with (delta, p) re-optimized when the scenario asks for it.

    A threshold sweep keeps its delta and re-optimizes p only.
    """
    sweep = scenario.sweep
    points = []
    for index, value in enumerate(sweep.values):
        if sweep.kind is SweepKind.PILOT_LENGTH:
            point = _updated(system, pilot_len=_integral(value, sweep.kind))
        elif sweep.kind is SweepKind.SNR:
            point = _updated(system, snr_db=value)
        elif sweep.kind is SweepKind.THRESHOLD:
            point = _updated(system, age_threshold=_integral(value, sweep.kind))
        else:
            total = _integral(value, sweep.kind)
            n_alarm = round(total / (1.0 + sweep.monitor_per_alarm))
            point = _updated(system, n_alarm=n_alarm, n_monitor=total - n_alarm)
        if scenario.optimize_access:
            point_grid = grid
            if sweep.kind is SweepKind.THRESHOLD:
                point_grid = grid.model_copy(update={"delta_min": point.age_threshold, "delta_max": point.age_threshold})
            params = optimize_access(point_grid, point)
            point = point.model_copy(update={"age_threshold": params.delta, "access_prob": params.p})
        points.append(SweepPoint(index=index, value=float(value), system=point))
    return points


# ---------------------------------------------------------------------------
# Schemes
# ---------------------------------------------------------------------------


def build_scheme(spec: SchemeSpec, system: SystemConfig, rng: np.random.Generator) -> SchemePlug:
    """Instantiate a scheme for one system.

    Trained schemes load their checkpoint (with `{pilot_len}` substituted) and decode
    with its pilot; the others draw a Gaussian pilot from `rng`.

    Raises:
        CheckpointError: If a trained scheme's checkpoint is missing or does not fit the system.
    """
    if spec.solver in {SolverKind.LISTA, SolverKind.LISTA_AGE}:
        path = Path(str(spec.checkpoint).format(pilot_len=system.pilot_len))
        try:
            checkpoint = load_checkpoint(path)
        except CheckpointError as e:
            msg = f"scheme {spec.name!r}: {e}"
            raise CheckpointError(msg) from e
        state = checkpoint.state
        if state.pilot.shape != (system.pilot_len, system.n_devices) or state.n_alarm != system.n_alarm:
            msg = (
                f"scheme {spec.name!r}: checkpoint {path} was trained for pilot {state.pilot.shape} "
                f"with {state.n_alarm} alarm devices, the system has ({system.pilot_len}, {system.n_devices}) "
                f"and {system.n_alarm}"
            )
            raise CheckpointError(msg)
        decoder: Decoder = UnfoldedDecoder(state.params, gated=spec.solver is SolverKind.LISTA_AGE)
        return SchemePlug(spec.name, decoder, state.pilot_matrix, use_ara=spec.use_ara)

    pilot = PilotMatrix.for_system(system, rng)
    if spec.solver is SolverKind.ISTA:
        decoder = IstaDecoder(iters=spec.iterations, theta=spec.threshold)
    elif spec.solver is SolverKind.ORACLE:
        decoder = OracleDecoder(success_prob=spec.success_prob)
    else:
        decoder = NullDecoder()
    return SchemePlug(spec.name, decoder, pilot, use_ara=spec.use_ara)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunTask:
    scenario: str
    kind: SweepKind
    point: SweepPoint
    scheme: SchemeSpec
    seed: int
    horizon: int
    warmup: int
    keep_series: bool = False

    @property
    def label(self) -> str:
        return f"{self.scenario}_{self.kind}-{self.point.value:g}_{self.scheme.name}_seed-{self.seed}"

    def streams(self) -> tuple[np.random.Generator, np.random.Generator]:
        """Independent pilot and traffic generators of this (seed, point)."""
        pilot_seq, traffic_seq = np.random.SeedSequence([self.seed, self.point.index]).spawn(2)
        return np.random.default_rng(pilot_seq), np.random.default_rng(traffic_seq)


@dataclass(frozen=True)
class RunOutcome:
    row: dict[str, Any]
    series: pd.DataFrame | None = None


def run_task(task: RunTask) -> RunOutcome:
    pilot_rng, traffic_rng = task.streams()
    system = task.point.system
    scheme = build_scheme(task.scheme, system, pilot_rng)
    result = run(scheme, system, traffic_rng, horizon=task.horizon, warmup=task.warmup)
    row = {
        "scenario": task.scenario,
        "sweep_kind": str(task.kind),
        "sweep_value": task.point.value,
        "scheme": task.scheme.name,
        "seed": task.seed,
        "pilot_len": system.pilot_len,
        "snr_db": system.snr_db,
        "delta": system.age_threshold,
        "p": system.access_prob,
        "stationary_aoi": result.stationary_aoi,
        "detection_rate": result.mean_detection_rate,
        "slots": result.slots,
    }
    return RunOutcome(row=row, series=result.to_frame() if task.keep_series else None)


def plan_runs(config: ExperimentConfig, *, keep_series: bool = False) -> list[RunTask]:
    """Every (point, scheme, seed) task of the configured scenario, in output order."""
    scenario = config.scenario
    if scenario is None:
        msg = "the configuration has no `scenario` section"
        raise ConfigurationError(msg)
    sim = config.simulation
    points = sweep_points(scenario, config.system, config.grid)
    return [
        RunTask(
            scenario=scenario.name,
            kind=scenario.sweep.kind,
            point=point,
            scheme=scheme,
            seed=seed,
            horizon=sim.horizon,
            warmup=sim.effective_warmup,
            keep_series=keep_series,
        )
        for point in points
        for scheme in scenario.schemes
        for seed in sim.seeds
    ]


@dataclass(frozen=True)
class ScenarioResult:
    runs: pd.DataFrame
    aggregate: pd.DataFrame
    series: dict[str, pd.DataFrame] = field(default_factory=dict)


def aggregate(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and population standard deviation across seeds, per sweep value and scheme."""
    keys = ["scenario", "sweep_kind", "sweep_value", "scheme"]
    grouped = runs.groupby(keys, sort=False)
    frame = grouped.agg(
        aoi_mean=("stationary_aoi", "mean"),
        aoi_std=("stationary_aoi", lambda s: s.std(ddof=0)),
        detection_mean=("detection_rate", "mean"),
        detection_std=("detection_rate", lambda s: s.std(ddof=0)),
        runs=("seed", "size"),
    ).reset_index()
    return frame[list(AGGREGATE_COLUMNS)]


def run_scenario(config: ExperimentConfig, *, workers: int | None = None, keep_series: bool = False) -> ScenarioResult:
    """Execute the sweep x scheme x seed grid of the configured scenario.

    Raises:
        ConfigurationError: If there is no scenario or a sweep point is invalid.
        CheckpointError: If a trained scheme's checkpoint is missing (the scheme is named).
    """
    tasks = plan_runs(config, keep_series=keep_series)
    workers = workers if workers is not None else config.simulation.workers
    _logger.info("running %d task(s) on %d worker(s)", len(tasks), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_task, tasks))
    else:
        outcomes = [run_task(task) for task in tasks]
    runs = pd.DataFrame([outcome.row for outcome in outcomes], columns=list(RUN_COLUMNS))
    series = {task.label: outcome.series for task, outcome in zip(tasks, outcomes, strict=True) if outcome.series is not None}
    return ScenarioResult(runs=runs, aggregate=aggregate(runs), series=series)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def sign_test(better: Sequence[float], worse: Sequence[float], *, higher_is_better: bool = True) -> float:
    """One-sided paired sign test; returns the p-value that `better` does not beat `worse`.

    Ties are dropped. Without any untied pair the p-value is 1.
    """
    diffs = np.asarray(better, dtype=np.float64) - np.asarray(worse, dtype=np.float64)
    if not higher_is_better:
        diffs = -diffs
    diffs = diffs[np.isfinite(diffs) & (diffs != 0.0)]
    if diffs.size == 0:
        return 1.0
    wins = int((diffs > 0.0).sum())
    return float(binomtest(wins, diffs.size, 0.5, alternative="greater").pvalue)


def is_interior_minimum(values: Sequence[float], metric: Sequence[float]) -> bool:
    """Whether the smallest finite metric value lies strictly inside the sorted sweep."""
    order = np.argsort(np.asarray(values, dtype=np.float64))
    ordered = np.asarray(metric, dtype=np.float64)[order]
    finite = np.where(np.isfinite(ordered), ordered, math.inf)
    best = int(np.argmin(finite))
    return 0 < best < len(ordered) - 1
