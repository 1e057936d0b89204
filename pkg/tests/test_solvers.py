"""Tests for ISTA, the unfolded age-gated iteration and the detection metrics."""

import numpy as np
import pytest

from aoi_access import (
    ActivityMask,
    AgeGate,
    AgeVector,
    DimensionError,
    DivergenceError,
    PilotMatrix,
    SolverParams,
    SparseChannelVector,
    SystemConfig,
    UndefinedMetricError,
    age_gated_threshold,
    detect,
    detection_rate,
    ista_solve,
    lasso_objective,
    lista_age_forward,
    max_step_size,
    soft_threshold,
    unfold,
)


def _sparse(n_devices: int, support: list[int], rng: np.random.Generator) -> np.ndarray:
    h = np.zeros(n_devices)
    h[support] = rng.choice([-1.0, 1.0], size=len(support)) * rng.uniform(0.5, 1.5, size=len(support))
    return h


class TestThresholding:
    """Soft and age-gated thresholds."""

    def test_soft_threshold(self) -> None:
        """Values shrink towards zero by theta and never cross it."""
        x = np.array([-2.0, -0.5, 0.0, 0.3, 1.5])
        assert soft_threshold(x, 0.5).tolist() == [-1.5, 0.0, 0.0, 0.0, 1.0]

    @pytest.mark.parametrize("theta", [0.0, 0.3, 2.0])
    def test_soft_threshold_is_nonexpansive(self, rng: np.random.Generator, theta: float) -> None:
        """|eta(a) - eta(b)| <= |a - b| elementwise."""
        a, b = 3.0 * rng.standard_normal((2, 10000))
        gap = np.abs(soft_threshold(a, theta) - soft_threshold(b, theta))
        assert np.all(gap <= np.abs(a - b) + 1e-12)

    def test_closed_gate_forces_zero(self) -> None:
        """Gated coordinates are zero whatever their magnitude."""
        x = np.array([5.0, -5.0, 5.0])
        out = age_gated_threshold(x, np.array([True, False, True]), 1.0)
        assert out.tolist() == [4.0, 0.0, 4.0]

    def test_gate_broadcasts_over_instances(self) -> None:
        """A per-device gate applies to every column of a batch."""
        x = np.ones((3, 4)) * 2.0
        out = age_gated_threshold(x, np.array([True, False, True]), 1.0)
        assert out[1].tolist() == [0.0] * 4
        assert out[0].tolist() == [1.0] * 4

    def test_gate_length_mismatch(self) -> None:
        """The gate must cover every device."""
        with pytest.raises(DimensionError):
            age_gated_threshold(np.ones(4), np.ones(3, dtype=bool), 0.1)


class TestAgeGate:
    """Construction of the gate from ages."""

    def test_from_ages(self) -> None:
        """Alarm devices pass, monitor devices pass iff age > delta."""
        gate = AgeGate.from_ages(AgeVector(np.array([1, 3, 4, 9])), n_alarm=2, delta=3)
        assert gate.gamma.tolist() == [True, True, False, False, True, True]
        assert gate.gated.tolist() == [2, 3]

    def test_alarm_devices_cannot_be_gated(self) -> None:
        """Closing the gate of an alarm device is an error."""
        with pytest.raises(ValueError, match="alarm"):
            AgeGate(np.array([True, False, True]), n_alarm=2)

    def test_open_gate(self) -> None:
        """The open gate passes every device."""
        assert AgeGate.open(5, 2).gamma.all()


class TestIsta:
    """Classical ISTA and its shared iteration."""

    def test_noise_free_recovery(self, rng: np.random.Generator) -> None:
        """A 3-sparse vector is recovered from 30 noise-free measurements."""
        pilot = PilotMatrix.random(30, 60, rng)
        h = _sparse(60, [3, 17, 42], rng)
        estimate = ista_solve(pilot, pilot.entries @ h, max_step_size(pilot), 1e-3, 2000)
        assert np.max(np.abs(estimate.values - h)) < 0.05
        assert set(np.flatnonzero(np.abs(estimate.values) > 0.1)) == {3, 17, 42}

    def test_objective_is_non_increasing(self, rng: np.random.Generator) -> None:
        """With omega = 1 / lambda_max the LASSO objective never goes up."""
        pilot = PilotMatrix.random(16, 40, rng)
        y = pilot.entries @ _sparse(40, [1, 8, 30], rng) + 0.01 * rng.standard_normal(16)
        omega, theta = max_step_size(pilot), 0.02
        _, trajectory = unfold(pilot, y, omega, np.full(200, theta), keep_trajectory=True)
        assert trajectory is not None
        values = [lasso_objective(pilot, y, h, theta / omega) for h in trajectory.states]
        assert all(later <= earlier + 1e-12 * abs(earlier) for earlier, later in zip(values, values[1:], strict=False))

    def test_step_size_is_inverse_largest_eigenvalue(self, rng: np.random.Generator) -> None:
        """The step is 1 / lambda_max(P^T P) for both wide and tall matrices."""
        for shape in ((5, 12), (12, 5)):
            entries = rng.standard_normal(shape)
            expected = 1.0 / np.linalg.eigvalsh(entries.T @ entries)[-1]
            assert max_step_size(entries) == pytest.approx(expected, rel=1e-10)

    def test_divergence_is_reported(self, rng: np.random.Generator) -> None:
        """A step far beyond 1 / lambda_max blows up and names the iteration."""
        pilot = PilotMatrix.random(8, 16, rng)
        y = rng.standard_normal(8)
        with np.errstate(all="ignore"), pytest.raises(DivergenceError) as excinfo:
            unfold(pilot, y, 100.0, np.zeros(2000))
        assert excinfo.value.iteration is not None
        assert excinfo.value.iteration > 0

    def test_measurement_length_mismatch(self, rng: np.random.Generator) -> None:
        """y must have one entry per pilot row."""
        pilot = PilotMatrix.random(8, 16, rng)
        with pytest.raises(DimensionError):
            unfold(pilot, np.zeros(7), 0.1, [0.1])

    def test_batched_equals_columnwise(self, rng: np.random.Generator) -> None:
        """A batch of measurements decodes column by column."""
        pilot = PilotMatrix.random(8, 16, rng)
        y = rng.standard_normal((8, 5))
        batched, _ = unfold(pilot, y, 0.1, [0.05, 0.04, 0.03])
        for q in range(5):
            single, _ = unfold(pilot, y[:, q], 0.1, [0.05, 0.04, 0.03])
            np.testing.assert_allclose(batched[:, q], single, atol=1e-12)

    def test_two_sparse_recovery_rate(self) -> None:
        """Noise-free 2-sparse truths at M/S = 0.8 are recovered exactly in at least 95% of 200 draws.

        The threshold decays geometrically over the 1000 iterations so that the
        shrinkage bias ends far below the error tolerance.
        """
        rng = np.random.default_rng(95)
        thetas = np.geomspace(1e-2, 1e-9, 1000)
        recovered = 0
        for _ in range(200):
            pilot = PilotMatrix.random(40, 50, rng)
            support = sorted(rng.choice(50, size=2, replace=False).tolist())
            h = _sparse(50, support, rng)
            estimate, _ = unfold(pilot, pilot.entries @ h, max_step_size(pilot), thetas)
            exact_support = np.flatnonzero(np.abs(estimate) > 1e-3).tolist() == support
            recovered += exact_support and float(np.linalg.norm(estimate - h)) < 1e-4
        assert recovered >= 190


class TestUnfolded:
    """The unfolded decoder with per-layer thresholds and the age gate."""

    def test_open_gate_is_ista_bit_for_bit(self, rng: np.random.Generator) -> None:
        """An all-open gate with a constant threshold reproduces ISTA exactly."""
        for _ in range(100):
            pilot = PilotMatrix.random(8, 16, rng, n_alarm=4)
            y = rng.standard_normal(8)
            omega, theta = max_step_size(pilot), float(rng.uniform(0.01, 0.2))
            params = SolverParams.constant(omega, theta, 15)
            gated, _ = lista_age_forward(pilot, y, AgeGate.open(16, 4), params, keep_trajectory=False)
            assert np.array_equal(gated.values, ista_solve(pilot, y, omega, theta, 15).values)

    def test_gated_devices_stay_zero(self, rng: np.random.Generator) -> None:
        """Every iterate is zero on the closed part of the gate."""
        pilot = PilotMatrix.random(8, 12, rng, n_alarm=4)
        gate = AgeGate.from_ages(AgeVector(np.array([1, 2, 9, 9, 1, 9, 2, 9])), n_alarm=4, delta=3)
        params = SolverParams(max_step_size(pilot), np.full(6, 0.01))
        _, trajectory = lista_age_forward(pilot, rng.standard_normal(8), gate, params)
        assert trajectory is not None
        assert np.all(trajectory.states[:, gate.gated] == 0.0)
        assert trajectory.layers == 6
        assert trajectory.states.shape == (7, 12)

    def test_trajectory_matches_result(self, rng: np.random.Generator) -> None:
        """The last retained state is the returned estimate."""
        pilot = PilotMatrix.random(8, 12, rng)
        params = SolverParams(0.1, np.array([0.3, 0.2, 0.1]))
        estimate, trajectory = lista_age_forward(pilot, rng.standard_normal(8), None, params)
        assert trajectory is not None
        assert np.array_equal(trajectory.final, estimate.values)

    def test_params_validation(self) -> None:
        """omega must be positive and thresholds nonnegative."""
        with pytest.raises(ValueError, match="omega"):
            SolverParams(0.0, np.ones(3))
        with pytest.raises(ValueError, match="nonnegative"):
            SolverParams(0.1, np.array([0.1, -0.1]))


class TestDetection:
    """Per-device success and the alarm detection rate."""

    @pytest.fixture
    def cfg(self) -> SystemConfig:
        return SystemConfig(n_alarm=3, n_monitor=2, pilot_len=4, age_max=10, age_threshold=2)

    def test_success_within_tolerance(self, cfg: SystemConfig) -> None:
        """Active devices succeed iff their error is at most tau."""
        truth = SparseChannelVector(np.array([1.0, 0.0, -0.5, 0.8, 0.0]))
        mask = ActivityMask(np.array([True, False, True]), np.array([True, False]))
        estimate = np.array([0.95, 0.0, -0.2, 0.8, 0.0])
        result = detect(estimate, truth, mask, cfg)
        assert result.per_device_success.tolist() == [True, False, False, True, False]
        assert result.estimated_support.tolist() == [0, 2, 3]

    def test_detection_rate(self, cfg: SystemConfig) -> None:
        """Half of the active alarm devices are recovered."""
        truth = SparseChannelVector(np.array([1.0, 0.0, -0.5, 0.0, 0.0]))
        mask = ActivityMask(np.array([True, False, True]), np.array([False, False]))
        result = detect(np.array([1.0, 0.0, 0.0, 0.0, 0.0]), truth, mask, cfg)
        assert detection_rate(result, mask.alarm_support) == 0.5

    def test_small_truth_missed_by_support(self, cfg: SystemConfig) -> None:
        """A device estimated as zero is not detected even when its true value is within tau."""
        truth = SparseChannelVector(np.array([0.05, 0.0, 0.0, 0.0, 0.0]))
        mask = ActivityMask(np.array([True, False, False]), np.array([False, False]))
        result = detect(np.zeros(5), truth, mask, cfg)
        assert result.per_device_success[0]
        assert detection_rate(result, mask.alarm_support) == 0.0

    def test_no_active_alarm(self, cfg: SystemConfig) -> None:
        """The rate is undefined without active alarm devices."""
        truth = SparseChannelVector.zeros(5)
        mask = ActivityMask(np.zeros(3, dtype=bool), np.zeros(2, dtype=bool))
        result = detect(np.zeros(5), truth, mask, cfg)
        with pytest.raises(UndefinedMetricError):
            detection_rate(result, mask.alarm_support)

    def test_length_mismatch(self, cfg: SystemConfig) -> None:
        """Estimate, truth and mask must agree in length."""
        mask = ActivityMask(np.zeros(3, dtype=bool), np.zeros(2, dtype=bool))
        with pytest.raises(DimensionError):
            detect(np.zeros(4), SparseChannelVector.zeros(5), mask, cfg)
