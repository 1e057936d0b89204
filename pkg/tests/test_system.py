"""Tests for the system model: pilots, channel vectors, ages and the received signal."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from aoi_access import (
    AccessMode,
    ActivityMask,
    AgeVector,
    DimensionError,
    PilotMatrix,
    SparseChannelVector,
    SystemConfig,
    draw_activity,
    eligible_monitors,
    encode,
    expected_signal_power,
    generate_instance,
    noise_variance,
    normalize_columns,
    stack_complex,
    unstack_complex,
)


class TestPilotMatrix:
    """Column normalization and the alarm/monitor split."""

    def test_columns_have_unit_norm(self, rng: np.random.Generator) -> None:
        """Every column of a random pilot has l2 norm one."""
        pilot = PilotMatrix.random(12, 30, rng, n_alarm=10)
        assert pilot.shape == (12, 30)
        np.testing.assert_allclose(np.linalg.norm(pilot.entries, axis=0), 1.0, atol=1e-12)

    def test_normalization_is_idempotent(self, rng: np.random.Generator) -> None:
        """Normalizing an already normalized matrix changes nothing."""
        once = normalize_columns(rng.standard_normal((6, 9)))
        assert np.array_equal(normalize_columns(once), once)

    def test_zero_column_is_rejected(self) -> None:
        """An all-zero column cannot be normalized."""
        entries = np.ones((4, 3))
        entries[:, 1] = 0.0
        with pytest.raises(DimensionError, match="all-zero column"):
            normalize_columns(entries)

    def test_one_dimensional_input_is_rejected(self) -> None:
        """A pilot matrix must be two-dimensional."""
        with pytest.raises(DimensionError):
            PilotMatrix(np.ones(5))

    def test_alarm_and_monitor_blocks(self, rng: np.random.Generator) -> None:
        """A holds the first N columns, B the remaining K."""
        pilot = PilotMatrix.random(5, 7, rng, n_alarm=3)
        assert pilot.alarm.shape == (5, 3)
        assert pilot.monitor.shape == (5, 4)
        assert np.array_equal(np.hstack([pilot.alarm, pilot.monitor]), pilot.entries)

    def test_entries_are_read_only(self, rng: np.random.Generator) -> None:
        """Pilot entries cannot be modified in place."""
        pilot = PilotMatrix.random(4, 4, rng)
        with pytest.raises(ValueError, match="read-only"):
            pilot.entries[0, 0] = 2.0


class TestAgeVector:
    """Age bookkeeping."""

    def test_advance_resets_successes_and_ages_the_rest(self) -> None:
        """Delivered devices go back to 1, every other device gets one slot older."""
        ages = AgeVector(np.array([1, 4, 7, 2]))
        advanced = ages.advance(np.array([False, True, False, True]))
        assert advanced.ages.tolist() == [2, 1, 8, 1]

    def test_ages_below_one_are_rejected(self) -> None:
        """An age of zero is not a valid AoI."""
        with pytest.raises(ValueError, match=">= 1"):
            AgeVector(np.array([1, 0, 3]))

    def test_float_ages_are_rejected(self) -> None:
        """Ages are integer slot counts."""
        with pytest.raises(DimensionError):
            AgeVector(np.array([1.0, 2.0]))

    def test_eligibility_is_strictly_above_threshold(self) -> None:
        """A device whose age equals the threshold may not transmit."""
        ages = AgeVector(np.array([2, 3, 4, 5]))
        assert ages.eligible(3).tolist() == [False, False, True, True]

    def test_advance_shape_mismatch(self) -> None:
        """The success indicator must cover every device."""
        with pytest.raises(DimensionError):
            AgeVector.fresh(3).advance(np.array([True, False]))

    def test_uniform_ages_cover_the_range(self, rng: np.random.Generator) -> None:
        """Uniform ages stay within 1..a_max and hit both ends."""
        ages = AgeVector.uniform(5000, 10, rng).ages
        assert ages.min() == 1
        assert ages.max() == 10


class TestInstances:
    """Activity and channel draws."""

    def test_gate_excludes_young_monitor_devices(self, small_system: SystemConfig, rng: np.random.Generator) -> None:
        """With p = 1, exactly the monitor devices above the threshold transmit."""
        cfg = small_system.model_copy(update={"access_prob": 1.0})
        ages = AgeVector(np.arange(1, 9))
        for _ in range(20):
            truth, mask = generate_instance(cfg, ages, rng)
            assert mask.monitor_active.tolist() == (ages.ages > cfg.age_threshold).tolist()
            assert np.all(truth.values[cfg.n_alarm :][ages.ages <= cfg.age_threshold] == 0.0)

    def test_random_access_ignores_ages(self, small_system: SystemConfig, rng: np.random.Generator) -> None:
        """Under plain random access every monitor device contends."""
        cfg = small_system.model_copy(update={"access_prob": 1.0})
        _, mask = generate_instance(cfg, AgeVector.fresh(cfg.n_monitor), rng, access=AccessMode.RANDOM)
        assert mask.monitor_active.all()

    def test_threshold_at_age_max_silences_monitors(self, small_system: SystemConfig, rng: np.random.Generator) -> None:
        """delta = a_max leaves no eligible monitor device."""
        cfg = small_system.model_copy(update={"access_prob": 1.0, "age_threshold": small_system.age_max})
        ages = AgeVector.uniform(cfg.n_monitor, cfg.age_max, rng)
        for _ in range(10):
            _, mask = generate_instance(cfg, ages, rng)
            assert not mask.monitor_active.any()

    def test_support_matches_activity(self, small_system: SystemConfig, rng: np.random.Generator) -> None:
        """Nonzero channel entries are exactly the active devices."""
        ages = AgeVector.uniform(small_system.n_monitor, small_system.age_max, rng)
        for _ in range(20):
            truth, mask = generate_instance(small_system, ages, rng)
            assert truth.support.tolist() == np.flatnonzero(mask.active).tolist()

    def test_mean_support_size(self, rng: np.random.Generator) -> None:
        """The average number of active devices is 0.05 (N + eligible K) within three standard errors."""
        cfg = SystemConfig(n_alarm=64, n_monitor=128, access_prob=0.05, ad_active_prob=0.05, age_threshold=29, age_max=100)
        ages = AgeVector.uniform(cfg.n_monitor, cfg.age_max, rng)
        trials = 20000
        eligible = int(ages.eligible(cfg.age_threshold).sum())
        sizes = np.array([generate_instance(cfg, ages, rng)[0].sparsity for _ in range(trials)])
        expected = 0.05 * (cfg.n_alarm + eligible)
        std_error = math.sqrt(0.05 * 0.95 * (cfg.n_alarm + eligible) / trials)
        assert abs(sizes.mean() - expected) <= 3 * std_error

    def test_young_monitors_never_transmit(self, small_system: SystemConfig, rng: np.random.Generator) -> None:
        """Over a million monitor draws no device at or below the threshold is active."""
        cfg = small_system.model_copy(update={"access_prob": 0.9})
        ages = rng.integers(1, cfg.age_max + 1, size=(cfg.n_monitor, 125_000))
        _, monitor_active = draw_activity(cfg, eligible_monitors(cfg, ages), rng)
        young = ages <= cfg.age_threshold
        assert young.any()
        assert not monitor_active[young].any()
        assert monitor_active[~young].mean() == pytest.approx(0.9, abs=0.01)

    def test_wrong_age_count(self, small_system: SystemConfig, rng: np.random.Generator) -> None:
        """Ages must cover every monitor device."""
        with pytest.raises(DimensionError):
            generate_instance(small_system, AgeVector.fresh(3), rng)

    def test_activity_mask_counts(self) -> None:
        """The mask reports its counts and the alarm support."""
        mask = ActivityMask(np.array([True, False, True]), np.array([False, True]))
        assert mask.n_active_alarm == 2
        assert mask.n_active_monitor == 1
        assert mask.alarm_support.tolist() == [0, 2]
        assert mask.active.tolist() == [True, False, True, False, True]


class TestEncode:
    """The received superimposed pilot signal."""

    def test_noise_free_is_exact(self, rng: np.random.Generator) -> None:
        """At infinite SNR y equals P h exactly."""
        pilot = PilotMatrix.random(6, 10, rng)
        h = SparseChannelVector(np.where(rng.random(10) < 0.3, rng.standard_normal(10), 0.0))
        assert np.array_equal(encode(pilot, h, math.inf, rng), pilot.entries @ h.values)

    def test_length_mismatch(self, rng: np.random.Generator) -> None:
        """P and h must agree on the number of devices."""
        pilot = PilotMatrix.random(6, 10, rng)
        with pytest.raises(DimensionError, match="columns"):
            encode(pilot, SparseChannelVector.zeros(9), 10.0, rng)

    def test_noise_free_is_linear(self, rng: np.random.Generator) -> None:
        """Without noise the encoder is linear in h."""
        pilot = PilotMatrix.random(6, 10, rng)
        first, second = rng.standard_normal((2, 10))
        combined = encode(pilot, 2.5 * first - 0.7 * second, math.inf, rng)
        expected = 2.5 * encode(pilot, first, math.inf, rng) - 0.7 * encode(pilot, second, math.inf, rng)
        np.testing.assert_allclose(combined, expected, rtol=1e-12, atol=1e-12)

    def test_noise_follows_instance_power_by_default(self, rng: np.random.Generator) -> None:
        """Without a signal power each column is noised against its own ||P h||^2."""
        pilot = PilotMatrix.random(8, 12, rng)
        h = np.zeros((12, 20000))
        h[3] = 2.0
        clean = pilot.entries @ h
        y = encode(pilot, h, 10.0, rng)
        power = float(np.sum(clean[:, 0] ** 2))
        assert np.mean(np.sum((y - clean) ** 2, axis=0)) == pytest.approx(power / 10.0, rel=0.02)
        assert np.array_equal(encode(pilot, np.zeros((12, 5)), 10.0, rng), np.zeros((8, 5)))

    def test_noise_power_follows_snr(self, rng: np.random.Generator) -> None:
        """E||n||^2 is the signal power divided by 10^(snr/10)."""
        pilot = PilotMatrix.random(8, 12, rng)
        y = encode(pilot, np.zeros((12, 20000)), 10.0, rng, signal_power=2.0)
        assert np.mean(np.sum(y**2, axis=0)) == pytest.approx(0.2, rel=0.02)

    def test_empirical_snr(self, small_system: SystemConfig, rng: np.random.Generator) -> None:
        """Measured E||n||^2 / E||P h||^2 matches 10^(-snr/10)."""
        cfg = small_system.model_copy(update={"snr_db": 10.0})
        pilot = PilotMatrix.for_system(cfg, rng)
        ages = AgeVector.uniform(cfg.n_monitor, cfg.age_max, rng)
        power = expected_signal_power(cfg, ages)
        signal, noise = 0.0, 0.0
        for _ in range(20000):
            truth, _ = generate_instance(cfg, ages, rng)
            clean = pilot.entries @ truth.values
            y = encode(pilot, truth, cfg.snr_db, rng, signal_power=power)
            signal += float(clean @ clean)
            noise += float((y - clean) @ (y - clean))
        assert noise / signal == pytest.approx(0.1, rel=0.05)

    def test_noise_variance_per_entry(self) -> None:
        """Per-entry variance spreads the noise power over the M measurements."""
        assert noise_variance(4.0, 8, 0.0) == pytest.approx(0.5)

    def test_expected_signal_power(self, small_system: SystemConfig) -> None:
        """The analytic power counts the expected number of active devices."""
        ara = expected_signal_power(small_system)
        assert ara == pytest.approx(4 * 0.2 + 0.3 * 8 * (10 - 3) / 10)
        random = expected_signal_power(small_system, access=AccessMode.RANDOM)
        assert random == pytest.approx(4 * 0.2 + 0.3 * 8)


class TestSystemConfig:
    """Validation of the cell parameters."""

    def test_threshold_above_age_max(self) -> None:
        """The age threshold may not exceed a_max."""
        with pytest.raises(ValidationError, match="age_threshold"):
            SystemConfig(age_max=10, age_threshold=11)

    def test_unknown_field(self) -> None:
        """Unknown keys are rejected."""
        with pytest.raises(ValidationError):
            SystemConfig.model_validate({"n_devices": 10})

    def test_nan_snr(self) -> None:
        """The SNR must be a number."""
        with pytest.raises(ValidationError, match="snr_db"):
            SystemConfig(snr_db=math.nan)

    def test_derived_counts(self) -> None:
        """S = N + K and N_t rounds half up."""
        cfg = SystemConfig(n_alarm=64, n_monitor=128, ad_active_prob=0.05)
        assert cfg.n_devices == 192
        assert cfg.expected_active_alarms == 3


def test_complex_stacking_matches_complex_product(rng: np.random.Generator) -> None:
    """The stacked real model reproduces the complex product."""
    pilot = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    h = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    real, stacked = stack_complex(pilot, h)
    assert stacked is not None
    np.testing.assert_allclose(unstack_complex(real @ stacked), pilot @ h, atol=1e-12)
