"""Tests for the analytic access model and the (delta, p) optimizer."""

import math

import numpy as np
import pytest
from scipy.stats import binom

from aoi_access import (
    AccessMode,
    GridSpec,
    InfeasibleGridError,
    PopulationRounding,
    SystemConfig,
    aoi_chain_mean,
    avg_aoi,
    binomial_cdf,
    eligible_population,
    optimize_access,
    optimize_over_pilot_lengths,
    s_max,
    simulate_age_chain,
    success_rate,
    success_surface,
    tuned_system,
)

# The full-scale cell: N = 64, K = 128, a_max = 100, N_t = 3.
FULL_SCALE = SystemConfig(n_alarm=64, n_monitor=128, age_max=100, ad_active_prob=0.05, pilot_len=39)


class TestAverageAoi:
    """The closed-form average AoI."""

    def test_always_fresh(self) -> None:
        """delta = 1 with certain access and success gives one slot."""
        assert avg_aoi(1, 1.0, 1.0) == pytest.approx(1.0)

    def test_half_access(self) -> None:
        """delta = 1, p = 0.5, q = 1 gives two slots."""
        assert avg_aoi(1, 0.5, 1.0) == pytest.approx(2.0)

    def test_no_threshold_is_geometric(self) -> None:
        """Without a threshold the AoI is the mean of a geometric variable."""
        assert avg_aoi(0, 0.2, 0.5) == pytest.approx(10.0)

    @pytest.mark.parametrize(("p", "q"), [(0.0, 0.5), (0.5, 0.0), (0.0, 0.0)])
    def test_infinite_without_success(self, p: float, q: float) -> None:
        """pq = 0 means the AoI grows without bound."""
        assert math.isinf(avg_aoi(5, p, q))

    @pytest.mark.parametrize(("delta", "r"), [(1, 0.5), (3, 0.2), (10, 0.05), (29, 0.035), (50, 0.9)])
    def test_closed_form_is_chain_mean(self, delta: int, r: float) -> None:
        """The closed form is the stationary mean of the age chain that becomes eligible at age delta."""
        assert avg_aoi(delta, r, 1.0) == pytest.approx(aoi_chain_mean(delta, r), rel=1e-12)

    @pytest.mark.parametrize(("first_eligible_age", "p", "q"), [(1, 0.5, 1.0), (4, 0.5, 0.8), (10, 0.3, 0.6)])
    def test_chain_mean_matches_monte_carlo(self, rng: np.random.Generator, first_eligible_age: int, p: float, q: float) -> None:
        """Simulated ages average to the chain mean."""
        simulated = simulate_age_chain(first_eligible_age, p, q, devices=2000, slots=600, warmup=200, rng=rng)
        assert simulated == pytest.approx(aoi_chain_mean(first_eligible_age, p * q), rel=0.02)


class TestSuccessRate:
    """Recoverability of the active set."""

    def test_s_max_small_pilot(self) -> None:
        """M = 39, S = 192 allows eight active devices."""
        assert s_max(39, 192) == 8

    @pytest.mark.parametrize(("pilot_len", "n_devices"), [(12, 48), (16, 48), (35, 192), (39, 192), (49, 192), (100, 120)])
    def test_s_max_matches_brute_force(self, pilot_len: int, n_devices: int) -> None:
        """The early-stopping scan equals a full scan of the admissible sparsities."""
        admissible = [s for s in range(1, n_devices + 1) if s * math.log2(1 + n_devices / s) <= pilot_len]
        assert s_max(pilot_len, n_devices) == max(admissible, default=0)

    def test_s_max_is_monotone(self) -> None:
        """Longer pilots never admit fewer devices."""
        values = [s_max(m, 192) for m in range(1, 193)]
        assert values == sorted(values)
        assert values[-1] == 192

    def test_eligible_population_rounding(self) -> None:
        """71% of 128 devices is 90.88: floor gives 90, nearest gives 91."""
        assert eligible_population(29, 128, 100) == 90
        assert eligible_population(29, 128, 100, PopulationRounding.NEAREST) == 91
        assert eligible_population(100, 128, 100) == 0

    @pytest.mark.parametrize(("limit", "n", "p"), [(0, 10, 0.1), (5, 90, 0.05), (3, 40, 0.3), (12, 20, 0.5)])
    def test_binomial_cdf_matches_scipy(self, limit: int, n: int, p: float) -> None:
        """The log-gamma CDF agrees with scipy's binomial CDF."""
        assert binomial_cdf(limit, n, p) == pytest.approx(binom.cdf(limit, n, p), rel=1e-9)

    def test_binomial_cdf_edges(self) -> None:
        """Negative limits give 0, an empty population gives 1."""
        assert binomial_cdf(-1, 10, 0.5) == 0.0
        assert binomial_cdf(0, 0, 0.5) == 1.0
        assert binomial_cdf(3, 10, 0.0) == 1.0
        assert binomial_cdf(3, 10, 1.0) == 0.0

    def test_no_eligible_devices_always_succeed(self) -> None:
        """delta = a_max leaves nobody to collide with."""
        assert success_rate(100, 0.5, 128, 100, 3, 39, 192) == 1.0

    def test_alarms_alone_exceed_capacity(self) -> None:
        """More active alarm devices than s_max leaves no room."""
        assert success_rate(10, 0.05, 128, 100, 9, 39, 192) == 0.0

    def test_success_rate_against_monte_carlo(self, rng: np.random.Generator) -> None:
        """The binomial tail matches a Monte-Carlo count of the transmitting devices."""
        q = success_rate(29, 0.05, 128, 100, 3, 39, 192)
        draws = rng.binomial(90, 0.05, size=1_000_000)
        assert q == pytest.approx(np.mean(draws <= s_max(39, 192) - 3), abs=3e-3)


class TestOptimizer:
    """Exhaustive (delta, p) search."""

    def test_minimum_of_surface(self, small_system: SystemConfig) -> None:
        """The optimizer returns the smallest AoI of the grid surface."""
        grid = GridSpec(delta_max=10, p_step=0.05)
        surface = success_surface(grid, small_system)
        params = optimize_access(grid, small_system)
        assert params.avg_aoi == pytest.approx(np.nanmin(surface.avg_aoi))
        assert params.avg_aoi == pytest.approx(avg_aoi(params.delta, params.p, params.q))

    def test_single_point_grid(self) -> None:
        """A one-point grid returns that point; with M >= S every slot succeeds."""
        cfg = SystemConfig(n_alarm=0, n_monitor=4, pilot_len=64, age_max=10, age_threshold=1)
        grid = GridSpec(p_min=1.0, p_max=1.0, delta_min=1, delta_max=1)
        params = optimize_access(grid, cfg)
        assert (params.delta, params.p, params.q) == (1, 1.0, 1.0)

    def test_surface_drops_thresholds_above_age_max(self, small_system: SystemConfig) -> None:
        """Thresholds beyond a_max are not evaluated."""
        surface = success_surface(GridSpec(delta_max=50, p_step=0.1), small_system)
        assert surface.deltas.max() == small_system.age_max

    def test_random_access_surface_has_no_threshold(self, small_system: SystemConfig) -> None:
        """Random access gives the geometric AoI 1 / (pq) on every row."""
        surface = success_surface(GridSpec(delta_max=3, p_min=0.1, p_step=0.1), small_system, access=AccessMode.RANDOM)
        assert np.allclose(surface.avg_aoi[0], surface.avg_aoi[-1])
        with np.errstate(divide="ignore"):
            geometric = 1.0 / (surface.ps * surface.q[0])
        np.testing.assert_allclose(surface.avg_aoi[0], geometric)

    def test_infeasible_grid(self) -> None:
        """A pilot too short for the active alarm devices has no finite AoI anywhere."""
        cfg = SystemConfig(pilot_len=2, ad_active_prob=0.5)
        with pytest.raises(InfeasibleGridError):
            optimize_access(GridSpec(p_step=0.1, delta_step=10), cfg)

    @pytest.mark.parametrize(
        ("pilot_len", "delta", "p"),
        [
            (35, 43, 0.05),
            (37, 43, 0.05),
            (39, 29, 0.05),
            (41, 18, 0.05),
            (43, 18, 0.05),
            (45, 11, 0.05),
            (47, 11, 0.06),
            (49, 11, 0.06),
        ],
    )
    def test_full_scale_table(self, pilot_len: int, delta: int, p: float) -> None:
        """The full-scale optimum lands within two grid steps of the reference (delta, p)."""
        params = optimize_access(GridSpec(), FULL_SCALE.model_copy(update={"pilot_len": pilot_len}))
        assert abs(params.delta - delta) <= 2
        assert abs(params.p - p) <= 0.02 + 1e-9

    def test_full_scale_minimum_is_interior(self) -> None:
        """The minimizer lies strictly inside the grid."""
        grid = GridSpec()
        params = optimize_access(grid, FULL_SCALE)
        assert grid.delta_min < params.delta < grid.delta_max
        assert grid.p_min < params.p < grid.p_max

    def test_over_pilot_lengths(self, small_system: SystemConfig) -> None:
        """One result per pilot length, in order."""
        rows = optimize_over_pilot_lengths(GridSpec(delta_max=10, p_step=0.05), small_system, [6, 8, 10])
        assert [m for m, _ in rows] == [6, 8, 10]

    def test_tuned_system(self, small_system: SystemConfig) -> None:
        """The tuned copy carries the optimal threshold and probability."""
        grid = GridSpec(delta_max=10, p_step=0.05)
        params = optimize_access(grid, small_system)
        tuned = tuned_system(small_system, grid)
        assert (tuned.age_threshold, tuned.access_prob) == (params.delta, params.p)


def test_grid_values() -> None:
    """The default grid has 101 probabilities and 100 thresholds."""
    grid = GridSpec()
    assert grid.p_values().size == 101
    assert grid.p_values()[5] == 0.05
    assert grid.delta_values().tolist() == list(range(1, 101))
