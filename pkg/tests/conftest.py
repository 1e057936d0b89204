"""Configuration for the pytest test suite."""

import numpy as np
import pytest

from aoi_access import SystemConfig


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator, fresh for every test."""
    return np.random.default_rng(20240917)


@pytest.fixture
def small_system() -> SystemConfig:
    """A cell small enough for exhaustive checks: 4 alarm devices, 8 monitor devices, M = 8."""
    return SystemConfig(
        n_alarm=4,
        n_monitor=8,
        pilot_len=8,
        snr_db=20.0,
        ad_active_prob=0.2,
        age_max=10,
        access_prob=0.3,
        age_threshold=3,
    )
