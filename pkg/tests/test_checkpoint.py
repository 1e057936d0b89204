"""Tests for training checkpoints."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from aoi_access import (
    CHECKPOINT_FORMAT,
    CheckpointError,
    SystemConfig,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)


@pytest.fixture
def trained(small_system: SystemConfig) -> tuple[object, np.random.Generator]:
    """A few joint steps, so the optimizer has moments worth saving."""
    rng = np.random.default_rng(3)
    tcfg = TrainConfig(layers=2, batch_size=8, stagewise=False, max_steps=5)
    return train(small_system, tcfg, rng).state, rng


def test_round_trip(tmp_path: Path, small_system: SystemConfig, trained: tuple) -> None:
    """Parameters, optimizer moments, history and configs come back unchanged."""
    state, rng = trained
    tcfg = TrainConfig(layers=2, batch_size=8, stagewise=False, max_steps=5)
    path = save_checkpoint(tmp_path / "nested" / "model.npz", state, system=small_system, train=tcfg, rng=rng)
    assert path.is_file()

    loaded = load_checkpoint(path)
    restored = loaded.state
    np.testing.assert_array_equal(restored.pilot, state.pilot)
    np.testing.assert_array_equal(restored.thetas, state.thetas)
    assert restored.omega == state.omega
    assert (restored.step, restored.stage, restored.lr, restored.n_alarm) == (state.step, state.stage, state.lr, state.n_alarm)
    assert restored.loss_history == state.loss_history
    assert restored.lr_history == state.lr_history
    assert restored.adam.t == state.adam.t
    for name, moment in state.adam.m.items():
        np.testing.assert_array_equal(restored.adam.m[name], moment)
        np.testing.assert_array_equal(restored.adam.v[name], state.adam.v[name])
    assert loaded.system == small_system
    assert loaded.train == tcfg


def test_restored_generator_continues_the_stream(tmp_path: Path, trained: tuple) -> None:
    """The saved generator state resumes exactly where the run stopped."""
    state, rng = trained
    path = save_checkpoint(tmp_path / "model.npz", state, rng=rng)
    restored = load_checkpoint(path).restore_rng()
    assert restored is not None
    assert np.array_equal(restored.random(5), rng.random(5))


def test_noise_free_system_survives(tmp_path: Path, small_system: SystemConfig, trained: tuple) -> None:
    """An infinite SNR is stored and read back."""
    state, _ = trained
    system = small_system.model_copy(update={"snr_db": math.inf})
    loaded = load_checkpoint(save_checkpoint(tmp_path / "model.npz", state, system=system))
    assert loaded.system is not None
    assert math.isinf(loaded.system.snr_db)
    assert loaded.restore_rng() is None
    assert loaded.train is None


def test_missing_file(tmp_path: Path) -> None:
    """A missing checkpoint is reported as such."""
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "absent.npz")


def test_unreadable_file(tmp_path: Path) -> None:
    """Garbage is not a checkpoint."""
    path = tmp_path / "garbage.npz"
    path.write_text("definitely not numpy", encoding="utf-8")
    with pytest.raises(CheckpointError, match="unreadable"):
        load_checkpoint(path)


@pytest.mark.parametrize(
    ("header", "message"),
    [
        ({"format": "something-else", "version": 1}, "not an aoi-access checkpoint"),
        ({"format": CHECKPOINT_FORMAT, "version": 99}, "version 99"),
    ],
)
def test_foreign_header(tmp_path: Path, header: dict, message: str) -> None:
    """Other formats and versions are refused."""
    path = tmp_path / "foreign.npz"
    with path.open("wb") as handle:
        np.savez(handle, header=np.array(json.dumps(header)), pilot=np.eye(2))
    with pytest.raises(CheckpointError, match=message):
        load_checkpoint(path)
