from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from aoi_access._internal.exceptions import CheckpointError
from aoi_access._internal.log import get_logger
from aoi_access._internal.models import SystemConfig, TrainConfig
from aoi_access._internal.training import Adam, TrainState

if TYPE_CHECKING:
    from os import PathLike

_logger = get_logger(__name__)

CHECKPOINT_FORMAT = "aoi-access/train-state"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    state: TrainState
    system: SystemConfig | None
    train: TrainConfig | None
    rng_state: dict[str, Any] | None

    def restore_rng(self) -> np.random.Generator | None:
        """Generator continuing the stream the run was interrupted at."""
        if self.rng_state is None:
            return None
        bit_generator = getattr(np.random, self.rng_state["bit_generator"])()
        bit_generator.state = self.rng_state
        return np.random.Generator(bit_generator)


def save_checkpoint(
    path: str | PathLike[str],
    state: TrainState,
    *,
    system: SystemConfig | None = None,
    train: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> Path:
    path = Path(path)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "pilot_shape": list(state.pilot.shape),
        "n_alarm": state.n_alarm,
        "layers": int(state.thetas.shape[0]),
        "step": state.step,
        "stage": state.stage,
        "lr": state.lr,
        "adam_t": state.adam.t,
        "rng_state": rng.bit_generator.state if rng is not None else None,
        # python-mode dump keeps inf (noise-free SNR) representable in JSON
        "system": system.model_dump() if system is not None else None,
        "train": train.model_dump() if train is not None else None,
    }
    arrays = {
        "pilot": state.pilot,
        "omega": np.array([state.omega]),
        "thetas": state.thetas,
        "loss_history": np.asarray(state.loss_history, dtype=np.float64),
        "lr_history": np.asarray(state.lr_history, dtype=np.float64),
        **state.adam.state_arrays(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(handle, header=np.array(json.dumps(header)), **arrays)
    _logger.info("checkpoint written: %s (step %d)", path, state.step)
    return path


def load_checkpoint(path: str | PathLike[str]) -> Checkpoint:
    """Read a checkpoint written by `save_checkpoint`.

    Raises:
        CheckpointError: If the file is missing, unreadable, or of another format or version.
    """
    path = Path(path)
    if not path.is_file():
        msg = f"checkpoint not found: {path}"
        raise CheckpointError(msg)
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            arrays = {name: np.array(data[name]) for name in data.files if name != "header"}
    except (OSError, ValueError, KeyError, zipfile.BadZipFile) as exc:
        msg = f"unreadable checkpoint {path}: {exc}"
        raise CheckpointError(msg) from exc

    if header.get("format") != CHECKPOINT_FORMAT:
        msg = f"{path} is not an aoi-access checkpoint"
        raise CheckpointError(msg)
    if header.get("version") != CHECKPOINT_VERSION:
        msg = f"{path} has checkpoint version {header.get('version')}, this release reads version {CHECKPOINT_VERSION}"
        raise CheckpointError(msg)

    adam = Adam(header["lr"])
    adam.load_state_arrays({k: v for k, v in arrays.items() if k.startswith("adam_")}, t=header["adam_t"])
    state = TrainState(
        pilot=arrays["pilot"],
        omega=float(arrays["omega"][0]),
        thetas=arrays["thetas"],
        n_alarm=header["n_alarm"],
        step=header["step"],
        stage=header["stage"],
        lr=header["lr"],
        adam=adam,
        loss_history=arrays["loss_history"].tolist(),
        lr_history=arrays["lr_history"].tolist(),
    )
    return Checkpoint(
        state=state,
        system=SystemConfig.model_validate(header["system"]) if header.get("system") else None,
        train=TrainConfig.model_validate(header["train"]) if header.get("train") else None,
        rng_state=header.get("rng_state"),
    )
