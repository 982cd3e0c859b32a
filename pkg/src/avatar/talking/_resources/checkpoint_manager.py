"""Model checkpoints stored as a JSON header plus raw float32 blobs."""

from __future__ import annotations

import hashlib
import shutil
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar, Final, Self

import numpy as np
import torch
from pydantic import ValidationError

from avatar.talking._logging import null_logger
from avatar.talking._utils import path_exists, path_is_dir
from avatar.talking.container import (
    LITTLE_ENDIAN_F32,
    CorruptContainerError,
    read_float32,
)
from avatar.talking.models._enums import TrainingStage
from avatar.talking.models.manifest import CheckpointHeader, CheckpointParameter

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

    # Avoid circular dependency for type hint in __init__ only
    from avatar.talking._run_dir import RunDirectory

logger: Final = null_logger(__name__)

HEADER_NAME: Final = "header.json"
STEP_PREFIX: Final = "step_"
EXTRA_PREFIX: Final = "extra"


def _blob_name(name: str) -> str:
    return f"{name}.f32"


def _step_dir_name(step: int) -> str:
    return f"{STEP_PREFIX}{step:08d}"


class CheckpointManager:
    """Stores checkpoints under ``checkpoints/<stage>/step_<NNNNNNNN>/``.

    Every tensor of the saved modules' state dicts becomes one raw little-endian
    float32 blob, named ``<module>.<key>``. Extra arrays (fitted read-outs and the
    like) are stored next to them as ``extra.<name>``. Only the newest
    ``max_revisions`` checkpoints of each stage are kept.
    """

    MIN_REVISIONS: ClassVar[int] = 1

    def __init__(self: Self, run_dir: RunDirectory, max_revisions: int = 3) -> None:
        """Initialize the checkpoint manager.

        Args:
            run_dir: The run directory.
            max_revisions: Checkpoints retained per stage. Values below 1 are set
                to 1.
        """
        self._run_dir = run_dir
        self._root = Path("checkpoints")
        self._max_revisions = max(self.MIN_REVISIONS, max_revisions)

    @property
    def max_revisions(self: Self) -> int:
        """Maximum number of checkpoints retained per stage."""
        return self._max_revisions

    @max_revisions.setter
    def max_revisions(self: Self, value: int) -> None:
        """Update the per-stage retention; values below 1 are set to 1."""
        self._max_revisions = max(self.MIN_REVISIONS, value)

    def stage_dir(self: Self, stage: TrainingStage | str) -> Path:
        """Absolute path of the checkpoint directory of ``stage``."""
        return self._run_dir.get_file_path(self._root / str(TrainingStage(stage)))

    def save(
        self: Self,
        stage: TrainingStage | str,
        step: int,
        modules: Mapping[str, torch.nn.Module],
        config: Mapping[str, Any] | None = None,
        extras: Mapping[str, NDArray[np.floating]] | None = None,
    ) -> Path:
        """Write a checkpoint and trim old ones.

        Args:
            stage: Training stage the checkpoint belongs to.
            step: Optimisation step.
            modules: Named modules whose state dicts are stored.
            config: Run configuration dump stored in the header.
            extras: Additional named arrays.

        Returns:
            The checkpoint directory.
        """
        lock = self._run_dir.lock
        lock.ensure_can_write()
        if lock.is_acquired():
            lock.refresh()
        stage = TrainingStage(stage)
        relative = self._root / str(stage) / _step_dir_name(step)
        directory = self._run_dir.ensure_directory(relative)

        arrays: dict[str, NDArray[np.floating]] = {}
        for module_name, module in modules.items():
            for key, tensor in module.state_dict().items():
                arrays[f"{module_name}.{key}"] = tensor.detach().cpu().float().numpy()
        for name, array in (extras or {}).items():
            arrays[f"{EXTRA_PREFIX}.{name}"] = np.asarray(array)

        digest = hashlib.sha256()
        parameters = []
        for name, array in arrays.items():
            data = np.ascontiguousarray(array, dtype=LITTLE_ENDIAN_F32)
            (directory / _blob_name(name)).write_bytes(data.tobytes())
            digest.update(data.tobytes())
            parameters.append(
                CheckpointParameter(
                    name=name, file=_blob_name(name), shape=list(array.shape)
                )
            )

        header = CheckpointHeader(
            stage=stage,
            step=step,
            config=dict(config or {}),
            parameters=parameters,
            checksum=digest.hexdigest(),
        )
        self._run_dir.write_text_file(
            relative / HEADER_NAME, header.model_dump_json(indent=2)
        )
        logger.info(f"Saved {stage} checkpoint at step {step} to {directory}")
        self._trim(stage)
        return directory

    def list_checkpoints(self: Self, stage: TrainingStage | str) -> list[Path]:
        """Checkpoint directories of ``stage`` holding a header, oldest first."""
        stage_dir = self.stage_dir(stage)
        if not path_is_dir(stage_dir):
            return []
        found = [
            p
            for p in stage_dir.iterdir()
            if p.name.startswith(STEP_PREFIX) and path_exists(p / HEADER_NAME)
        ]
        found.sort(key=lambda path: path.name)
        return found

    def has_checkpoint(self: Self, stage: TrainingStage | str) -> bool:
        """Whether ``stage`` has at least one complete checkpoint."""
        return bool(self.list_checkpoints(stage))

    def latest(self: Self, stage: TrainingStage | str) -> CheckpointHeader | None:
        """Header of the newest checkpoint of ``stage``, or None."""
        found = self.list_checkpoints(stage)
        return self._read_header(found[-1]) if found else None

    def checksum(self: Self, stage: TrainingStage | str) -> str | None:
        """Stored checksum of the newest checkpoint of ``stage``."""
        header = self.latest(stage)
        return header.checksum if header else None

    def load_arrays(
        self: Self, stage: TrainingStage | str, step: int | None = None
    ) -> tuple[CheckpointHeader, dict[str, NDArray[np.float32]]]:
        """Read every blob of a checkpoint and verify its checksum.

        Args:
            stage: Training stage.
            step: Checkpoint step; the newest when omitted.

        Raises:
            FileNotFoundError: If there is no such checkpoint.
            CorruptContainerError: If a blob disagrees with the header.
        """
        directory = self._resolve(stage, step)
        header = self._read_header(directory)
        digest = hashlib.sha256()
        arrays = {}
        for parameter in header.parameters:
            array = read_float32(parameter, directory)
            digest.update(np.ascontiguousarray(array, LITTLE_ENDIAN_F32).tobytes())
            arrays[parameter.name] = array
        if digest.hexdigest() != header.checksum:
            raise CorruptContainerError(
                f"Checksum mismatch for checkpoint at '{directory}'"
            )
        return header, arrays

    def load_into(
        self: Self,
        stage: TrainingStage | str,
        modules: Mapping[str, torch.nn.Module],
        step: int | None = None,
    ) -> CheckpointHeader:
        """Restore the state dicts of ``modules`` from a checkpoint.

        Returns:
            The header of the checkpoint that was loaded.
        """
        header, arrays = self.load_arrays(stage, step)
        for module_name, module in modules.items():
            prefix = f"{module_name}."
            own = module.state_dict()
            state = {}
            for key, reference in own.items():
                name = prefix + key
                if name not in arrays:
                    raise CorruptContainerError(
                        f"Checkpoint {header.stage}/{header.step} lacks '{name}'"
                    )
                state[key] = torch.from_numpy(arrays[name].copy()).to(
                    dtype=reference.dtype
                )
            module.load_state_dict(state)
        logger.debug(f"Loaded {header.stage} checkpoint at step {header.step}")
        return header

    def load_extras(
        self: Self, stage: TrainingStage | str, step: int | None = None
    ) -> dict[str, NDArray[np.float32]]:
        """Every extra array stored with a checkpoint, by its saved name."""
        _, arrays = self.load_arrays(stage, step)
        prefix = f"{EXTRA_PREFIX}."
        return {
            name.removeprefix(prefix): array
            for name, array in arrays.items()
            if name.startswith(prefix)
        }

    def load_extra(
        self: Self, stage: TrainingStage | str, name: str, step: int | None = None
    ) -> NDArray[np.float32]:
        """Read one extra array stored with a checkpoint."""
        extras = self.load_extras(stage, step)
        if name not in extras:
            raise KeyError(f"Checkpoint has no extra array '{name}'")
        return extras[name]

    def _resolve(self: Self, stage: TrainingStage | str, step: int | None) -> Path:
        if step is not None:
            directory = self.stage_dir(stage) / _step_dir_name(step)
            if not path_exists(directory / HEADER_NAME):
                raise FileNotFoundError(
                    f"No {stage} checkpoint for step {step} at: '{directory}'"
                )
            return directory
        found = self.list_checkpoints(stage)
        if not found:
            raise FileNotFoundError(
                f"No {stage} checkpoint found at: '{self.stage_dir(stage)}'"
            )
        return found[-1]

    def _read_header(self: Self, directory: Path) -> CheckpointHeader:
        try:
            return CheckpointHeader.model_validate_json(
                (directory / HEADER_NAME).read_text()
            )
        except ValidationError as e:
            raise CorruptContainerError(
                f"Invalid checkpoint header at '{directory}': {e}"
            ) from e

    def _trim(self: Self, stage: TrainingStage) -> None:
        """Remove the oldest checkpoints until the retention limit is respected."""
        found = self.list_checkpoints(stage)
        excess = len(found) - self.max_revisions
        for old in found[: max(0, excess)]:
            shutil.rmtree(old, ignore_errors=True)
            logger.debug(f"Removed old checkpoint {old}")
