"""Main interface for working with a run directory."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Final, Self, TypeVar

from pydantic import BaseModel, ValidationError

from ._logging import null_logger
from ._resources.checkpoint_manager import CheckpointManager
from ._resources.config_manager import RunConfigManager
from ._resources.lock_manager import DEFAULT_LOCK_TIMEOUT, LockManager
from ._resources.loss_log_manager import LossLogManager
from ._utils import path_exists, path_is_dir
from .models._enums import TrainingStage

if TYPE_CHECKING:
    from .models.run_config import RunConfig

logger: Final = null_logger(__name__)

JsonModel = TypeVar("JsonModel", bound=BaseModel)

RUN_SUBDIRS: Final[tuple[str, ...]] = (
    "checkpoints",
    "logs",
    "latents",
    "reports",
    "videos",
)


class RunDirectory:
    """Provides access to a run directory and operations on its contents.

    A run directory holds ``config.json``, checkpoints of both training stages,
    loss logs, cached motion latents, metric reports and exported videos.
    """

    def __init__(
        self: Self,
        path: str | Path,
        *,
        lock_timeout_seconds: int = DEFAULT_LOCK_TIMEOUT,
    ) -> None:
        """Opens an existing run directory.

        Args:
            path: The run directory
            lock_timeout_seconds: Lock expiration time in seconds. Default six hours.

        Raises:
            FileExistsError: If path exists but is not a directory
            FileNotFoundError: If the run directory doesn't exist
        """
        self._path = Path(path).resolve()
        logger.debug(f"Opening run directory '{self._path}'")
        if not path_exists(self._path):
            raise FileNotFoundError(f"No run directory found at {self._path}")
        if not path_is_dir(self._path):
            raise FileExistsError(f"{self._path} exists but is not a directory")

        self._lock = LockManager(self, timeout_seconds=lock_timeout_seconds)
        self._config = RunConfigManager(self)
        self._checkpoints = CheckpointManager(self)
        self._loss_logs: dict[TrainingStage, LossLogManager] = {}

        if not self._config.exists:
            return
        try:
            self._checkpoints.max_revisions = self._config.get(
                "vae_training.keep_checkpoints", CheckpointManager.MIN_REVISIONS
            )
        except ValueError as e:
            logger.warning(
                "Failed to load 'vae_training.keep_checkpoints' from run config. "
                f"Keeping the default checkpoint retention. Error: {e}"
            )

    def __repr__(self: Self) -> str:
        return f"RunDirectory('{self._path}')"

    @property
    def path(self: Self) -> Path:
        """Returns the path to the run directory."""
        return self._path

    @property
    def config(self: Self) -> RunConfigManager:
        """Access the run configuration manager."""
        return self._config

    @property
    def checkpoints(self: Self) -> CheckpointManager:
        """Access the checkpoint manager."""
        return self._checkpoints

    @property
    def lock(self: Self) -> LockManager:
        """Access the lock manager."""
        return self._lock

    def loss_log(self: Self, stage: TrainingStage | str) -> LossLogManager:
        """Access the loss log of one training stage."""
        stage = TrainingStage(stage)
        if stage not in self._loss_logs:
            self._loss_logs[stage] = LossLogManager(self, stage)
        return self._loss_logs[stage]

    def load_config(self: Self) -> RunConfig:
        """Load ``config.json``."""
        return self._config.load(force=True)

    def get_file_path(self: Self, relative_path: str | Path) -> Path:
        """Gets the absolute path to a file within the run directory.

        Args:
            relative_path: Path relative to the run directory

        Returns:
            Absolute path to the file
        """
        return self._path / relative_path

    def read_text_file(
        self: Self, relative_path: str | Path, encoding: str = "utf-8"
    ) -> str:
        """Reads a text file from the run directory.

        Raises:
            FileNotFoundError: If the file doesn't exist
        """
        return self.get_file_path(relative_path).read_text(encoding=encoding)

    def write_text_file(
        self: Self, relative_path: str | Path, content: str, encoding: str = "utf-8"
    ) -> None:
        """Writes text to a file in the run directory.

        Args:
            relative_path: Path relative to the run directory
            content: Text content to write
            encoding: Text encoding to use. Default utf-8

        Raises:
            PermissionError: If another process holds the lock
        """
        self._lock.ensure_can_write()
        file_path = self.get_file_path(relative_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_text(content, encoding=encoding)
        logger.debug(f"Wrote text file to {file_path}")

    def write_file(self: Self, relative_path: str | Path, data: bytes) -> None:
        """Writes bytes to a file in the run directory."""
        self._lock.ensure_can_write()
        file_path = self.get_file_path(relative_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_bytes(data)
        logger.debug(f"Wrote {len(data)} bytes to {file_path}")

    def write_json_model(
        self: Self, relative_path: str | Path, model: BaseModel
    ) -> Path:
        """Serialise a pydantic model as indented JSON.

        Returns:
            The absolute path written.
        """
        self.write_text_file(relative_path, model.model_dump_json(indent=2))
        return self.get_file_path(relative_path)

    def read_json_model(
        self: Self, relative_path: str | Path, model_class: type[JsonModel]
    ) -> JsonModel:
        """Read and validate a JSON file as ``model_class``.

        Raises:
            FileNotFoundError: If the file doesn't exist
            ValueError: If the content does not validate
        """
        path = self.get_file_path(relative_path)
        if not path_exists(path):
            raise FileNotFoundError(
                f"Resource file for '{model_class.__name__}' not found at: '{path}'"
            )
        try:
            return model_class.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise ValueError(
                f"Invalid content in resource file for '{model_class.__name__}': {e}"
            ) from e

    def ensure_directory(self: Self, relative_path: str | Path) -> Path:
        """Ensures a subdirectory exists in the run directory.

        Returns:
            Path to the directory
        """
        dir_path = self.get_file_path(relative_path)
        dir_path.mkdir(parents=True, exist_ok=True)
        return dir_path

    def file_exists(self: Self, relative_path: str | Path) -> bool:
        """Checks if a file exists in the run directory."""
        return path_exists(self.get_file_path(relative_path))
