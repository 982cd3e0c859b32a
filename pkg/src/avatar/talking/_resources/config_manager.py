"""The run configuration file in a run directory."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Final, Self

from avatar.talking._logging import null_logger
from avatar.talking.models.run_config import RunConfig

from .pydantic_resource_manager import MutablePydanticResourceManager

if TYPE_CHECKING:
    # Avoid circular dependency for type hint in __init__ only
    from avatar.talking._run_dir import RunDirectory

logger: Final = null_logger(__name__)

CONFIG_FILE: Final = "config.json"


class RunConfigManager(MutablePydanticResourceManager[RunConfig]):
    """Manages ``config.json`` of a run directory."""

    def __init__(self: Self, run_dir: RunDirectory) -> None:
        """Initializes the RunConfig resource manager."""
        super().__init__(run_dir, RunConfig)

    @property
    def relative_path(self: Self) -> Path:
        """Returns the relative path to the config file."""
        return Path(CONFIG_FILE)

    def save(self: Self, model: RunConfig) -> None:
        """Save the run configuration, logging the write."""
        super().save(model)
        logger.debug(f"Saved run configuration to {self.path}")
