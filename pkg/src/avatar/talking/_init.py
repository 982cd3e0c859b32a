"""Initializes a run directory."""

from pathlib import Path
from textwrap import dedent
from typing import Any, Final

from ._logging import null_logger
from ._resources.lock_manager import DEFAULT_LOCK_TIMEOUT
from ._run_dir import RUN_SUBDIRS, RunDirectory
from ._utils import path_exists, path_is_dir
from .models.run_config import RunConfig

logger: Final = null_logger(__name__)

RUN_README_CONTENT: Final[str] = dedent(
    """\
    This directory holds one training and generation run of a talking avatar model.

    config.json     the run configuration
    checkpoints/    VAE and diffusion checkpoints (JSON header + float32 blobs)
    logs/           loss curves per training stage, as CSV
    latents/        motion latents cached for diffusion training
    reports/        metric reports as JSON
    videos/         generated videos as PNG frames plus video.json

    Do not edit files while a command holds the .lock file.
    """
)


def _create_run_directory(path: Path) -> None:
    """Creates the run directory itself.

    Raises:
        FileExistsError: If a run directory already exists at path
    """
    logger.debug(f"Creating run directory at '{path}'")
    if path_exists(path):
        if not path_is_dir(path):
            raise FileExistsError(f"{path} exists but is not a directory")
        if path_exists(path / "config.json"):
            raise FileExistsError(f"A run directory already exists at {path}")
    path.mkdir(parents=True, exist_ok=True)


def init_run_directory(
    path: str | Path,
    config: RunConfig | dict[str, Any] | None = None,
    *,
    lock_timeout_seconds: int = DEFAULT_LOCK_TIMEOUT,
) -> RunDirectory:
    """Creates and initializes a run directory.

    Args:
        path: Directory to create. An existing empty directory is accepted.
        config: Optional RunConfig instance or dictionary of (dot-notation) updates
            applied on top of the defaults.
        lock_timeout_seconds: Lock expiration time in seconds.

    Returns:
        Instance of RunDirectory

    Raises:
        FileExistsError: If a run directory already exists at path
        ValueError: If config fails validation
    """
    path = Path(path)
    _create_run_directory(path)

    run_dir = RunDirectory(path, lock_timeout_seconds=lock_timeout_seconds)
    run_dir.write_text_file("README", RUN_README_CONTENT)
    for name in RUN_SUBDIRS:
        run_dir.ensure_directory(name)

    if isinstance(config, RunConfig):
        run_dir.config.save(config)
    else:
        run_dir.config.reset()
        if config:
            run_dir.config.update(config)
    run_dir.checkpoints.max_revisions = run_dir.config.get(
        "vae_training.keep_checkpoints"
    )

    logger.info(f"Successfully initialized run directory at '{run_dir.path}'")
    return run_dir
