"""Tests for RunConfigManager."""

import json
from pathlib import Path

import pytest

from avatar.talking._resources.config_manager import CONFIG_FILE, RunConfigManager
from avatar.talking._run_dir import RunDirectory
from avatar.talking.models._enums import SamplerKind
from avatar.talking.models.run_config import RunConfig


def test_config_manager_paths(run_dir: RunDirectory) -> None:
    """Tests the location of the config file."""
    manager = run_dir.config
    assert isinstance(manager, RunConfigManager)
    assert manager.path == run_dir.path / CONFIG_FILE
    assert manager.exists


def test_load_returns_stored_config(
    run_dir: RunDirectory, tiny_config: RunConfig
) -> None:
    """Tests that the stored config equals the one the run was created with."""
    assert run_dir.load_config() == tiny_config


def test_get_dot_notation(run_dir: RunDirectory) -> None:
    """Tests nested and top-level gets with defaults."""
    assert run_dir.config.get("sampler.steps") == 4
    assert run_dir.config.get("seed") == 0
    assert run_dir.config.get("sampler.nothing", "fallback") == "fallback"
    assert run_dir.config.get("nothing") is None


def test_set_and_update(run_dir: RunDirectory) -> None:
    """Tests that updates are validated and written to disk."""
    run_dir.config.set("sampler.kind", "sde")
    updated = run_dir.config.update(
        {"diffusion_training.steps": 7, "corpus.n_identities": 5}
    )

    assert updated.sampler.kind == SamplerKind.sde
    assert updated.diffusion_training.steps == 7
    on_disk = json.loads(run_dir.config.path.read_text())
    assert on_disk["sampler"]["kind"] == "sde"
    assert on_disk["corpus"]["n_identities"] == 5
    assert run_dir.load_config().diffusion_training.steps == 7


def test_invalid_update_leaves_file_untouched(run_dir: RunDirectory) -> None:
    """Tests that an invalid value raises and is not saved."""
    before = run_dir.config.path.read_text()
    with pytest.raises(ValueError, match="Invalid value set for 'RunConfigManager'"):
        run_dir.config.set("sampler.steps", 0)
    with pytest.raises(ValueError, match="Invalid value set"):
        run_dir.config.update(
            {"diffusion_training.window_min": 30, "diffusion_training.window_max": 20}
        )
    assert run_dir.config.path.read_text() == before


def test_reset_restores_defaults(run_dir: RunDirectory) -> None:
    """Tests that reset writes the default configuration."""
    config = run_dir.config.reset()
    assert config == RunConfig()
    assert run_dir.load_config() == RunConfig()


def test_missing_config(tmp_path: Path) -> None:
    """Tests the errors raised for a run directory without config.json."""
    run_dir = RunDirectory(tmp_path)
    with pytest.raises(FileNotFoundError, match="when getting key seed"):
        run_dir.config.get("seed")
    with pytest.raises(FileNotFoundError, match="when setting updates"):
        run_dir.config.set("seed", 1)


def test_invalid_json(run_dir: RunDirectory) -> None:
    """Tests that a corrupt config file is reported as a ValueError."""
    run_dir.config.path.write_text("{not json")
    with pytest.raises(ValueError):
        run_dir.config.load(force=True)
