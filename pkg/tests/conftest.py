"""Root configuration for pytest."""

from pathlib import Path

import numpy as np
import pytest
import torch

from avatar.talking import init_run_directory
from avatar.talking._run_dir import RunDirectory
from avatar.talking.clip import VideoClip
from avatar.talking.models.reports import FilterPolicy
from avatar.talking.models.run_config import (
    CorpusSettings,
    DiffusionTrainingSettings,
    RunConfig,
    SamplerSettings,
    VaeTrainingSettings,
)
from avatar.talking.models.shape import ShapeConfig
from avatar.talking.synthetic.corpus import build_corpus, generate_clip


@pytest.fixture(autouse=True)
def _seed_torch() -> None:
    """Makes tests that draw from the global torch generator reproducible."""
    torch.manual_seed(0)


@pytest.fixture
def shape_cfg() -> ShapeConfig:
    """A small frame geometry: 32x32 frames, 2x2 motion latents."""
    return ShapeConfig(H=32, W=32, d_s=16)


@pytest.fixture
def clip(shape_cfg: ShapeConfig) -> VideoClip:
    """A two-second synthetic clip at 25 fps."""
    return generate_clip(3, 2.0, 25.0, shape_cfg)


@pytest.fixture
def clips(shape_cfg: ShapeConfig) -> list[VideoClip]:
    """Three short clips of different identities."""
    return [generate_clip(seed, 1.2, 25.0, shape_cfg) for seed in range(3)]


@pytest.fixture
def tiny_config(shape_cfg: ShapeConfig) -> RunConfig:
    """A run configuration that trains in seconds."""
    return RunConfig(
        shape=shape_cfg,
        sampler=SamplerSettings(steps=4, seed=0),
        corpus=CorpusSettings(n_identities=3, duration_s=1.2, fps=25.0),
        filter_policy=FilterPolicy(min_segment_s=0.5),
        vae_training=VaeTrainingSettings(
            steps=3, batch_size=2, checkpoint_interval=2, keep_checkpoints=2
        ),
        diffusion_training=DiffusionTrainingSettings(
            steps=3,
            batch_size=2,
            warmup_steps=2,
            window_min=8,
            window_max=12,
            checkpoint_interval=2,
            keep_checkpoints=2,
        ),
    )


@pytest.fixture
def run_dir(tmp_path: Path, tiny_config: RunConfig) -> RunDirectory:
    """Create a run directory holding ``tiny_config``."""
    return init_run_directory(tmp_path / "run", tiny_config)


@pytest.fixture
def corpus_dir(tmp_path: Path, tiny_config: RunConfig) -> Path:
    """A synthetic corpus of three identities written to disk."""
    out = tmp_path / "corpus"
    build_corpus(tiny_config.corpus, tiny_config.shape, out)
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    """A seeded numpy generator."""
    return np.random.default_rng(1234)
