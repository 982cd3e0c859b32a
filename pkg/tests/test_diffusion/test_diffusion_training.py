"""Tests for stage-two training."""

import numpy as np
import pytest
import torch
from pytest import MonkeyPatch

from avatar.talking._run_dir import RunDirectory
from avatar.talking._training import StageOrderError
from avatar.talking.clip import VideoClip
from avatar.talking.diffusion import training as diffusion_training
from avatar.talking.diffusion.data import DataNormalizer
from avatar.talking.diffusion.landmarks import train_landmark_diffusion
from avatar.talking.diffusion.training import (
    LATENT_INDEX,
    cached_motion_latents,
    clip_name,
    load_stage_two,
    prepare_sequences,
    train_diffusion,
    warmup_inverse_sqrt,
)
from avatar.talking.models._enums import TrainingStage
from avatar.talking.models.run_config import RunConfig
from avatar.talking.vae.training import (
    VaeNets,
    load_vae,
    save_vae_checkpoint,
    train_vae,
)


def test_warmup_inverse_sqrt() -> None:
    """Tests the learning-rate factor during and after warm-up."""
    factor = warmup_inverse_sqrt(4)
    assert [factor(s) for s in (0, 1, 3)] == pytest.approx([0.25, 0.5, 1.0])
    assert factor(15) == pytest.approx(0.5)
    assert max(factor(s) for s in range(100)) == pytest.approx(1.0)

    no_warmup = warmup_inverse_sqrt(0)
    assert no_warmup(0) == 1.0
    assert no_warmup(3) == pytest.approx(0.5)


def test_clip_name(clips: list[VideoClip]) -> None:
    """Tests the latent cache key of a clip."""
    assert clip_name(2, clips[2]) == f"0002_{clips[2].identity_id}"


def test_prepare_sequences_errors(
    clips: list[VideoClip], tiny_config: RunConfig
) -> None:
    """Tests that stage two needs clips and, for latents, an autoencoder."""
    with pytest.raises(ValueError, match="empty corpus"):
        prepare_sequences([], tiny_config)
    with pytest.raises(StageOrderError, match="needs a trained VAE"):
        prepare_sequences(clips, tiny_config)


def test_prepare_landmark_sequences(
    clips: list[VideoClip], landmark_config: RunConfig
) -> None:
    """Tests that landmark sequences are normalised by the half-extent."""
    sequences, normalizer, readout = prepare_sequences(clips, landmark_config)
    assert readout is None
    assert len(sequences) == 3
    assert sequences[0].data.shape == (30, 68, 2)
    np.testing.assert_array_equal(normalizer.offset, 16.0)
    assert np.abs(sequences[0].data).max() <= 1.0


def test_prepare_latent_sequences(
    clips: list[VideoClip], tiny_config: RunConfig
) -> None:
    """Tests that latent sequences are standardised and get a read-out."""
    vae = VaeNets.build(tiny_config).vae.eval()
    sequences, normalizer, readout = prepare_sequences(clips, tiny_config, vae)
    assert sequences[0].data.shape == (30, 2, 2, 3)
    assert normalizer.offset.shape == (2, 2, 3)
    assert readout is not None
    assert readout.weights.shape == (12, 136)
    assert sequences[0].data.dtype == np.float32


def test_latent_cache(
    clips: list[VideoClip],
    tiny_config: RunConfig,
    run_dir: RunDirectory,
    monkeypatch: MonkeyPatch,
) -> None:
    """Tests that latents are cached per VAE checkpoint."""
    nets = VaeNets.build(tiny_config)
    save_vae_checkpoint(run_dir, nets, tiny_config, 1)
    vae = load_vae(run_dir, tiny_config)

    first = cached_motion_latents(vae, clips, run_dir)
    assert run_dir.file_exists(LATENT_INDEX)

    def fail(*_: object) -> None:
        raise AssertionError("latents were re-encoded")

    with monkeypatch.context() as m:
        m.setattr(diffusion_training, "encode_corpus", fail)
        second = cached_motion_latents(vae, clips, run_dir)
    for a, b in zip(first, second, strict=True):
        np.testing.assert_array_equal(a, b)

    with torch.no_grad():
        next(nets.vae.parameters()).add_(1.0)
    save_vae_checkpoint(run_dir, nets, tiny_config, 2)
    calls = []
    original = diffusion_training.encode_corpus

    def count(*args: object) -> list[np.ndarray]:
        calls.append(1)
        return original(*args)  # type: ignore[arg-type]

    monkeypatch.setattr(diffusion_training, "encode_corpus", count)
    cached_motion_latents(load_vae(run_dir, tiny_config), clips, run_dir)
    assert calls == [1]


def test_train_landmark_diffusion(
    clips: list[VideoClip], landmark_config: RunConfig, run_dir: RunDirectory
) -> None:
    """Tests a short landmark run: checkpoints, log and learning rates."""
    result = train_landmark_diffusion(clips, landmark_config, run_dir)

    assert result.steps == 3
    assert all(losses.is_finite() for losses in result.history)
    names = [
        p.name for p in run_dir.checkpoints.list_checkpoints(TrainingStage.diffusion)
    ]
    assert names == ["step_00000002", "step_00000003"]
    log = run_dir.loss_log(TrainingStage.diffusion).read()
    assert log["step"].tolist() == [1, 2, 3]
    assert log["learning_rate"].tolist() == pytest.approx(
        [5e-4, 1e-3, 1e-3 * (2 / 3) ** 0.5]
    )

    loaded = load_stage_two(run_dir, landmark_config)
    assert loaded.readout is None
    expected = DataNormalizer.for_landmarks(landmark_config.shape)
    np.testing.assert_array_equal(loaded.normalizer.scale, expected.scale)
    for key, value in result.trained.model.state_dict().items():
        assert torch.equal(loaded.model.state_dict()[key], value)


def test_train_diffusion_on_latents(
    clips: list[VideoClip], tiny_config: RunConfig, run_dir: RunDirectory
) -> None:
    """Tests that the motion prior trains on a run's stage-one autoencoder."""
    train_vae(clips, tiny_config, run_dir)
    result = train_diffusion(clips, tiny_config, run_dir)

    assert result.steps == 3
    assert run_dir.file_exists(LATENT_INDEX)
    loaded = load_stage_two(run_dir, tiny_config)
    assert loaded.readout is not None
    np.testing.assert_array_equal(
        loaded.normalizer.offset, result.trained.normalizer.offset
    )


def test_stage_order(
    clips: list[VideoClip], tiny_config: RunConfig, run_dir: RunDirectory
) -> None:
    """Tests that stage two refuses to run without stage one."""
    with pytest.raises(StageOrderError, match="No VAE checkpoint"):
        train_diffusion(clips, tiny_config, run_dir)
    with pytest.raises(StageOrderError, match="No diffusion checkpoint"):
        load_stage_two(run_dir, tiny_config)
