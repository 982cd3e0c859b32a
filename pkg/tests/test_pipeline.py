"""Tests for two-stage training, generation and the ablation runner."""

from pathlib import Path

import numpy as np
import pytest

from avatar.talking import init_run_directory
from avatar.talking._run_dir import RunDirectory
from avatar.talking._training import StageOrderError
from avatar.talking.clip import VideoClip
from avatar.talking.diffusion.landmarks import ConstraintMask
from avatar.talking.models._enums import (
    Ablation,
    LandmarkGroup,
    PoseModeKind,
    TrainingStage,
)
from avatar.talking.models.run_config import AblationSettings, PoseMode, RunConfig
from avatar.talking.pipeline import (
    ABLATION_VARIANTS,
    GeneratedVideo,
    TrainedModels,
    generate_for_clips,
    resolve_poses,
    run_ablations,
    run_generation_pipeline,
    run_two_stage_training,
)


@pytest.fixture
def trained_run(corpus_dir: Path, run_dir: RunDirectory) -> RunDirectory:
    """A run directory with both stages trained for a few steps."""
    run_two_stage_training(corpus_dir, run_dir)
    return run_dir


@pytest.fixture
def models(trained_run: RunDirectory) -> TrainedModels:
    """The trained models of ``trained_run``."""
    return TrainedModels.load(trained_run)


def with_pose_mode(models: TrainedModels, mode: PoseMode) -> TrainedModels:
    """The same trained models under another pose mode."""
    config = models.config.model_copy(update={"pose_mode": mode})
    return TrainedModels(config, models.vae, models.stage_two)


def test_two_stage_training(corpus_dir: Path, run_dir: RunDirectory) -> None:
    """Tests that both stages train and stage two leaves stage one untouched."""
    result = run_two_stage_training(corpus_dir, run_dir)

    assert result.vae.steps == 3
    assert result.diffusion.steps == 3
    assert result.vae_checksum is not None
    assert result.vae_checksum == run_dir.checkpoints.checksum(TrainingStage.vae)
    for stage in (TrainingStage.vae, TrainingStage.diffusion):
        assert run_dir.checkpoints.list_checkpoints(stage)


def test_load_needs_both_stages(run_dir: RunDirectory) -> None:
    """Tests that generation refuses an untrained run."""
    with pytest.raises(StageOrderError, match="No VAE checkpoint"):
        TrainedModels.load(run_dir)


def test_generation_pipeline(models: TrainedModels, clip: VideoClip) -> None:
    """Tests that one video with exactly N frames is generated."""
    video = run_generation_pipeline(
        clip.frames[0], clip.landmarks[0], clip.speech_features, models
    )
    n = clip.n_frames

    assert video.n_frames == n
    assert video.frames.shape == (n, *clip.frames.shape[1:])
    assert video.frames.min() >= 0.0
    assert video.frames.max() <= 1.0
    assert video.landmarks.shape == (n, *clip.landmarks.shape[1:])
    assert video.poses.shape == (n, 3)
    assert video.fps == models.config.corpus.fps
    np.testing.assert_array_equal(video.speech_features, clip.speech_features)


def test_generation_is_seeded(models: TrainedModels, clip: VideoClip) -> None:
    """Tests that the sampler seed fixes the generated video."""
    args = (clip.frames[0], clip.landmarks[0], clip.speech_features[:20], models)
    first = run_generation_pipeline(*args)
    second = run_generation_pipeline(*args)
    np.testing.assert_array_equal(first.frames, second.frames)
    np.testing.assert_array_equal(first.landmarks, second.landmarks)


def test_provided_poses(models: TrainedModels, clip: VideoClip) -> None:
    """Tests that pose mode 'provided' needs a track of the right length."""
    provided = with_pose_mode(models, PoseMode(kind=PoseModeKind.provided))
    speech = clip.speech_features

    with pytest.raises(ValueError, match="needs a pose track"):
        resolve_poses(provided, speech)
    with pytest.raises(ValueError, match="must be"):
        run_generation_pipeline(
            clip.frames[0],
            clip.landmarks[0],
            speech,
            provided,
            poses=clip.poses[:-1],
        )

    video = run_generation_pipeline(
        clip.frames[0], clip.landmarks[0], speech, provided, poses=clip.poses
    )
    np.testing.assert_array_equal(video.poses, clip.poses)


def test_fixed_poses(models: TrainedModels, clip: VideoClip) -> None:
    """Tests that pose mode 'fixed' repeats one pose for every frame."""
    fixed = with_pose_mode(
        models, PoseMode(kind=PoseModeKind.fixed, fixed=(0.1, -0.2, 0.0))
    )
    track = resolve_poses(fixed, clip.speech_features)
    assert track.shape == (clip.n_frames, 3)
    np.testing.assert_allclose(track, np.tile([0.1, -0.2, 0.0], (clip.n_frames, 1)))


def test_predicted_poses(models: TrainedModels, clip: VideoClip) -> None:
    """Tests that the default pose mode predicts a finite track from speech."""
    track = resolve_poses(models, clip.speech_features)
    assert track.shape == (clip.n_frames, 3)
    assert np.isfinite(track).all()


def test_generation_input_errors(models: TrainedModels, clip: VideoClip) -> None:
    """Tests malformed speech and constraints on a latent-space model."""
    with pytest.raises(ValueError, match="Speech features must be"):
        run_generation_pipeline(
            clip.frames[0], clip.landmarks[0], clip.speech_features[:, :5], models
        )
    with pytest.raises(ValueError, match="Speech features must be"):
        run_generation_pipeline(
            clip.frames[0], clip.landmarks[0], clip.speech_features[:0], models
        )

    mask = ConstraintMask.from_groups(
        [LandmarkGroup.mouth], clip.landmarks, models.config.shape
    )
    with pytest.raises(ValueError, match="Fixed landmarks need"):
        run_generation_pipeline(
            clip.frames[0],
            clip.landmarks[0],
            clip.speech_features,
            models,
            constraint=mask,
        )


def test_landmark_generation_with_fixed_mouth(
    tmp_path: Path, corpus_dir: Path, tiny_config: RunConfig, clip: VideoClip
) -> None:
    """Tests that fixed landmarks follow the driving track in landmark mode."""
    config = tiny_config.model_copy(
        update={"ablation": AblationSettings(ablation=Ablation.landmark_pred)}
    )
    run_dir = init_run_directory(tmp_path / "landmark_run", config)
    run_two_stage_training(corpus_dir, run_dir)
    models = TrainedModels.load(run_dir)

    mask = ConstraintMask.from_groups(
        [LandmarkGroup.mouth], clip.landmarks, config.shape
    )
    video = run_generation_pipeline(
        clip.frames[0],
        clip.landmarks[0],
        clip.speech_features,
        models,
        constraint=mask,
    )

    assert video.n_frames == clip.n_frames
    np.testing.assert_allclose(
        video.landmarks[:, mask.fixed], clip.landmarks[:, mask.fixed], atol=1e-3
    )


def test_to_clip(models: TrainedModels, clip: VideoClip) -> None:
    """Tests that a generated video converts to a clip for evaluation."""
    video = run_generation_pipeline(
        clip.frames[0], clip.landmarks[0], clip.speech_features[:10], models, fps=30.0
    )
    as_clip = video.to_clip("speaker")

    assert isinstance(video, GeneratedVideo)
    assert as_clip.identity_id == "speaker"
    assert as_clip.n_frames == 10
    assert as_clip.fps == 30.0
    np.testing.assert_array_equal(as_clip.frames, video.frames)


def test_generate_for_clips(models: TrainedModels, clips: list[VideoClip]) -> None:
    """Tests one video per clip and that a seed override leaves the config alone."""
    videos = generate_for_clips(models, clips, seed=7)

    assert [v.n_frames for v in videos] == [c.n_frames for c in clips]
    assert [v.fps for v in videos] == [c.fps for c in clips]
    assert models.config.sampler.seed == 0


def test_ablation_variants() -> None:
    """Tests the ablation table rows."""
    assert {"full", "no_disentangle", "no_pose", "no_diffusion"} <= set(
        ABLATION_VARIANTS
    )
    assert "landmark_pred" in ABLATION_VARIANTS
    assert "transformer" in ABLATION_VARIANTS


def test_ablations_need_clips_and_seeds(
    tmp_path: Path, corpus_dir: Path, tiny_config: RunConfig, clips: list[VideoClip]
) -> None:
    """Tests that an ablation run without clips or seeds is refused."""
    with pytest.raises(ValueError, match="evaluation clips"):
        run_ablations(corpus_dir, [], tiny_config, tmp_path / "ablate")
    with pytest.raises(ValueError, match="at least one seed"):
        run_ablations(corpus_dir, clips, tiny_config, tmp_path / "ablate", seeds=())


@pytest.mark.integration
def test_run_ablations(
    tmp_path: Path, corpus_dir: Path, tiny_config: RunConfig, clips: list[VideoClip]
) -> None:
    """Tests a two-variant ablation table over two sampler seeds."""
    variants = {name: ABLATION_VARIANTS[name] for name in ("full", "no_pose")}
    out = tmp_path / "ablate"
    table = run_ablations(
        corpus_dir, clips, tiny_config, out, variants=variants, seeds=(0, 1)
    )

    assert table.index.tolist() == ["full", "no_pose"]
    assert (table["lipsync_std"] >= 0).all()
    assert (out / "ablation.csv").exists()
    for name in variants:
        assert (out / name / "reports" / "metrics.json").exists()
