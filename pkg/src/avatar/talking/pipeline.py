"""Two-stage training, zero-shot generation and the ablation runner."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Final, Self

import numpy as np
import pandas as pd
import torch

from avatar.talking._init import init_run_directory
from avatar.talking._logging import null_logger
from avatar.talking._run_dir import RunDirectory
from avatar.talking._training import StageOrderError
from avatar.talking._utils import path_exists, to_tensor
from avatar.talking.clip import VideoClip
from avatar.talking.diffusion.landmarks import (
    ConstraintMask,
    clip_to_frame,
    constrained_sample,
)
from avatar.talking.diffusion.training import (
    DiffusionTrainingResult,
    StageTwoModel,
    load_stage_two,
    train_diffusion,
)
from avatar.talking.evaluation import run_evaluation
from avatar.talking.models._enums import (
    Ablation,
    Backbone,
    ConditioningVariant,
    PoseModeKind,
    TrainingStage,
)
from avatar.talking.models.run_config import AblationSettings, RunConfig
from avatar.talking.synthetic.corpus import read_corpus
from avatar.talking.vae.raster import rasterize_landmarks
from avatar.talking.vae.reenact import reenact, render_sequence
from avatar.talking.vae.training import VaeTrainingResult, load_vae, train_vae

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from numpy.typing import ArrayLike, NDArray

    from avatar.talking.models.reports import MetricReport
    from avatar.talking.vae.networks import FrameAutoencoder

__all__ = [
    "ABLATION_VARIANTS",
    "GeneratedVideo",
    "StageOrderError",
    "TrainedModels",
    "TwoStageResult",
    "run_ablations",
    "run_generation_pipeline",
    "run_two_stage_training",
]

logger: Final = null_logger(__name__)

ABLATION_TABLE: Final = "ablation.csv"

ABLATION_VARIANTS: Final[dict[str, AblationSettings]] = {
    "full": AblationSettings(),
    "no_disentangle": AblationSettings(ablation=Ablation.no_disentangle),
    "no_pose": AblationSettings(ablation=Ablation.no_pose),
    "no_diffusion": AblationSettings(ablation=Ablation.no_diffusion),
    "landmark_pred": AblationSettings(ablation=Ablation.landmark_pred),
    **{
        f"cond_{variant}": AblationSettings(
            ablation=Ablation.cond_variant, cond_variant=variant
        )
        for variant in ConditioningVariant
        if variant != ConditioningVariant.speech_add_ref_attn
    },
    "transformer": AblationSettings(backbone=Backbone.transformer),
}


@dataclass
class TrainedModels:
    """Everything generation needs: the run config and both trained stages."""

    config: RunConfig
    vae: FrameAutoencoder
    stage_two: StageTwoModel

    @classmethod
    def load(cls: type[Self], run_dir: RunDirectory) -> Self:
        """Load the newest checkpoints of both stages.

        Raises:
            StageOrderError: If either stage has no checkpoint.
        """
        config = run_dir.load_config()
        return cls(config, load_vae(run_dir, config), load_stage_two(run_dir, config))


@dataclass(frozen=True)
class GeneratedVideo:
    """A generated clip.

    Attributes:
        frames: ``[N, H, W, 3]`` in [0, 1].
        landmarks: ``[N, K, 2]`` pixel landmarks, read out from the motion latents
            or generated directly.
        poses: ``[N, 3]`` pose track the video was conditioned on.
        speech_features: ``[N, d_s]`` driving speech.
        fps: Frame rate.
    """

    frames: NDArray[np.float32]
    landmarks: NDArray[np.float32]
    poses: NDArray[np.float32]
    speech_features: NDArray[np.float32]
    fps: float

    @property
    def n_frames(self: Self) -> int:
        """Number of frames N."""
        return int(self.frames.shape[0])

    def to_clip(self: Self, identity_id: str = "generated") -> VideoClip:
        """The video as a :class:`VideoClip`, for evaluation and storage."""
        return VideoClip(
            frames=self.frames,
            landmarks=self.landmarks,
            poses=self.poses,
            speech_features=self.speech_features,
            fps=self.fps,
            identity_id=identity_id,
        )


def _check_speech(speech: NDArray[np.float32], config: RunConfig) -> None:
    if speech.ndim != 2 or speech.shape[0] < 1 or speech.shape[1] != config.shape.d_s:
        raise ValueError(
            f"Speech features must be [N >= 1, {config.shape.d_s}], got {speech.shape}"
        )


def resolve_poses(
    models: TrainedModels,
    speech: NDArray[np.float32],
    poses: ArrayLike | None = None,
) -> NDArray[np.float32]:
    """The ``[N, 3]`` pose track selected by the run's pose mode.

    Raises:
        ValueError: If a provided track is missing or does not have N rows.
    """
    n = speech.shape[0]
    mode = models.config.pose_mode
    match mode.kind:
        case PoseModeKind.provided:
            if poses is None:
                raise ValueError("Pose mode 'provided' needs a pose track")
            track = np.asarray(poses, dtype=np.float32)
            if track.shape != (n, 3):
                raise ValueError(
                    f"Provided pose track must be [{n}, 3], got {track.shape}"
                )
            return track
        case PoseModeKind.fixed:
            return np.tile(np.asarray(mode.fixed, dtype=np.float32), (n, 1))
        case PoseModeKind.predicted:
            model = models.stage_two.model
            if not model.uses_pose:
                return np.zeros((n, 3), dtype=np.float32)
            device = next(model.parameters()).device
            with torch.no_grad():
                predicted = model.predict_pose(to_tensor(speech, device=device))
            return predicted.cpu().numpy()


def _reference_frame(
    models: TrainedModels,
    reference_image: NDArray[np.float32],
    reference_landmarks: NDArray[np.float32],
) -> NDArray[np.float32]:
    """The reference image in the diffused data space, normalised."""
    stage_two = models.stage_two
    if models.config.ablation.ablation == Ablation.landmark_pred:
        return stage_two.normalizer.normalize(reference_landmarks)
    device = next(models.vae.parameters()).device
    raster = rasterize_landmarks(reference_landmarks, models.config.shape)
    with torch.no_grad():
        latent = models.vae.motion_latents(
            to_tensor(reference_image[None], device=device),
            to_tensor(raster[None], device=device),
        )
    return stage_two.normalizer.normalize(latent[0].cpu().numpy())


def run_generation_pipeline(
    reference_image: ArrayLike,
    landmarks_of_reference: ArrayLike,
    speech_features: ArrayLike,
    models: TrainedModels,
    poses: ArrayLike | None = None,
    constraint: ConstraintMask | None = None,
    fps: float | None = None,
) -> GeneratedVideo:
    """Generate a talking video of the reference portrait driven by speech.

    The reference image is encoded once. Its motion latent (or its landmarks)
    serves as the reference frame, the pose track follows the configured pose
    mode and the sampled sequence is decoded with the reference appearance.

    Args:
        reference_image: ``[H, W, 3]`` portrait in [0, 1].
        landmarks_of_reference: ``[K, 2]`` landmarks of the portrait.
        speech_features: ``[N, d_s]`` driving speech.
        models: Trained models and the run configuration.
        poses: ``[N, 3]`` pose track for pose mode ``provided``.
        constraint: Fixed landmarks for landmark-space generation.
        fps: Frame rate of the output; the corpus rate by default.

    Returns:
        A video with exactly N frames.

    Raises:
        ValueError: On malformed inputs, a provided pose track of the wrong
            length, or a constraint on a model that does not generate landmarks.
    """
    config = models.config
    image = np.asarray(reference_image, dtype=np.float32)
    reference_landmarks = np.asarray(landmarks_of_reference, dtype=np.float32)
    speech = np.asarray(speech_features, dtype=np.float32)
    _check_speech(speech, config)
    landmark_mode = config.ablation.ablation == Ablation.landmark_pred
    if constraint is not None and not landmark_mode:
        raise ValueError("Fixed landmarks need a landmark prediction model")

    track = resolve_poses(models, speech, poses)
    model = models.stage_two.model
    device = next(model.parameters()).device
    with torch.no_grad():
        cond = model.condition(
            to_tensor(speech[None], device=device),
            to_tensor(track[None], device=device),
            to_tensor(
                _reference_frame(models, image, reference_landmarks)[None],
                device=device,
            ),
        )
    if constraint is not None:
        sampled = constrained_sample(
            model,
            cond,
            constraint,
            config.schedule,
            config.sampler.steps,
            config.sampler.seed,
            config.sampler.kind,
        )
    else:
        sampled = model.generate(cond, config.schedule, config.sampler)
    data = models.stage_two.normalizer.denormalize(sampled[0])

    if landmark_mode:
        landmarks = clip_to_frame(data, config.shape).cpu().numpy()
        frames = reenact(models.vae, image, landmarks)
    else:
        frames = render_sequence(models.vae, image, data)
        readout = models.stage_two.readout
        if readout is None:
            raise StageOrderError("The diffusion checkpoint lacks its latent read-out")
        landmarks = readout.predict(data.cpu().numpy()).astype(np.float32)

    logger.info(
        f"Generated {speech.shape[0]} frames with pose mode {config.pose_mode.kind}"
    )
    return GeneratedVideo(
        frames=frames.cpu().numpy(),
        landmarks=landmarks,
        poses=track,
        speech_features=speech,
        fps=fps or config.corpus.fps,
    )


@dataclass
class TwoStageResult:
    """Outcome of :func:`run_two_stage_training`."""

    vae: VaeTrainingResult
    diffusion: DiffusionTrainingResult
    vae_checksum: str | None


def run_two_stage_training(
    corpus_dir: Path | str,
    run_dir: RunDirectory,
    config: RunConfig | None = None,
    vae_corpus_dir: Path | str | None = None,
) -> TwoStageResult:
    """Train the autoencoder, then the speech-to-motion model on frozen latents.

    Args:
        corpus_dir: Filtered corpus for stage two.
        run_dir: Receives checkpoints, loss logs and the latent cache.
        config: Run configuration; the run directory's by default.
        vae_corpus_dir: Corpus for stage one, typically filtered with the looser
            VAE policy. ``corpus_dir`` by default.

    Raises:
        NonFiniteLossError: If a loss becomes non-finite. The last checkpoint
            written before it is kept.
        RuntimeError: If stage two changed the stage-one checkpoint.
    """
    config = config or run_dir.load_config()
    _, clips = read_corpus(corpus_dir)
    vae_clips = clips if vae_corpus_dir is None else read_corpus(vae_corpus_dir)[1]

    logger.info(f"Stage one on {len(vae_clips)} clips")
    vae_result = train_vae(vae_clips, config, run_dir)
    vae = vae_result.nets.vae
    vae.eval()
    vae.requires_grad_(False)
    checksum = run_dir.checkpoints.checksum(TrainingStage.vae)

    logger.info(f"Stage two on {len(clips)} clips")
    diffusion_result = train_diffusion(clips, config, run_dir, vae)
    if run_dir.checkpoints.checksum(TrainingStage.vae) != checksum:
        raise RuntimeError("Stage two modified the stage-one checkpoint")
    return TwoStageResult(vae_result, diffusion_result, checksum)


def generate_for_clips(
    models: TrainedModels, clips: Sequence[VideoClip], seed: int | None = None
) -> list[GeneratedVideo]:
    """Generate one video per clip, using its first frame as the reference image.

    Pose mode ``provided`` uses each clip's own pose track.
    """
    if seed is not None:
        sampler = models.config.sampler.model_copy(update={"seed": seed})
        config = models.config.model_copy(update={"sampler": sampler})
        models = TrainedModels(config, models.vae, models.stage_two)
    return [
        run_generation_pipeline(
            clip.frames[0],
            clip.landmarks[0],
            clip.speech_features,
            models,
            poses=clip.poses,
            fps=clip.fps,
        )
        for clip in clips
    ]


def _variant_run(out_dir: Path, name: str, config: RunConfig) -> RunDirectory:
    path = out_dir / name
    if path_exists(path / "config.json"):
        return RunDirectory(path)
    return init_run_directory(path, config)


def run_ablations(
    corpus_dir: Path | str,
    eval_clips: Sequence[VideoClip],
    base_config: RunConfig,
    out_dir: Path | str,
    variants: Mapping[str, AblationSettings] | None = None,
    seeds: Sequence[int] = (0, 1, 2),
) -> pd.DataFrame:
    """Train and evaluate every ablation variant on the same corpus.

    Each variant gets its own run directory under ``out_dir``, a metric report in
    ``reports/metrics.json`` (for the first seed) and a row in
    ``out_dir/ablation.csv``. The lip-sync spread is the standard deviation of the
    lip-sync proxy across sampler seeds.

    Raises:
        ValueError: If there are no evaluation clips or no seeds.
    """
    if not eval_clips or not seeds:
        raise ValueError("Ablations need evaluation clips and at least one seed")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, settings in (variants or ABLATION_VARIANTS).items():
        config = base_config.model_copy(update={"ablation": settings})
        run_dir = _variant_run(out_dir, name, config)
        with run_dir.lock:
            run_two_stage_training(corpus_dir, run_dir, config)
            models = TrainedModels.load(run_dir)
            reports: list[MetricReport] = []
            for seed in seeds:
                videos = generate_for_clips(models, eval_clips, seed)
                reports.append(
                    run_evaluation([v.to_clip() for v in videos], eval_clips)
                )
            run_dir.write_json_model("reports/metrics.json", reports[0])
        lipsync = [r.lipsync_corr for r in reports]
        rows.append(
            {
                "variant": name,
                "psnr_db": reports[0].psnr_db,
                "akd_px": reports[0].akd_px,
                "msi": reports[0].msi,
                "frechet": reports[0].frechet,
                "lipsync_corr": float(np.mean(lipsync)),
                "lipsync_std": float(np.std(lipsync)),
            }
        )
        logger.info(f"Ablation '{name}' done")
    table = pd.DataFrame(rows).set_index("variant")
    table.to_csv(out_dir / ABLATION_TABLE)
    return table
