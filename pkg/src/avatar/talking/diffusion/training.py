"""Stage two: joint training of the speech encoder, pose predictor and generator.

Motion latents are computed once with the frozen stage-one autoencoder and cached
in the run directory next to the checksum of the checkpoint they came from.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Final, Self

import numpy as np
import torch

from avatar.talking._logging import null_logger
from avatar.talking._training import (
    LossLogBuffer,
    StageOrderError,
    ensure_finite,
    module_summary,
    trainable_parameters,
)
from avatar.talking._utils import torch_generator
from avatar.talking.container import LITTLE_ENDIAN_F32, read_float32
from avatar.talking.diffusion.data import (
    DataNormalizer,
    SequenceData,
    sample_sequence_batch,
)
from avatar.talking.diffusion.losses import DiffusionLossBreakdown, stage_two_loss
from avatar.talking.diffusion.model import SpeechToMotion, build_speech_to_motion
from avatar.talking.models._enums import Ablation, TrainingStage
from avatar.talking.models.loss_log import LossRecord
from avatar.talking.models.manifest import ArrayEntry, LatentCacheIndex
from avatar.talking.vae.readout import LATENT_READOUT, RidgeReadout
from avatar.talking.vae.reenact import encode_motion_sequence
from avatar.talking.vae.training import load_vae

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from avatar.talking._run_dir import RunDirectory
    from avatar.talking.clip import VideoClip
    from avatar.talking.diffusion.data import SequenceBatch
    from avatar.talking.diffusion.schedule import NoiseSchedule
    from avatar.talking.models.run_config import (
        DiffusionTrainingSettings,
        RunConfig,
    )
    from avatar.talking.vae.networks import FrameAutoencoder

logger: Final = null_logger(__name__)

MODEL_NAME: Final = "speech_to_motion"
LATENT_DIR: Final = Path("latents")
LATENT_INDEX: Final = LATENT_DIR / "index.json"
DEBUG_INTERVAL: Final = 50


def warmup_inverse_sqrt(warmup_steps: int) -> Callable[[int], float]:
    """Learning-rate factor: linear warm-up, then decay with ``1/sqrt(step)``.

    The factor peaks at 1 after ``warmup_steps`` optimiser steps. Without warm-up
    it is ``1/sqrt(step)`` from the first step.
    """

    def factor(step: int) -> float:
        s = step + 1
        if warmup_steps == 0:
            return 1.0 / math.sqrt(s)
        return min(s / warmup_steps, math.sqrt(warmup_steps / s))

    return factor


def build_optimizer(
    model: SpeechToMotion, settings: DiffusionTrainingSettings
) -> tuple[torch.optim.Optimizer, torch.optim.lr_scheduler.LambdaLR]:
    """Adam over every stage-two parameter with the warm-up schedule."""
    optimizer = torch.optim.Adam(
        trainable_parameters(model), lr=settings.learning_rate
    )
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, warmup_inverse_sqrt(settings.warmup_steps)
    )
    return optimizer, scheduler


@dataclass
class StageTwoModel:
    """A stage-two model with what is needed to map its output back to pixels.

    Attributes:
        model: Speech encoder, pose predictor and sequence generator.
        normalizer: Maps raw data frames to the model's normalised space.
        readout: Motion latent to landmark map; None when landmarks are diffused.
    """

    model: SpeechToMotion
    normalizer: DataNormalizer
    readout: RidgeReadout | None = None

    def extras(self: Self) -> dict[str, NDArray]:
        """Arrays stored next to the model parameters in a checkpoint."""
        arrays = self.normalizer.to_arrays()
        if self.readout is not None:
            arrays |= self.readout.to_arrays(LATENT_READOUT)
        return arrays


@dataclass
class DiffusionTrainingResult:
    """The trained stage-two model and the loss history of every step."""

    trained: StageTwoModel
    history: list[DiffusionLossBreakdown] = field(default_factory=list)

    @property
    def steps(self: Self) -> int:
        """Number of completed steps."""
        return len(self.history)


def clip_name(index: int, clip: VideoClip) -> str:
    """Cache key of the ``index``-th training clip."""
    return f"{index:04d}_{clip.identity_id or 'clip'}"


def encode_corpus(
    vae: FrameAutoencoder, clips: Sequence[VideoClip]
) -> list[NDArray[np.float32]]:
    """Motion latents ``[N, h_m, w_m, 3]`` of every clip."""
    return [
        encode_motion_sequence(vae, clip.frames, clip.landmarks).cpu().numpy()
        for clip in clips
    ]


def _read_cache(
    run_dir: RunDirectory, clips: Sequence[VideoClip], checksum: str
) -> list[NDArray[np.float32]] | None:
    if not run_dir.file_exists(LATENT_INDEX):
        return None
    try:
        index = run_dir.read_json_model(LATENT_INDEX, LatentCacheIndex)
    except ValueError as e:
        logger.warning(f"Ignoring unreadable latent cache index: {e}")
        return None
    if index.vae_checksum != checksum:
        logger.info("Latent cache belongs to another VAE checkpoint; re-encoding")
        return None
    names = [clip_name(i, clip) for i, clip in enumerate(clips)]
    if any(
        name not in index.entries or index.entries[name].shape[0] != clip.n_frames
        for name, clip in zip(names, clips, strict=True)
    ):
        return None
    directory = run_dir.get_file_path(LATENT_DIR)
    return [read_float32(index.entries[name], directory) for name in names]


def _write_cache(
    run_dir: RunDirectory,
    clips: Sequence[VideoClip],
    latents: Sequence[NDArray[np.float32]],
    checksum: str,
) -> None:
    entries = {}
    for i, (clip, array) in enumerate(zip(clips, latents, strict=True)):
        name = clip_name(i, clip)
        file = f"{name}.f32"
        data = np.ascontiguousarray(array, dtype=LITTLE_ENDIAN_F32)
        run_dir.write_file(LATENT_DIR / file, data.tobytes())
        entries[name] = ArrayEntry(file=file, shape=list(array.shape))
    run_dir.write_json_model(
        LATENT_INDEX, LatentCacheIndex(vae_checksum=checksum, entries=entries)
    )
    logger.info(f"Cached motion latents of {len(entries)} clips in {run_dir.path}")


def cached_motion_latents(
    vae: FrameAutoencoder,
    clips: Sequence[VideoClip],
    run_dir: RunDirectory | None = None,
) -> list[NDArray[np.float32]]:
    """Motion latents of ``clips``, read from or written to the run's cache.

    The cache is used only when the run has a stage-one checkpoint whose checksum
    matches the one the cache was written with.
    """
    checksum = (
        run_dir.checkpoints.checksum(TrainingStage.vae) if run_dir is not None else None
    )
    if run_dir is not None and checksum is not None:
        cached = _read_cache(run_dir, clips, checksum)
        if cached is not None:
            logger.debug(f"Read {len(cached)} cached latent sequences")
            return cached
    latents = encode_corpus(vae, clips)
    if run_dir is not None and checksum is not None:
        _write_cache(run_dir, clips, latents, checksum)
    return latents


def prepare_sequences(
    clips: Sequence[VideoClip],
    config: RunConfig,
    vae: FrameAutoencoder | None = None,
    run_dir: RunDirectory | None = None,
) -> tuple[list[SequenceData], DataNormalizer, RidgeReadout | None]:
    """Map clips into the diffused data space.

    Landmark prediction diffuses landmark coordinates normalised by the frame
    half-extent. Every other variant diffuses standardised motion latents and
    fits a ridge read-out from raw latents to landmarks.

    Raises:
        StageOrderError: If motion latents are needed but there is no autoencoder.
        ValueError: If there are no clips.
    """
    if not clips:
        raise ValueError("Cannot train stage two on an empty corpus")
    readout = None
    if config.ablation.ablation == Ablation.landmark_pred:
        normalizer = DataNormalizer.for_landmarks(config.shape)
        raw = [clip.landmarks for clip in clips]
    else:
        if vae is None:
            raise StageOrderError("Stage two needs a trained VAE for motion latents")
        raw = cached_motion_latents(vae, clips, run_dir)
        stacked = np.concatenate(raw)
        normalizer = DataNormalizer.fit(stacked)
        readout = RidgeReadout.fit(
            stacked,
            np.concatenate([clip.landmarks for clip in clips]),
            config.diffusion_training.readout_ridge,
        )
    sequences = [
        SequenceData(normalizer.normalize(data), clip.speech_features, clip.poses)
        for data, clip in zip(raw, clips, strict=True)
    ]
    return sequences, normalizer, readout


def train_diffusion_step(
    batch: SequenceBatch,
    model: SpeechToMotion,
    optimizer: torch.optim.Optimizer,
    scheduler: torch.optim.lr_scheduler.LRScheduler,
    schedule: NoiseSchedule,
    step: int = 0,
    generator: torch.Generator | None = None,
) -> DiffusionLossBreakdown:
    """One joint update of the denoiser, speech encoder and pose predictor.

    Raises:
        NonFiniteLossError: If a loss is NaN or infinite. No update is applied.
    """
    model.train()
    terms = stage_two_loss(batch, model, schedule, generator)
    losses = terms.breakdown()
    ensure_finite(step, losses.model_dump())
    optimizer.zero_grad(set_to_none=True)
    terms.total.backward()
    optimizer.step()
    scheduler.step()
    return losses


def save_diffusion_checkpoint(
    run_dir: RunDirectory, trained: StageTwoModel, config: RunConfig, step: int
) -> None:
    """Write a stage-two checkpoint with the normaliser and read-out."""
    run_dir.checkpoints.max_revisions = config.diffusion_training.keep_checkpoints
    run_dir.checkpoints.save(
        TrainingStage.diffusion,
        step,
        {MODEL_NAME: trained.model},
        config=config.model_dump(mode="json"),
        extras=trained.extras(),
    )


def load_stage_two(run_dir: RunDirectory, config: RunConfig) -> StageTwoModel:
    """The newest stage-two model of a run, in evaluation mode.

    Raises:
        StageOrderError: If the run has no stage-two checkpoint.
    """
    if not run_dir.checkpoints.has_checkpoint(TrainingStage.diffusion):
        raise StageOrderError(
            f"No diffusion checkpoint in {run_dir.path}; run train-diffusion first"
        )
    model = build_speech_to_motion(config)
    run_dir.checkpoints.load_into(TrainingStage.diffusion, {MODEL_NAME: model})
    model.eval()
    model.requires_grad_(False)
    extras = run_dir.checkpoints.load_extras(TrainingStage.diffusion)
    readout = (
        RidgeReadout.from_arrays(extras, LATENT_READOUT)
        if f"{LATENT_READOUT}.weights" in extras
        else None
    )
    return StageTwoModel(model, DataNormalizer.from_arrays(extras), readout)


def train_diffusion(
    clips: Sequence[VideoClip],
    config: RunConfig,
    run_dir: RunDirectory | None = None,
    vae: FrameAutoencoder | None = None,
) -> DiffusionTrainingResult:
    """Train stage two on filtered clips.

    Args:
        clips: Training clips.
        config: Shapes, scale, schedule, ablation and
            :class:`DiffusionTrainingSettings`.
        run_dir: When given, the autoencoder is loaded from it if ``vae`` is None,
            latents are cached in it, losses are logged to
            ``logs/diffusion_loss.csv`` and checkpoints are written every
            ``checkpoint_interval`` steps and at the end.
        vae: A trained, frozen autoencoder. Not needed for landmark prediction.

    Returns:
        The trained model and loss history.

    Raises:
        StageOrderError: If motion latents are needed and no stage-one checkpoint
            or autoencoder is available.
        NonFiniteLossError: If a loss becomes non-finite. Checkpoints written
            before that step are kept.
    """
    settings = config.diffusion_training
    if (
        vae is None
        and run_dir is not None
        and config.ablation.ablation != Ablation.landmark_pred
    ):
        vae = load_vae(run_dir, config)
    sequences, normalizer, readout = prepare_sequences(clips, config, vae, run_dir)

    trained = StageTwoModel(build_speech_to_motion(config), normalizer, readout)
    model = trained.model
    optimizer, scheduler = build_optimizer(model, settings)
    rng = np.random.default_rng([config.seed, 2])
    generator = torch_generator(config.seed + 2, config.device)
    result = DiffusionTrainingResult(trained)

    logger.info(
        f"Training {type(model.generator).__name__} for {settings.steps} steps on "
        f"{len(sequences)} clips, parameters {module_summary({MODEL_NAME: model})}"
    )
    buffer = LossLogBuffer(
        run_dir.loss_log(TrainingStage.diffusion) if run_dir is not None else None
    )
    started = time.perf_counter()
    try:
        for step in range(1, settings.steps + 1):
            batch = sample_sequence_batch(sequences, settings, rng, config.device)
            learning_rate = scheduler.get_last_lr()[0]
            losses = train_diffusion_step(
                batch, model, optimizer, scheduler, config.schedule, step, generator
            )
            result.history.append(losses)
            buffer.add(
                LossRecord(
                    stage=TrainingStage.diffusion,
                    step=step,
                    losses=losses.model_dump(),
                    learning_rate=learning_rate,
                    wall_time_s=time.perf_counter() - started,
                )
            )
            if run_dir is not None and (
                step % settings.checkpoint_interval == 0 or step == settings.steps
            ):
                save_diffusion_checkpoint(run_dir, trained, config, step)
            if step % DEBUG_INTERVAL == 0:
                logger.debug(
                    f"Diffusion step {step}: l_data={losses.l_data:.4f}, "
                    f"l_pose={losses.l_pose:.4f}, lr={learning_rate:.2e}"
                )
    finally:
        buffer.flush()

    model.eval()
    if result.history:
        logger.info(
            f"Finished diffusion training after {result.steps} steps, "
            f"final l_data={result.history[-1].l_data:.4f}"
        )
    return result
