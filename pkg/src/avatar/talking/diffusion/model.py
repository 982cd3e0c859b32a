"""The stage-two model: speech encoder, pose predictor and sequence generator."""

from __future__ import annotations

from typing import TYPE_CHECKING, Final, Self

import torch
from torch import nn

from avatar.talking._logging import null_logger
from avatar.talking.diffusion.networks import (
    ConditioningBundle,
    LandmarkDenoiser,
    MotionDenoiser,
    MotionRegressor,
    PosePredictor,
    SequenceDenoiser,
    SpeechEncoder,
)
from avatar.talking.diffusion.sampling import sample
from avatar.talking.models._enums import Ablation

if TYPE_CHECKING:
    from avatar.talking.diffusion.sampling import ProjectionFn
    from avatar.talking.diffusion.schedule import NoiseSchedule
    from avatar.talking.models.run_config import RunConfig, SamplerSettings

logger: Final = null_logger(__name__)

MODEL_SEED_OFFSET: Final = 2


class SpeechToMotion(nn.Module):
    """Maps speech, poses and a reference frame to a sequence of data frames.

    The generator is either a :class:`SequenceDenoiser` sampled through the
    reverse diffusion process, or a :class:`MotionRegressor` that predicts the
    sequence in one pass. Without a pose predictor the speech encoder never sees
    a pose track.
    """

    def __init__(
        self: Self,
        generator: SequenceDenoiser | MotionRegressor,
        speech_dim: int,
        uses_pose: bool = True,
    ) -> None:
        """Initializes the model around a generator network.

        Args:
            generator: Denoiser or single-pass regressor over data frames.
            speech_dim: Width d_s of the speech features.
            uses_pose: Whether to build the pose predictor and feed poses to the
                speech encoder.
        """
        super().__init__()
        backbone = (
            generator.backbone if isinstance(generator, MotionRegressor) else generator
        )
        hidden = backbone.input.out_features
        self.generator = generator
        self.speech_encoder = SpeechEncoder(speech_dim, hidden)
        self.pose_predictor = PosePredictor(speech_dim, hidden) if uses_pose else None

    @property
    def frame_shape(self: Self) -> tuple[int, ...]:
        """Shape of one generated data frame."""
        return self.generator.frame_shape

    @property
    def diffusion(self: Self) -> bool:
        """Whether sequences come from the reverse diffusion process."""
        return isinstance(self.generator, SequenceDenoiser)

    @property
    def uses_pose(self: Self) -> bool:
        """Whether poses condition the speech encoder."""
        return self.pose_predictor is not None

    def condition(
        self: Self,
        speech: torch.Tensor,
        poses: torch.Tensor | None,
        reference: torch.Tensor,
    ) -> ConditioningBundle:
        """Encode the conditioning of a batch.

        Args:
            speech: ``[B, N, d_s]`` speech features.
            poses: ``[B, N, 3]`` pose track; ignored without a pose predictor.
            reference: ``[B, *frame_shape]`` reference data frame.
        """
        hidden = self.speech_encoder(speech, poses if self.uses_pose else None)
        return ConditioningBundle(hidden, reference)

    def predict_pose(self: Self, speech: torch.Tensor) -> torch.Tensor:
        """``[B, N, 3]`` poses predicted from speech.

        Raises:
            RuntimeError: If the model was built without a pose predictor.
        """
        if self.pose_predictor is None:
            raise RuntimeError("This model was trained without head poses")
        return self.pose_predictor(speech)

    def denoise(
        self: Self,
        z_t: torch.Tensor,
        t: float | torch.Tensor,
        cond: ConditioningBundle,
    ) -> torch.Tensor:
        """Prediction of the clean sequence; the regressor ignores ``z_t`` and ``t``."""
        if isinstance(self.generator, MotionRegressor):
            return self.generator(cond)
        return self.generator(z_t, t, cond)

    def generate(
        self: Self,
        cond: ConditioningBundle,
        schedule: NoiseSchedule,
        sampler: SamplerSettings,
        projection: ProjectionFn | None = None,
    ) -> torch.Tensor:
        """Sample ``[B, N, *frame_shape]`` normalised data frames.

        The regressor variant returns its single-pass prediction and ignores the
        sampler and the projection.
        """
        with torch.no_grad():
            if isinstance(self.generator, MotionRegressor):
                return self.generator(cond)
            shape = (cond.batch_size, cond.length, *self.frame_shape)
            return sample(
                sampler.kind,
                lambda z, t: self.generator(z, t, cond),
                shape,
                schedule,
                sampler.steps,
                sampler.seed,
                projection,
                cond.speech_hidden.device,
            )


def build_speech_to_motion(config: RunConfig) -> SpeechToMotion:
    """Freshly initialised stage-two model for the ablation in ``config``.

    ``landmark_pred`` diffuses landmark coordinates, every other variant motion
    latents. ``no_diffusion`` swaps the denoiser for a regressor and ``no_pose``
    drops the pose predictor.
    """
    settings = config.ablation
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed + MODEL_SEED_OFFSET)
        denoiser: SequenceDenoiser
        if settings.ablation == Ablation.landmark_pred:
            denoiser = LandmarkDenoiser(
                config.shape.K,
                config.preset,
                settings.conditioning,
                settings.backbone,
            )
        else:
            denoiser = MotionDenoiser(
                config.shape.motion_latent_shape,
                config.preset,
                settings.conditioning,
                settings.backbone,
            )
        generator = (
            MotionRegressor(denoiser)
            if settings.ablation == Ablation.no_diffusion
            else denoiser
        )
        model = SpeechToMotion(generator, config.shape.d_s, settings.uses_pose)
    logger.debug(
        f"Built {type(generator).__name__} over frames {model.frame_shape} for "
        f"ablation '{settings.ablation}'"
    )
    return model.to(config.device)
