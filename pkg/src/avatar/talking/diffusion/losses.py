"""Data and pose losses of stage two."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, NamedTuple, Self

import torch
import torch.nn.functional as F
from pydantic import BaseModel

if TYPE_CHECKING:
    from avatar.talking.diffusion.data import SequenceBatch
    from avatar.talking.diffusion.model import SpeechToMotion
    from avatar.talking.diffusion.schedule import NoiseSchedule


class DiffusionLossBreakdown(BaseModel):
    """Loss values of one batch, as plain floats."""

    l_data: float
    l_pose: float
    total: float

    def is_finite(self: Self) -> bool:
        """Whether every value is finite."""
        return all(math.isfinite(v) for v in self.model_dump().values())


class DiffusionLossTerms(NamedTuple):
    """Differentiable loss terms of one batch."""

    l_data: torch.Tensor
    l_pose: torch.Tensor
    total: torch.Tensor

    def breakdown(self: Self) -> DiffusionLossBreakdown:
        """Detach every term into a :class:`DiffusionLossBreakdown`."""
        return DiffusionLossBreakdown(
            l_data=self.l_data.item(),
            l_pose=self.l_pose.item(),
            total=self.total.item(),
        )


def _broadcast_time(values: torch.Tensor, ndim: int) -> torch.Tensor:
    return values.reshape(-1, *([1] * (ndim - 1)))


def noised_batch(
    z0: torch.Tensor,
    times: torch.Tensor,
    noise: torch.Tensor,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """Closed-form marginal sample with one time per batch element."""
    mc = _broadcast_time(schedule.mean_coef(times), z0.ndim)
    sigma = _broadcast_time(schedule.sigma2(times).sqrt(), z0.ndim)
    return mc * z0 + sigma * noise


def pose_loss(model: SpeechToMotion, batch: SequenceBatch) -> torch.Tensor:
    """MSE of the predicted poses; zero for a model without a pose predictor."""
    if not model.uses_pose:
        return batch.poses.new_zeros(())
    return F.mse_loss(model.predict_pose(batch.speech), batch.poses)


def diffusion_loss(
    batch: SequenceBatch,
    model: SpeechToMotion,
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
    times: torch.Tensor | None = None,
    noise: torch.Tensor | None = None,
) -> DiffusionLossTerms:
    """Joint loss ``‖ẑ0 − z0‖² + ‖x̂_p − x_p‖²`` of one batch.

    Each batch element gets its own ``t ~ U(t_min, 1)``. The speech encoder sees the
    ground-truth poses. Gradients reach the denoiser, the speech encoder and the
    pose predictor.

    Args:
        batch: Clean windows, their speech, poses and reference frames.
        model: The stage-two model.
        schedule: Noise schedule.
        generator: Source of the times and the noise when they are not given.
        times: Optional ``[B]`` diffusion times.
        noise: Optional standard normal noise shaped like ``batch.data``.

    Returns:
        The data term, the pose term and their sum.
    """
    z0 = batch.data
    b = z0.shape[0]
    if times is None:
        u = torch.rand(b, generator=generator, device=z0.device, dtype=z0.dtype)
        times = schedule.t_min + (1.0 - schedule.t_min) * u
    if noise is None:
        noise = torch.randn(
            z0.shape, generator=generator, device=z0.device, dtype=z0.dtype
        )
    z_t = noised_batch(z0, times, noise, schedule)
    cond = model.condition(batch.speech, batch.poses, batch.reference)
    l_data = F.mse_loss(model.denoise(z_t, times, cond), z0)
    l_pose = pose_loss(model, batch)
    return DiffusionLossTerms(l_data, l_pose, l_data + l_pose)


def regression_loss(batch: SequenceBatch, model: SpeechToMotion) -> DiffusionLossTerms:
    """Single-pass loss of the regressor variant: MSE to ``z0`` plus the pose term."""
    cond = model.condition(batch.speech, batch.poses, batch.reference)
    l_data = F.mse_loss(model.denoise(batch.data, 0.0, cond), batch.data)
    l_pose = pose_loss(model, batch)
    return DiffusionLossTerms(l_data, l_pose, l_data + l_pose)


def stage_two_loss(
    batch: SequenceBatch,
    model: SpeechToMotion,
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
) -> DiffusionLossTerms:
    """:func:`diffusion_loss` or :func:`regression_loss`, whichever fits ``model``."""
    if model.diffusion:
        return diffusion_loss(batch, model, schedule, generator)
    return regression_loss(batch, model)
