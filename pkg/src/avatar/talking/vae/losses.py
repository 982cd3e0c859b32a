"""Reconstruction, KL and adversarial losses of the frame autoencoders."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, NamedTuple, Protocol, Self

import torch
import torch.nn.functional as F
from pydantic import BaseModel
from torch import nn

from avatar.talking._utils import torch_generator

if TYPE_CHECKING:
    from avatar.talking.models.run_config import VaeTrainingSettings
    from avatar.talking.models.shape import ShapeConfig
    from avatar.talking.vae.networks import FrameAutoencoder, GaussianLatent

PROB_EPS: Final = 1e-6
FEATURE_SEED: Final = 1234
FEATURE_CHANNELS: Final = (16, 32, 32)


class DiscriminatorFn(Protocol):
    """Maps channel-last frames to the probability that they are real."""

    def __call__(self, frames: torch.Tensor) -> torch.Tensor: ...  # noqa: D102


@dataclass(frozen=True)
class VaePairBatch:
    """Frames i and j of the same clips, with the landmark image of frame j.

    All tensors are channel-last ``[B, H, W, 3]`` in [0, 1].
    """

    appearance_frames: torch.Tensor
    target_frames: torch.Tensor
    target_landmark_images: torch.Tensor


@dataclass(frozen=True)
class VaeLossWeights:
    """Weights of the generator objective."""

    lambda_kl: float
    lambda_adv: float = 0.5
    perceptual_weight: float = 0.0

    @classmethod
    def from_settings(
        cls: type[Self],
        settings: VaeTrainingSettings,
        cfg: ShapeConfig,
        disentangled: bool = True,
    ) -> Self:
        """Weights for ``settings`` at the latent and pixel sizes of ``cfg``."""
        return cls(
            lambda_kl=kl_weight(cfg, settings.kl_scale, disentangled),
            lambda_adv=settings.lambda_adv,
            perceptual_weight=(
                settings.perceptual_weight if settings.perceptual_features else 0.0
            ),
        )


class VaeLossBreakdown(BaseModel):
    """Loss values of one batch, as plain floats."""

    l_rec: float
    l_kl: float
    l_gen_adv: float
    l_disc: float
    total: float
    """``l_rec + lambda_kl · l_kl + lambda_adv · l_gen_adv``."""

    def is_finite(self: Self) -> bool:
        """Whether every value is finite."""
        return all(math.isfinite(v) for v in self.model_dump().values())


class VaeLossTerms(NamedTuple):
    """Differentiable loss terms of one batch."""

    l_rec: torch.Tensor
    l_kl: torch.Tensor
    l_gen_adv: torch.Tensor
    l_disc: torch.Tensor
    generator_total: torch.Tensor

    def breakdown(self: Self) -> VaeLossBreakdown:
        """Detach every term into a :class:`VaeLossBreakdown`."""
        return VaeLossBreakdown(
            l_rec=self.l_rec.item(),
            l_kl=self.l_kl.item(),
            l_gen_adv=self.l_gen_adv.item(),
            l_disc=self.l_disc.item(),
            total=self.generator_total.item(),
        )


def kl_weight(cfg: ShapeConfig, kl_scale: float, disentangled: bool = True) -> float:
    """KL weight ``kl_scale · latent elements / pixel elements``."""
    h_m, w_m, c = cfg.motion_latent_shape
    latent = h_m * w_m * c
    if disentangled:
        h_a, w_a, _ = cfg.appearance_latent_shape
        latent += h_a * w_a * c
    return kl_scale * latent / (cfg.H * cfg.W * 3)


def kl_divergence(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Element-wise KL of ``N(mean, exp(logvar))`` from ``N(0, 1)``."""
    return 0.5 * (mean.square() + torch.exp(logvar) - 1.0 - logvar)


def latent_kl(latents: list[GaussianLatent]) -> torch.Tensor:
    """Mean element-wise KL over the elements of all ``latents``."""
    per_element = torch.cat(
        [kl_divergence(q.mean, q.logvar).reshape(-1) for q in latents]
    )
    return per_element.mean()


def generator_adversarial_loss(p_fake: torch.Tensor) -> torch.Tensor:
    """``-log D(x_hat)``, averaged over the batch."""
    return -torch.log(p_fake.clamp(PROB_EPS, 1.0 - PROB_EPS)).mean()


def discriminator_loss(p_real: torch.Tensor, p_fake: torch.Tensor) -> torch.Tensor:
    """``-[log D(x) + log(1 - D(x_hat))]``, averaged over the batch."""
    real = torch.log(p_real.clamp(PROB_EPS, 1.0 - PROB_EPS))
    fake = torch.log1p(-p_fake.clamp(PROB_EPS, 1.0 - PROB_EPS))
    return -(real + fake).mean()


class RandomConvFeatures(nn.Module):
    """A fixed, seeded stack of random convolutions used as a feature extractor.

    Weights are buffers, not parameters, so no optimiser ever updates them.
    """

    def __init__(self: Self, seed: int = FEATURE_SEED) -> None:
        """Initialize the frozen random filters from ``seed``."""
        super().__init__()
        generator = torch_generator(seed)
        in_channels = 3
        for i, out_channels in enumerate(FEATURE_CHANNELS):
            fan_in = in_channels * 9
            weight = torch.randn(
                (out_channels, in_channels, 3, 3), generator=generator
            ) / fan_in**0.5
            self.register_buffer(f"weight{i}", weight)
            in_channels = out_channels

    def forward(self: Self, frames: torch.Tensor) -> list[torch.Tensor]:
        """Feature maps of channel-last frames, one per scale."""
        h = frames.permute(0, 3, 1, 2)
        features = []
        for i in range(len(FEATURE_CHANNELS)):
            weight = getattr(self, f"weight{i}")
            h = F.leaky_relu(F.conv2d(h, weight, stride=1 if i == 0 else 2, padding=1))
            features.append(h)
        return features


def reconstruction_loss(
    x_hat: torch.Tensor,
    x: torch.Tensor,
    features: RandomConvFeatures | None = None,
    perceptual_weight: float = 0.0,
) -> torch.Tensor:
    """Pixel L1, plus an optional L1 over random-convolution features."""
    loss = (x_hat - x).abs().mean()
    if features is not None and perceptual_weight > 0:
        pairs = zip(features(x_hat), features(x), strict=True)
        loss = loss + perceptual_weight * sum(
            ((a - b).abs().mean() for a, b in pairs), x.new_zeros(())
        )
    return loss


def vae_loss_terms(
    batch: VaePairBatch,
    vae: FrameAutoencoder,
    discriminator: DiscriminatorFn,
    weights: VaeLossWeights,
    generator: torch.Generator | None = None,
    features: RandomConvFeatures | None = None,
    adversarial: bool = True,
) -> VaeLossTerms:
    """Differentiable loss terms for one batch.

    The discriminator term sees the reconstruction detached, so its gradient only
    reaches the discriminator. With ``adversarial=False`` both adversarial terms
    are zero.
    """
    x_hat, latents = vae.reconstruct(
        batch.appearance_frames,
        batch.target_frames,
        batch.target_landmark_images,
        generator,
    )
    l_rec = reconstruction_loss(
        x_hat, batch.target_frames, features, weights.perceptual_weight
    )
    l_kl = latent_kl(latents)
    if adversarial:
        l_gen_adv = generator_adversarial_loss(discriminator(x_hat))
        l_disc = discriminator_loss(
            discriminator(batch.target_frames), discriminator(x_hat.detach())
        )
    else:
        l_gen_adv = l_disc = torch.zeros((), device=x_hat.device)
    total = l_rec + weights.lambda_kl * l_kl + weights.lambda_adv * l_gen_adv
    return VaeLossTerms(l_rec, l_kl, l_gen_adv, l_disc, total)


def vae_losses(
    batch: VaePairBatch,
    vae: FrameAutoencoder,
    discriminator: DiscriminatorFn,
    weights: VaeLossWeights,
    generator: torch.Generator | None = None,
    features: RandomConvFeatures | None = None,
    adversarial: bool = True,
) -> VaeLossBreakdown:
    """Evaluate the losses of one batch without tracking gradients."""
    with torch.no_grad():
        return vae_loss_terms(
            batch, vae, discriminator, weights, generator, features, adversarial
        ).breakdown()
