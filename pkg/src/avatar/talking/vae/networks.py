"""Encoders, decoder and discriminator of the frame autoencoders.

Public methods take and return channel-last tensors, ``[B, H, W, 3]`` for images
and ``[B, h, w, 3]`` for latents; a missing batch dimension is added and removed
again. The convolutional modules work channel-first internally.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Self

import torch
import torch.nn.functional as F
from torch import nn

from avatar.talking.models.shape import APPEARANCE_DOWNSAMPLE, MOTION_DOWNSAMPLE

if TYPE_CHECKING:
    from avatar.talking.models.shape import ScalePreset, ShapeConfig

HEAD_INIT_STD: Final = 0.02
MAX_CHANNEL_MULT: Final = 4


def _groups(channels: int) -> int:
    return math.gcd(channels, 8)


def _level_channels(hidden: int, level: int) -> int:
    return hidden * min(2**level, MAX_CHANNEL_MULT)


def _n_levels(factor: int) -> int:
    return int(math.log2(factor))


@dataclass(frozen=True)
class GaussianLatent:
    """Diagonal Gaussian over a channel-last latent grid."""

    mean: torch.Tensor
    logvar: torch.Tensor

    def sample(self: Self, generator: torch.Generator | None = None) -> torch.Tensor:
        """Reparameterised draw, differentiable in ``mean`` and ``logvar``."""
        eps = torch.randn(
            self.mean.shape,
            generator=generator,
            device=self.mean.device,
            dtype=self.mean.dtype,
        )
        return self.mean + torch.exp(0.5 * self.logvar) * eps

    def squeeze(self: Self) -> Self:
        """Drop a leading batch dimension of size one."""
        return type(self)(self.mean.squeeze(0), self.logvar.squeeze(0))


class AppearanceLatent(GaussianLatent):
    """Appearance latent ``z_a`` of shape ``[..., h_a, w_a, 3]``."""


class MotionLatent(GaussianLatent):
    """Motion latent ``z_m`` of shape ``[..., h_m, w_m, 3]``."""


class ResBlock(nn.Module):
    """Pre-activation residual block with GroupNorm and SiLU."""

    def __init__(self: Self, in_channels: int, out_channels: int) -> None:
        """Initialize the block."""
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(in_channels), in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(_groups(out_channels), out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = (
            nn.Identity()
            if in_channels == out_channels
            else nn.Conv2d(in_channels, out_channels, 1)
        )

    def forward(self: Self, x: torch.Tensor) -> torch.Tensor:  # noqa: D102
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class Encoder(nn.Module):
    """Residual encoder that halves the resolution ``n_down`` times.

    Outputs mean and log-variance grids with ``latent_channels`` channels each.
    """

    def __init__(
        self: Self,
        hidden: int,
        layers: int,
        n_down: int,
        latent_channels: int = 3,
        in_channels: int = 3,
    ) -> None:
        """Initialize an encoder with ``n_down`` downsampling levels."""
        super().__init__()
        self.conv_in = nn.Conv2d(in_channels, hidden, 3, padding=1)
        blocks: list[nn.Module] = []
        channels = hidden
        for level in range(n_down):
            out = _level_channels(hidden, level + 1)
            for _ in range(layers):
                blocks.append(ResBlock(channels, out))
                channels = out
            blocks.append(nn.Conv2d(channels, channels, 3, stride=2, padding=1))
        blocks.append(ResBlock(channels, channels))
        self.blocks = nn.Sequential(*blocks)
        self.norm_out = nn.GroupNorm(_groups(channels), channels)
        self.fc_mean = nn.Conv2d(channels, latent_channels, 1)
        self.fc_logvar = nn.Conv2d(channels, latent_channels, 1)
        for head in (self.fc_mean, self.fc_logvar):
            nn.init.normal_(head.weight, std=HEAD_INIT_STD)
            nn.init.zeros_(head.bias)

    def forward(self: Self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Encode ``[B, C, H, W]`` images in [0, 1] to ``(mean, logvar)``."""
        h = F.silu(self.norm_out(self.blocks(self.conv_in(2.0 * x - 1.0))))
        return self.fc_mean(h), self.fc_logvar(h)


class Decoder(nn.Module):
    """Projects a latent grid and doubles its resolution ``n_up`` times."""

    def __init__(
        self: Self, hidden: int, layers: int, n_up: int, in_channels: int = 3
    ) -> None:
        """Initialize a decoder with ``n_up`` upsampling levels."""
        super().__init__()
        channels = _level_channels(hidden, n_up)
        self.project = nn.Conv2d(in_channels, channels, 1)
        blocks: list[nn.Module] = [ResBlock(channels, channels)]
        for level in reversed(range(n_up)):
            out = _level_channels(hidden, level)
            blocks += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(channels, out, 3, padding=1),
            ]
            channels = out
            blocks += [ResBlock(channels, channels) for _ in range(layers)]
        self.blocks = nn.Sequential(*blocks)
        self.norm_out = nn.GroupNorm(_groups(channels), channels)
        self.conv_out = nn.Conv2d(channels, 3, 3, padding=1)

    def forward(self: Self, z: torch.Tensor) -> torch.Tensor:
        """Decode ``[B, C, h, w]`` to ``[B, 3, H, W]`` images in [0, 1]."""
        h = self.blocks(self.project(z))
        return torch.sigmoid(self.conv_out(F.silu(self.norm_out(h))))


class Discriminator(nn.Module):
    """Three strided convolutions followed by a spatial mean and a sigmoid."""

    def __init__(self: Self, hidden: int) -> None:
        """Initialize the discriminator."""
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, hidden, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(hidden, 2 * hidden, 4, stride=2, padding=1),
            nn.GroupNorm(_groups(2 * hidden), 2 * hidden),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * hidden, 1, 4, stride=2, padding=1),
        )

    def forward(self: Self, frames: torch.Tensor) -> torch.Tensor:
        """Probability that each channel-last frame ``[B, H, W, 3]`` is real."""
        logits = self.net(_to_channels_first(_batched(frames)))
        return torch.sigmoid(logits.mean(dim=(1, 2, 3)))


def _batched(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.ndim == 3 else x


def _to_channels_first(x: torch.Tensor) -> torch.Tensor:
    return x.permute(0, 3, 1, 2)


def _to_channels_last(x: torch.Tensor) -> torch.Tensor:
    return x.permute(0, 2, 3, 1)


def _check_trailing(x: torch.Tensor, shape: tuple[int, int, int], what: str) -> None:
    if x.ndim not in (3, 4) or tuple(x.shape[-3:]) != shape:
        raise ValueError(
            f"{what} must have trailing shape {shape}, got {tuple(x.shape)}"
        )


class FrameAutoencoder(nn.Module, ABC):
    """Common surface of the frame autoencoders used by the two-stage pipeline.

    ``motion_latents`` gives the sequence the diffusion prior is trained on, and
    ``render`` turns such a sequence back into frames given a reference frame.
    """

    cfg: ShapeConfig

    @property
    def image_shape(self: Self) -> tuple[int, int, int]:
        """Channel-last frame shape ``(H, W, 3)``."""
        return (self.cfg.H, self.cfg.W, 3)

    @property
    def motion_shape(self: Self) -> tuple[int, int, int]:
        """Shape of one latent of the diffused sequence."""
        return self.cfg.motion_latent_shape

    @abstractmethod
    def reconstruct(
        self: Self,
        appearance_frames: torch.Tensor,
        target_frames: torch.Tensor,
        target_landmark_images: torch.Tensor,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, list[GaussianLatent]]:
        """Reconstruct the target frames; also return every posterior used."""

    @abstractmethod
    def motion_latents(
        self: Self, frames: torch.Tensor, landmark_images: torch.Tensor
    ) -> torch.Tensor:
        """Posterior means of the sequence latents, ``[N, h_m, w_m, 3]``."""

    @abstractmethod
    def render(
        self: Self, reference_frame: torch.Tensor, latents: torch.Tensor
    ) -> torch.Tensor:
        """Decode ``[N, h_m, w_m, 3]`` latents into ``[N, H, W, 3]`` frames."""


class MotionAppearanceVAE(FrameAutoencoder):
    """Disentangling autoencoder with separate appearance and motion encoders.

    The appearance encoder sees raw frames and downsamples by 8. The motion encoder
    sees only landmark images and downsamples by 16. The decoder upsamples the
    motion latent to the appearance grid, concatenates both and decodes.
    """

    def __init__(self: Self, cfg: ShapeConfig, preset: ScalePreset) -> None:
        """Initialize both encoders and the decoder for frames of ``cfg``."""
        super().__init__()
        self.cfg = cfg
        c = cfg.latent_channels
        self.appearance_encoder = Encoder(
            preset.vae_hidden, preset.vae_layers, _n_levels(APPEARANCE_DOWNSAMPLE), c
        )
        self.motion_encoder = Encoder(
            preset.vae_hidden, preset.vae_layers, _n_levels(MOTION_DOWNSAMPLE), c
        )
        self.decoder = Decoder(
            preset.vae_hidden,
            preset.vae_layers,
            _n_levels(APPEARANCE_DOWNSAMPLE),
            in_channels=2 * c,
        )

    def encode_appearance(self: Self, frames: torch.Tensor) -> AppearanceLatent:
        """Encode ``[B, H, W, 3]`` (or ``[H, W, 3]``) frames."""
        _check_trailing(frames, self.image_shape, "Appearance frames")
        mean, logvar = self.appearance_encoder(
            _to_channels_first(_batched(frames))
        )
        latent = AppearanceLatent(_to_channels_last(mean), _to_channels_last(logvar))
        return latent.squeeze() if frames.ndim == 3 else latent

    def encode_motion(self: Self, landmark_images: torch.Tensor) -> MotionLatent:
        """Encode ``[B, H, W, 3]`` (or ``[H, W, 3]``) landmark images."""
        _check_trailing(landmark_images, self.image_shape, "Landmark images")
        mean, logvar = self.motion_encoder(
            _to_channels_first(_batched(landmark_images))
        )
        latent = MotionLatent(_to_channels_last(mean), _to_channels_last(logvar))
        return latent.squeeze() if landmark_images.ndim == 3 else latent

    def decode(
        self: Self,
        z_a: torch.Tensor | AppearanceLatent,
        z_m: torch.Tensor | MotionLatent,
    ) -> torch.Tensor:
        """Decode appearance and motion latents into frames in [0, 1].

        Gaussian latents are decoded at their mean.
        """
        a = z_a.mean if isinstance(z_a, GaussianLatent) else z_a
        m = z_m.mean if isinstance(z_m, GaussianLatent) else z_m
        _check_trailing(a, self.cfg.appearance_latent_shape, "Appearance latent")
        _check_trailing(m, self.cfg.motion_latent_shape, "Motion latent")
        unbatched = a.ndim == 3 and m.ndim == 3
        a, m = _batched(a), _batched(m)
        if a.shape[0] != m.shape[0]:
            a = a.expand(m.shape[0], -1, -1, -1)
        m_up = F.interpolate(_to_channels_first(m), scale_factor=2, mode="nearest")
        frames = _to_channels_last(
            self.decoder(torch.cat([_to_channels_first(a), m_up], dim=1))
        )
        return frames.squeeze(0) if unbatched else frames

    def reconstruct(  # noqa: D102
        self: Self,
        appearance_frames: torch.Tensor,
        target_frames: torch.Tensor,
        target_landmark_images: torch.Tensor,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, list[GaussianLatent]]:
        q_a = self.encode_appearance(appearance_frames)
        q_m = self.encode_motion(target_landmark_images)
        if self.training:
            x_hat = self.decode(q_a.sample(generator), q_m.sample(generator))
        else:
            x_hat = self.decode(q_a.mean, q_m.mean)
        return x_hat, [q_a, q_m]

    def motion_latents(  # noqa: D102
        self: Self, frames: torch.Tensor, landmark_images: torch.Tensor
    ) -> torch.Tensor:
        return self.encode_motion(landmark_images).mean

    def render(  # noqa: D102
        self: Self, reference_frame: torch.Tensor, latents: torch.Tensor
    ) -> torch.Tensor:
        z_a = self.encode_appearance(reference_frame).mean
        return self.decode(z_a, latents)


class SingleEncoderVAE(FrameAutoencoder):
    """Plain autoencoder that encodes whole frames to the motion-sized grid.

    Appearance and motion share one latent, so a rendered sequence ignores the
    reference frame.
    """

    def __init__(self: Self, cfg: ShapeConfig, preset: ScalePreset) -> None:
        """Initialize the encoder and decoder for frames of ``cfg``."""
        super().__init__()
        self.cfg = cfg
        n = _n_levels(MOTION_DOWNSAMPLE)
        self.encoder = Encoder(
            preset.vae_hidden, preset.vae_layers, n, cfg.latent_channels
        )
        self.decoder = Decoder(
            preset.vae_hidden, preset.vae_layers, n, cfg.latent_channels
        )

    def encode(self: Self, frames: torch.Tensor) -> MotionLatent:
        """Encode ``[B, H, W, 3]`` frames to the shared latent."""
        _check_trailing(frames, self.image_shape, "Frames")
        mean, logvar = self.encoder(_to_channels_first(_batched(frames)))
        latent = MotionLatent(_to_channels_last(mean), _to_channels_last(logvar))
        return latent.squeeze() if frames.ndim == 3 else latent

    def decode(self: Self, z: torch.Tensor | MotionLatent) -> torch.Tensor:
        """Decode latents into frames in [0, 1]."""
        m = z.mean if isinstance(z, GaussianLatent) else z
        _check_trailing(m, self.cfg.motion_latent_shape, "Latent")
        frames = _to_channels_last(self.decoder(_to_channels_first(_batched(m))))
        return frames.squeeze(0) if m.ndim == 3 else frames

    def reconstruct(  # noqa: D102
        self: Self,
        appearance_frames: torch.Tensor,
        target_frames: torch.Tensor,
        target_landmark_images: torch.Tensor,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, list[GaussianLatent]]:
        q = self.encode(target_frames)
        z = q.sample(generator) if self.training else q.mean
        return self.decode(z), [q]

    def motion_latents(  # noqa: D102
        self: Self, frames: torch.Tensor, landmark_images: torch.Tensor
    ) -> torch.Tensor:
        return self.encode(frames).mean

    def render(  # noqa: D102
        self: Self, reference_frame: torch.Tensor, latents: torch.Tensor
    ) -> torch.Tensor:
        return self.decode(latents)
