"""Speech encoder, pose predictor and the sequence denoisers of stage two.

Sequences are batch-first. A data frame is a motion latent ``[h_m, w_m, 3]`` (or a
normalised landmark set ``[K, 2]``) and a sequence is ``[B, N, *frame_shape]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Self

import torch
from torch import nn

from avatar.talking.diffusion.conformer import (
    ConformerBlock,
    TimeEmbedding,
    grid_positional_embedding,
    reference_attends,
    sinusoidal_embedding,
    speech_attends,
)
from avatar.talking.models._enums import Backbone, ConditioningVariant

if TYPE_CHECKING:
    from avatar.talking.models.shape import ScalePreset

POSE_DIM: Final = 3
SPEECH_KERNEL: Final = 3
POSE_KERNEL: Final = 5


def _batched_sequence(x: torch.Tensor, what: str) -> torch.Tensor:
    if x.ndim == 2:
        return x[None]
    if x.ndim != 3:
        raise ValueError(f"{what} must be [N, d] or [B, N, d], got {tuple(x.shape)}")
    return x


class SpeechEncoder(nn.Module):
    """Two 1-D convolutions over speech features plus a linear pose injection.

    The pose layer starts at zero, so poses have no effect at initialisation.
    """

    def __init__(self: Self, speech_dim: int, hidden: int) -> None:
        """Initialize the encoder for ``speech_dim`` features."""
        super().__init__()
        self.conv1 = nn.Conv1d(
            speech_dim, hidden, SPEECH_KERNEL, padding=SPEECH_KERNEL // 2
        )
        self.conv2 = nn.Conv1d(
            hidden, hidden, SPEECH_KERNEL, padding=SPEECH_KERNEL // 2
        )
        self.pose = nn.Linear(POSE_DIM, hidden)
        nn.init.zeros_(self.pose.weight)
        nn.init.zeros_(self.pose.bias)

    def forward(
        self: Self, speech: torch.Tensor, poses: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Encode ``[B, N, d_s]`` speech and optional ``[B, N, 3]`` poses.

        Returns:
            ``[B, N, hidden]``; unbatched inputs give ``[N, hidden]``.

        Raises:
            ValueError: If speech and pose lengths differ.
        """
        unbatched = speech.ndim == 2
        s = _batched_sequence(speech, "Speech features")
        h = self.conv2(nn.functional.silu(self.conv1(s.transpose(1, 2))))
        h = h.transpose(1, 2)
        if poses is not None:
            p = _batched_sequence(poses, "Poses")
            if p.shape[:2] != s.shape[:2]:
                raise ValueError(
                    f"Pose track {tuple(p.shape[:2])} does not match speech "
                    f"{tuple(s.shape[:2])}"
                )
            h = h + self.pose(p)
        return h.squeeze(0) if unbatched else h


class PosePredictor(nn.Module):
    """Three 1-D convolutions from speech features to (pitch, yaw, roll)."""

    def __init__(self: Self, speech_dim: int, hidden: int) -> None:
        """Initialize the predictor."""
        super().__init__()
        pad = POSE_KERNEL // 2
        self.net = nn.Sequential(
            nn.Conv1d(speech_dim, hidden, POSE_KERNEL, padding=pad),
            nn.SiLU(),
            nn.Conv1d(hidden, hidden, POSE_KERNEL, padding=pad),
            nn.SiLU(),
            nn.Conv1d(hidden, POSE_DIM, POSE_KERNEL, padding=pad),
        )

    def forward(self: Self, speech: torch.Tensor) -> torch.Tensor:
        """``[B, N, d_s]`` (or ``[N, d_s]``) speech to ``[B, N, 3]`` poses."""
        unbatched = speech.ndim == 2
        s = _batched_sequence(speech, "Speech features")
        poses = self.net(s.transpose(1, 2)).transpose(1, 2)
        return poses.squeeze(0) if unbatched else poses


@dataclass(frozen=True)
class ConditioningBundle:
    """Everything the denoiser is conditioned on apart from the time.

    Attributes:
        speech_hidden: ``[B, N, d]`` speech-encoder output with poses injected.
        reference: ``[B, *frame_shape]`` data frame of the reference image.
    """

    speech_hidden: torch.Tensor
    reference: torch.Tensor

    @property
    def length(self: Self) -> int:
        """Sequence length N."""
        return int(self.speech_hidden.shape[1])

    @property
    def batch_size(self: Self) -> int:
        """Batch size B."""
        return int(self.speech_hidden.shape[0])


class SequenceDenoiser(nn.Module):
    """Conformer over per-frame tokens predicting the clean sequence.

    Each data frame is flattened to one token. The reference frame is split into
    ``R`` tokens of ``c`` channels, which receive fixed positional embeddings
    before cross-attention, or is flattened and projected when it is added.
    """

    def __init__(
        self: Self,
        frame_shape: tuple[int, ...],
        token_shape: tuple[int, int],
        reference_positions: torch.Tensor,
        preset: ScalePreset,
        variant: ConditioningVariant = ConditioningVariant.speech_add_ref_attn,
        backbone: Backbone = Backbone.conformer,
    ) -> None:
        """Initialize the denoiser for data frames of ``frame_shape``."""
        super().__init__()
        self.frame_shape = tuple(frame_shape)
        self.token_shape = token_shape
        self.frame_dim = math.prod(self.frame_shape)
        if math.prod(token_shape) != self.frame_dim:
            raise ValueError(
                f"Token shape {token_shape} does not tile frame {self.frame_shape}"
            )
        dim = preset.diff_hidden
        self.variant = ConditioningVariant(variant)
        self.input = nn.Linear(self.frame_dim, dim)
        self.time = TimeEmbedding(dim)
        self.speech_attends = speech_attends(self.variant)
        self.reference_attends = reference_attends(self.variant)
        self.reference_proj = nn.Linear(
            token_shape[1] if self.reference_attends else self.frame_dim, dim
        )
        self.register_buffer("reference_positions", reference_positions.float())
        self.blocks = nn.ModuleList(
            ConformerBlock(dim, preset.diff_heads, self.variant, backbone)
            for _ in range(preset.diff_layers)
        )
        self.output = nn.Linear(dim, self.frame_dim)

    def _reference(self: Self, reference: torch.Tensor) -> torch.Tensor:
        if self.reference_attends:
            tokens = reference.reshape(reference.shape[0], *self.token_shape)
            return self.reference_proj(tokens) + self.reference_positions
        return self.reference_proj(reference.reshape(reference.shape[0], -1))[:, None]

    def forward(
        self: Self,
        z_t: torch.Tensor,
        t: float | torch.Tensor,
        cond: ConditioningBundle,
    ) -> torch.Tensor:
        """Predict the clean sequence ``z0`` from ``z_t``.

        Args:
            z_t: ``[B, N, *frame_shape]`` noised sequence.
            t: Diffusion time, a float or ``[B]``.
            cond: Speech hidden sequence and reference frame.

        Returns:
            ``[B, N, *frame_shape]``.

        Raises:
            ValueError: On shape mismatches.
        """
        n_frame_dims = len(self.frame_shape)
        if tuple(z_t.shape[2:]) != self.frame_shape or z_t.ndim != 2 + n_frame_dims:
            raise ValueError(
                f"Expected [B, N, {', '.join(map(str, self.frame_shape))}], "
                f"got {tuple(z_t.shape)}"
            )
        b, n = z_t.shape[:2]
        if (cond.batch_size, cond.length) != (b, n):
            raise ValueError(
                f"Conditioning is [{cond.batch_size}, {cond.length}] but z_t is "
                f"[{b}, {n}]"
            )
        times = torch.as_tensor(t, dtype=z_t.dtype, device=z_t.device)
        times = times.expand(b) if times.ndim == 0 else times

        positions = sinusoidal_embedding(
            torch.arange(n, device=z_t.device), self.input.out_features
        )
        x = self.input(z_t.reshape(b, n, -1)) + positions
        speech = cond.speech_hidden
        if self.speech_attends:
            speech = speech + positions
        time = self.time(times)
        reference = self._reference(cond.reference)
        for block in self.blocks:
            x = block(x, time, speech, reference)
        return self.output(x).reshape(z_t.shape)


class MotionDenoiser(SequenceDenoiser):
    """Denoiser over motion-latent sequences ``[B, N, h_m, w_m, 3]``.

    The reference motion latent becomes ``h_m·w_m`` tokens with a 2-D embedding.
    """

    def __init__(
        self: Self,
        latent_shape: tuple[int, int, int],
        preset: ScalePreset,
        variant: ConditioningVariant = ConditioningVariant.speech_add_ref_attn,
        backbone: Backbone = Backbone.conformer,
    ) -> None:
        """Initialize a denoiser over latents of ``latent_shape``."""
        h, w, c = latent_shape
        super().__init__(
            latent_shape,
            (h * w, c),
            grid_positional_embedding(h, w, preset.diff_hidden),
            preset,
            variant,
            backbone,
        )


class LandmarkDenoiser(SequenceDenoiser):
    """Denoiser over normalised landmark sequences ``[B, N, K, 2]``."""

    def __init__(
        self: Self,
        n_landmarks: int,
        preset: ScalePreset,
        variant: ConditioningVariant = ConditioningVariant.speech_add_ref_attn,
        backbone: Backbone = Backbone.conformer,
    ) -> None:
        """Initialize a denoiser over ``n_landmarks`` landmark coordinates."""
        super().__init__(
            (n_landmarks, 2),
            (n_landmarks, 2),
            sinusoidal_embedding(torch.arange(n_landmarks), preset.diff_hidden),
            preset,
            variant,
            backbone,
        )


class MotionRegressor(nn.Module):
    """Single-pass predictor of the sequence, without a diffusion process.

    It reuses the denoiser architecture with a zero input and a fixed time of 0.
    """

    def __init__(self: Self, backbone: SequenceDenoiser) -> None:
        """Wrap ``backbone``; its input projection is fed zeros."""
        super().__init__()
        self.backbone = backbone

    @property
    def frame_shape(self: Self) -> tuple[int, ...]:
        """Shape of one predicted frame."""
        return self.backbone.frame_shape

    def forward(self: Self, cond: ConditioningBundle) -> torch.Tensor:
        """``[B, N, *frame_shape]`` prediction for the conditioning."""
        shape = (cond.batch_size, cond.length, *self.frame_shape)
        zeros = cond.speech_hidden.new_zeros(shape)
        return self.backbone(zeros, 0.0, cond)
