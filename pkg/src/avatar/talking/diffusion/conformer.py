"""Conformer blocks with time, speech and reference conditioning.

A block is macaron-style: half feed-forward, self-attention, optional cross-attention,
convolution module, half feed-forward, final layer norm. The time embedding is added
to the input of every block. Speech and reference conditioning enter either by
element-wise addition to the block input or through cross-attention where the hidden
sequence is the query.
"""

from __future__ import annotations

import math
from typing import Final, Self

import torch
from torch import nn

from avatar.talking.models._enums import Backbone, ConditioningVariant

CONV_KERNEL: Final = 7
FF_MULT: Final = 4
TIME_SCALE: Final = 1000.0


def sinusoidal_embedding(positions: torch.Tensor, dim: int) -> torch.Tensor:
    """Sin/cos embedding of ``positions`` ``[...]`` to ``[..., dim]``."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10_000.0)
        * torch.arange(half, device=positions.device, dtype=torch.float32)
        / max(half, 1)
    )
    angles = positions.to(torch.float32)[..., None] * freqs
    embedding = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if dim % 2:
        embedding = torch.nn.functional.pad(embedding, (0, 1))
    return embedding


def grid_positional_embedding(height: int, width: int, dim: int) -> torch.Tensor:
    """Fixed 2-D embedding of a ``height × width`` grid, ``[height·width, dim]``.

    Half of the channels encode the row, the other half the column.
    """
    rows, cols = torch.meshgrid(
        torch.arange(height), torch.arange(width), indexing="ij"
    )
    half = dim // 2
    return torch.cat(
        [
            sinusoidal_embedding(rows.reshape(-1), half),
            sinusoidal_embedding(cols.reshape(-1), dim - half),
        ],
        dim=-1,
    )


class FeedForward(nn.Module):
    """Pre-norm position-wise feed-forward layer."""

    def __init__(self: Self, dim: int) -> None:
        """Initialize the layer."""
        super().__init__()
        self.net = nn.Sequential(
            nn.LayerNorm(dim),
            nn.Linear(dim, FF_MULT * dim),
            nn.SiLU(),
            nn.Linear(FF_MULT * dim, dim),
        )

    def forward(self: Self, x: torch.Tensor) -> torch.Tensor:  # noqa: D102
        return self.net(x)


class ConvModule(nn.Module):
    """Pointwise GLU, depthwise temporal convolution, pointwise projection."""

    def __init__(self: Self, dim: int, kernel_size: int = CONV_KERNEL) -> None:
        """Initialize the module."""
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.pointwise_in = nn.Linear(dim, 2 * dim)
        self.depthwise = nn.Conv1d(
            dim, dim, kernel_size, padding=kernel_size // 2, groups=dim
        )
        self.mid_norm = nn.LayerNorm(dim)
        self.pointwise_out = nn.Linear(dim, dim)

    def forward(self: Self, x: torch.Tensor) -> torch.Tensor:  # noqa: D102
        h = nn.functional.glu(self.pointwise_in(self.norm(x)), dim=-1)
        h = self.depthwise(h.transpose(1, 2)).transpose(1, 2)
        return self.pointwise_out(nn.functional.silu(self.mid_norm(h)))


class CrossAttention(nn.Module):
    """Hidden sequence as query, a conditioning sequence as key and value."""

    def __init__(self: Self, dim: int, heads: int) -> None:
        """Initialize the attention layer."""
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)

    def forward(  # noqa: D102
        self: Self, x: torch.Tensor, memory: torch.Tensor
    ) -> torch.Tensor:
        out, _ = self.attn(self.norm(x), memory, memory, need_weights=False)
        return out


def speech_attends(variant: ConditioningVariant) -> bool:
    """Whether speech enters through cross-attention."""
    return variant in (
        ConditioningVariant.speech_attn_ref_attn,
        ConditioningVariant.speech_attn_ref_add,
    )


def reference_attends(variant: ConditioningVariant) -> bool:
    """Whether the reference enters through cross-attention."""
    return variant in (
        ConditioningVariant.speech_add_ref_attn,
        ConditioningVariant.speech_attn_ref_attn,
    )


class ConformerBlock(nn.Module):
    """One conditioned block; the transformer backbone drops the convolution."""

    def __init__(
        self: Self,
        dim: int,
        heads: int,
        variant: ConditioningVariant = ConditioningVariant.speech_add_ref_attn,
        backbone: Backbone = Backbone.conformer,
    ) -> None:
        """Initialize a block of width ``dim``."""
        super().__init__()
        self.variant = ConditioningVariant(variant)
        self.ff1 = FeedForward(dim)
        self.self_norm = nn.LayerNorm(dim)
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.speech_attn = (
            CrossAttention(dim, heads) if speech_attends(self.variant) else None
        )
        self.ref_attn = (
            CrossAttention(dim, heads) if reference_attends(self.variant) else None
        )
        self.conv = ConvModule(dim) if backbone == Backbone.conformer else None
        self.ff2 = FeedForward(dim)
        self.out_norm = nn.LayerNorm(dim)

    def forward(
        self: Self,
        x: torch.Tensor,
        time: torch.Tensor,
        speech: torch.Tensor,
        reference: torch.Tensor,
    ) -> torch.Tensor:
        """Apply the block.

        Args:
            x: Hidden sequence ``[B, N, d]``.
            time: Time embedding ``[B, 1, d]``.
            speech: Speech hidden sequence ``[B, N, d]``.
            reference: Reference tokens ``[B, R, d]``; pooled to ``[B, 1, d]`` when
                the reference is added.
        """
        x = x + time
        if self.speech_attn is None:
            x = x + speech
        if self.ref_attn is None:
            x = x + reference.mean(dim=1, keepdim=True)

        x = x + 0.5 * self.ff1(x)
        h = self.self_norm(x)
        x = x + self.self_attn(h, h, h, need_weights=False)[0]
        if self.speech_attn is not None:
            x = x + self.speech_attn(x, speech)
        if self.ref_attn is not None:
            x = x + self.ref_attn(x, reference)
        if self.conv is not None:
            x = x + self.conv(x)
        x = x + 0.5 * self.ff2(x)
        return self.out_norm(x)


class TimeEmbedding(nn.Module):
    """Sinusoidal embedding of t followed by a two-layer MLP."""

    def __init__(self: Self, dim: int) -> None:
        """Initialize the embedding."""
        super().__init__()
        self.dim = dim
        self.mlp = nn.Sequential(
            nn.Linear(dim, FF_MULT * dim), nn.SiLU(), nn.Linear(FF_MULT * dim, dim)
        )

    def forward(self: Self, t: torch.Tensor) -> torch.Tensor:
        """``[B]`` times to ``[B, 1, d]`` embeddings."""
        return self.mlp(sinusoidal_embedding(t * TIME_SCALE, self.dim))[:, None, :]
