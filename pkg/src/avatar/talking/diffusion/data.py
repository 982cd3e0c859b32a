"""Stage-two training data: normalised sequences, batches and their normaliser.

The diffused data space is either motion latents or landmark coordinates. In both
cases a :class:`DataNormalizer` maps the raw frames to roughly unit scale, and a
:class:`SequenceData` holds one clip's normalised frames next to its speech
features and poses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Self

import numpy as np

from avatar.talking._utils import to_tensor
from avatar.talking.diffusion.windows import sample_window_batch

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    import torch
    from numpy.typing import ArrayLike, NDArray

    from avatar.talking.models.run_config import DiffusionTrainingSettings
    from avatar.talking.models.shape import ShapeConfig

NORMALIZER: Final = "normalizer"
MIN_STD: Final = 1e-4


@dataclass(frozen=True)
class DataNormalizer:
    """Affine map ``(x − offset) / scale`` applied per element of a data frame.

    Attributes:
        offset: Array broadcastable to one data frame.
        scale: Positive array of the same shape.
    """

    offset: NDArray[np.float32]
    scale: NDArray[np.float32]

    @classmethod
    def fit(cls: type[Self], frames: ArrayLike) -> Self:
        """Per-element standardisation over ``[M, *frame_shape]`` frames."""
        data = np.asarray(frames, dtype=np.float64)
        if data.shape[0] == 0:
            raise ValueError("Cannot fit a normaliser on zero frames")
        std = np.maximum(data.std(axis=0), MIN_STD)
        return cls(data.mean(axis=0).astype(np.float32), std.astype(np.float32))

    @classmethod
    def for_landmarks(cls: type[Self], cfg: ShapeConfig) -> Self:
        """Map pixel coordinates to [−1, 1] by the frame half-extent."""
        half = np.array([cfg.W / 2, cfg.H / 2], dtype=np.float32)
        half = np.broadcast_to(half, (cfg.K, 2)).copy()
        return cls(half, half.copy())

    def normalize(self: Self, frames: ArrayLike) -> NDArray[np.float32]:
        """Raw frames ``[..., *frame_shape]`` to normalised frames."""
        data = np.asarray(frames, dtype=np.float32)
        return ((data - self.offset) / self.scale).astype(np.float32)

    def denormalize(self: Self, frames: torch.Tensor) -> torch.Tensor:
        """Inverse of :meth:`normalize` on a tensor."""
        offset = to_tensor(self.offset, dtype=frames.dtype, device=frames.device)
        scale = to_tensor(self.scale, dtype=frames.dtype, device=frames.device)
        return frames * scale + offset

    def to_arrays(self: Self, prefix: str = NORMALIZER) -> dict[str, NDArray]:
        """Named arrays for storing the normaliser with a checkpoint."""
        return {f"{prefix}.offset": self.offset, f"{prefix}.scale": self.scale}

    @classmethod
    def from_arrays(
        cls: type[Self], arrays: Mapping[str, ArrayLike], prefix: str = NORMALIZER
    ) -> Self:
        """Inverse of :meth:`to_arrays`."""
        return cls(
            np.asarray(arrays[f"{prefix}.offset"], dtype=np.float32),
            np.asarray(arrays[f"{prefix}.scale"], dtype=np.float32),
        )


@dataclass(frozen=True)
class SequenceData:
    """One clip in the diffused data space.

    Attributes:
        data: ``[N, *frame_shape]`` normalised frames.
        speech: ``[N, d_s]`` speech features.
        poses: ``[N, 3]`` (pitch, yaw, roll).
    """

    data: NDArray[np.float32]
    speech: NDArray[np.float32]
    poses: NDArray[np.float32]

    def __post_init__(self: Self) -> None:
        """Check that the three tracks are aligned."""
        n = {self.data.shape[0], self.speech.shape[0], self.poses.shape[0]}
        if len(n) != 1:
            raise ValueError(
                f"Sequence tracks differ in length: data {self.data.shape[0]}, "
                f"speech {self.speech.shape[0]}, poses {self.poses.shape[0]}"
            )

    @property
    def n_frames(self: Self) -> int:
        """Sequence length N."""
        return int(self.data.shape[0])


@dataclass(frozen=True)
class SequenceBatch:
    """Aligned training windows with one reference frame per window.

    Attributes:
        data: ``[B, N, *frame_shape]`` clean sequences ``z0``.
        speech: ``[B, N, d_s]``.
        poses: ``[B, N, 3]``.
        reference: ``[B, *frame_shape]`` frame drawn from anywhere in the clip.
    """

    data: torch.Tensor
    speech: torch.Tensor
    poses: torch.Tensor
    reference: torch.Tensor


def sample_sequence_batch(
    sequences: Sequence[SequenceData],
    settings: DiffusionTrainingSettings,
    rng: np.random.Generator,
    device: torch.device | str = "cpu",
) -> SequenceBatch:
    """Cut ``settings.batch_size`` windows of a shared length out of the corpus.

    The reference frame of each window is drawn uniformly over its whole clip,
    not only over the window.
    """
    windows = sample_window_batch(
        [s.n_frames for s in sequences],
        settings.batch_size,
        rng,
        settings.window_min,
        settings.window_max,
    )
    data, speech, poses, reference = [], [], [], []
    for w in windows:
        seq = sequences[w.clip]
        data.append(seq.data[w.start : w.stop])
        speech.append(seq.speech[w.start : w.stop])
        poses.append(seq.poses[w.start : w.stop])
        reference.append(seq.data[int(rng.integers(seq.n_frames))])
    return SequenceBatch(
        to_tensor(np.stack(data), device=device),
        to_tensor(np.stack(speech), device=device),
        to_tensor(np.stack(poses), device=device),
        to_tensor(np.stack(reference), device=device),
    )
