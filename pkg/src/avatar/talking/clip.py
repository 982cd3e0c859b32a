"""The immutable talking-video clip and its validation."""

from __future__ import annotations

from typing import Annotated, Final, Self

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, field_validator

from avatar.talking._logging import null_logger
from avatar.talking._utils import frozen_float32
from avatar.talking.models.shape import ShapeConfig  # noqa: TC001

logger: Final = null_logger(__name__)


def _frozen_bool(value: object) -> np.ndarray:
    array = np.array(value, dtype=bool, copy=True)
    array.setflags(write=False)
    return array


FloatArray = Annotated[np.ndarray, BeforeValidator(frozen_float32)]
BoolArray = Annotated[np.ndarray, BeforeValidator(_frozen_bool)]


class VideoClip(BaseModel):
    """Aligned frames, landmarks, poses and speech features of one talking segment.

    Arrays are stored as read-only float32 copies. Construction only coerces types;
    use :func:`validate_clip` to check the clip against a :class:`ShapeConfig`.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    frames: FloatArray
    """``[N, H, W, 3]`` pixels in [0, 1]."""

    landmarks: FloatArray
    """``[N, K, 2]`` pixel coordinates (x, y)."""

    poses: FloatArray
    """``[N, 3]`` (pitch, yaw, roll) in radians."""

    speech_features: FloatArray
    """``[N, d_s]``."""

    fps: float
    identity_id: str = ""
    masked: BoolArray | None = None
    """``[N]`` flags for frames where the mouth is covered.

    None means no frame is masked.
    """

    @field_validator("fps", mode="before")
    @classmethod
    def _plain_float(cls, value: object) -> float:
        return float(value)  # type: ignore[arg-type]

    @property
    def n_frames(self: Self) -> int:
        """Number of frames N."""
        return int(self.frames.shape[0])

    @property
    def mask_flags(self: Self) -> np.ndarray:
        """Per-frame mask flags, all False when the clip carries none."""
        if self.masked is None:
            return np.zeros(self.n_frames, dtype=bool)
        return self.masked

    @property
    def duration_s(self: Self) -> float:
        """Clip length in seconds."""
        return self.n_frames / self.fps

    def sub_clip(self: Self, start: int, end: int) -> VideoClip:
        """Return frames ``start`` (inclusive) to ``end`` (exclusive) as a new clip."""
        if not 0 <= start < end <= self.n_frames:
            raise ValueError(
                f"Invalid frame range [{start}, {end}) for a clip of "
                f"{self.n_frames} frames"
            )
        return VideoClip(
            frames=self.frames[start:end],
            landmarks=self.landmarks[start:end],
            poses=self.poses[start:end],
            speech_features=self.speech_features[start:end],
            fps=self.fps,
            identity_id=self.identity_id,
            masked=None if self.masked is None else self.masked[start:end],
        )


class ValidationReport(BaseModel):
    """Every invariant a clip violates. Empty when the clip is well formed."""

    violations: list[str] = Field(default_factory=list)

    @property
    def ok(self: Self) -> bool:
        """True when there are no violations."""
        return not self.violations

    def __len__(self: Self) -> int:
        """Number of violations."""
        return len(self.violations)


def _leading(array: np.ndarray) -> int | None:
    return int(array.shape[0]) if array.ndim >= 1 else None


def validate_clip(clip: VideoClip, cfg: ShapeConfig) -> ValidationReport:
    """Check a clip against the shape configuration.

    Never raises: each violated invariant becomes one entry of the report.

    Args:
        clip: The clip to check.
        cfg: Expected frame size, landmark count and speech width.

    Returns:
        The validation report.
    """
    violations: list[str] = []
    n = _leading(clip.frames)

    if clip.frames.ndim != 4 or clip.frames.shape[1:] != (cfg.H, cfg.W, 3):
        violations.append(
            f"frames shape {clip.frames.shape} ≠ [N, {cfg.H}, {cfg.W}, 3]"
        )
    if n is None or n < 1:
        violations.append("clip has no frames")
    if not np.all(np.isfinite(clip.frames)):
        violations.append("frames contain non-finite values")
    elif clip.frames.size and (clip.frames.min() < 0 or clip.frames.max() > 1):
        violations.append("frames outside [0, 1]")

    if clip.landmarks.ndim != 3 or clip.landmarks.shape[1:] != (cfg.K, 2):
        violations.append(
            f"landmarks shape {clip.landmarks.shape} ≠ [N, {cfg.K}, 2]"
        )
    elif not np.all(np.isfinite(clip.landmarks)):
        violations.append("landmarks contain non-finite values")
    else:
        x = clip.landmarks[..., 0]
        y = clip.landmarks[..., 1]
        if np.any((x < 0) | (x >= cfg.W) | (y < 0) | (y >= cfg.H)):
            violations.append("landmark out of bounds")

    if clip.poses.ndim != 2:
        violations.append(f"poses must be 2-D, got shape {clip.poses.shape}")
    elif clip.poses.shape[1] != 3:
        violations.append("poses width ≠ 3")
    if not np.all(np.isfinite(clip.poses)):
        violations.append("poses contain non-finite values")

    if clip.speech_features.ndim != 2:
        violations.append(
            f"speech_features must be 2-D, got shape {clip.speech_features.shape}"
        )
    elif clip.speech_features.shape[1] != cfg.d_s:
        violations.append(f"speech_features width ≠ d_s ({cfg.d_s})")
    if not np.all(np.isfinite(clip.speech_features)):
        violations.append("speech_features contain non-finite values")

    arrays = {
        "landmarks": clip.landmarks,
        "poses": clip.poses,
        "speech_features": clip.speech_features,
    }
    if clip.masked is not None:
        arrays["masked"] = clip.masked
    for name, array in arrays.items():
        if _leading(array) != n:
            violations.append(f"{name} length ≠ frame count")

    if not (clip.fps > 0 and np.isfinite(clip.fps)):
        violations.append("fps must be positive")

    if violations:
        logger.debug(f"Clip '{clip.identity_id}' has violations: {violations}")
    return ValidationReport(violations=violations)
