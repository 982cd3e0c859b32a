"""Filtration policies and the JSON reports written by the pipeline."""

from __future__ import annotations

from typing import Self

from pydantic import BaseModel, Field

from avatar.talking.types import NonNegativeFloat, PositiveFloat  # noqa: TC001

VAE_MODE_LOOSENING = 1.5
DEFAULT_DISPLACEMENT_FRACTION = 0.04


class FilterPolicy(BaseModel):
    """Thresholds of the frame-by-frame filtration pipeline."""

    frontal_angle_tolerance_deg: PositiveFloat = 25.0
    """Allowed deviation of the frontal angle from 180 degrees."""

    max_displacement_px: PositiveFloat | None = None
    """Largest landmark displacement between adjacent frames. None means 0.04·H."""

    silence_energy_threshold: PositiveFloat = 0.05
    """Frames whose speech-feature L2 energy is below this are silent."""

    min_segment_s: NonNegativeFloat = 3.0
    """Retained segments must be at least this long."""

    vae_mode: bool = False
    """Loosen every threshold by a factor 1.5, for VAE training data."""

    @classmethod
    def for_vae(cls, **overrides: float) -> Self:
        """Return the loosened policy used for VAE training data."""
        return cls.model_validate({**overrides, "vae_mode": True})

    @property
    def _factor(self: Self) -> float:
        return VAE_MODE_LOOSENING if self.vae_mode else 1.0

    def angle_tolerance(self: Self) -> float:
        """Effective frontal tolerance in degrees."""
        return self.frontal_angle_tolerance_deg * self._factor

    def displacement_threshold(self: Self, frame_height: int) -> float:
        """Effective displacement threshold in pixels for frames of this height."""
        base = (
            self.max_displacement_px
            if self.max_displacement_px is not None
            else DEFAULT_DISPLACEMENT_FRACTION * frame_height
        )
        return base * self._factor

    def silence_threshold(self: Self) -> float:
        """Effective silence energy threshold."""
        return self.silence_energy_threshold / self._factor

    def min_segment_frames(self: Self, fps: float) -> int:
        """Minimum number of frames in a retained segment."""
        return round(self.min_segment_s * fps)


class FrameVerdict(BaseModel):
    """The outcome of the three per-frame checks."""

    frontal_ok: bool
    stable_ok: bool
    speaking_ok: bool
    angle_deg: float
    displacement_px: float

    @property
    def passed(self: Self) -> bool:
        """Whether the frame passes every check."""
        return self.frontal_ok and self.stable_ok and self.speaking_ok


class FilterReport(BaseModel):
    """Per-frame verdicts and retained segments for one clip.

    Segments are ``(start, end)`` frame indices with ``end`` exclusive.
    """

    identity_id: str = ""
    fps: PositiveFloat = 25.0
    policy: FilterPolicy = Field(default_factory=FilterPolicy)
    per_frame: list[FrameVerdict] = Field(default_factory=list)
    segments: list[tuple[int, int]] = Field(default_factory=list)

    @property
    def retained_frames(self: Self) -> int:
        """Total number of frames inside retained segments."""
        return sum(end - start for start, end in self.segments)


class ClipMetrics(BaseModel):
    """Metrics for a single generated/reference clip pair."""

    name: str
    psnr_db: float
    akd_px: float
    msi: float
    lipsync_corr: float


class ProtocolMetrics(BaseModel):
    """Aggregate metrics of one video-driven evaluation protocol."""

    rounds: int
    frames_per_round: int
    frames_evaluated: int
    psnr_db: float | None = None
    akd_px: float
    msi: float
    frechet: float | None = None


class MetricReport(BaseModel):
    """Objective metrics over a set of generated clips."""

    psnr_db: float
    akd_px: NonNegativeFloat
    msi: float
    frechet: NonNegativeFloat | None = None
    """None when there were too few frames to fit the feature Gaussians."""

    lipsync_corr: float = Field(ge=-1.0, le=1.0)
    per_clip: list[ClipMetrics] = Field(default_factory=list)
    self_reconstruction: ProtocolMetrics | None = None
    cross_reenactment: ProtocolMetrics | None = None
