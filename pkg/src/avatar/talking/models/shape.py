"""Image/latent geometry and model size presets."""

from __future__ import annotations

from typing import Final, Literal, Self

from pydantic import BaseModel, ConfigDict, computed_field, model_validator

from avatar.talking.models._enums import ScaleName
from avatar.talking.types import PositiveInt  # noqa: TC001

APPEARANCE_DOWNSAMPLE: Final = 8
MOTION_DOWNSAMPLE: Final = 16


class ShapeConfig(BaseModel):
    """Frame size, landmark count, speech width and the derived latent grids."""

    model_config = ConfigDict(frozen=True)

    H: PositiveInt = 64
    W: PositiveInt = 64
    K: Literal[68] = 68
    """Landmark count. The topology is fixed, see :mod:`avatar.talking.topology`."""

    d_s: PositiveInt = 32
    """Speech feature width."""

    latent_channels: Literal[3] = 3

    @model_validator(mode="after")
    def _divisible_by_motion_factor(self: Self) -> Self:
        if self.H % MOTION_DOWNSAMPLE or self.W % MOTION_DOWNSAMPLE:
            raise ValueError(
                f"H and W must be divisible by {MOTION_DOWNSAMPLE}, got "
                f"{self.H}x{self.W}"
            )
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def h_a(self: Self) -> int:
        """Appearance latent height."""
        return self.H // APPEARANCE_DOWNSAMPLE

    @computed_field  # type: ignore[prop-decorator]
    @property
    def w_a(self: Self) -> int:
        """Appearance latent width."""
        return self.W // APPEARANCE_DOWNSAMPLE

    @computed_field  # type: ignore[prop-decorator]
    @property
    def h_m(self: Self) -> int:
        """Motion latent height."""
        return self.H // MOTION_DOWNSAMPLE

    @computed_field  # type: ignore[prop-decorator]
    @property
    def w_m(self: Self) -> int:
        """Motion latent width."""
        return self.W // MOTION_DOWNSAMPLE

    @property
    def motion_latent_shape(self: Self) -> tuple[int, int, int]:
        """Shape of one motion latent, ``(h_m, w_m, 3)``."""
        return (self.h_m, self.w_m, self.latent_channels)

    @property
    def appearance_latent_shape(self: Self) -> tuple[int, int, int]:
        """Shape of one appearance latent, ``(h_a, w_a, 3)``."""
        return (self.h_a, self.w_a, self.latent_channels)


class ScalePreset(BaseModel):
    """Hidden sizes and depths of the VAE and the diffusion backbone."""

    model_config = ConfigDict(frozen=True)

    name: ScaleName
    vae_hidden: PositiveInt
    vae_layers: PositiveInt
    diff_hidden: PositiveInt
    diff_layers: PositiveInt

    @property
    def diff_heads(self: Self) -> int:
        """Attention heads used by the denoiser blocks."""
        return max(1, self.diff_hidden // 32)


SCALE_PRESETS: Final[dict[ScaleName, ScalePreset]] = {
    ScaleName.tiny: ScalePreset(
        name=ScaleName.tiny, vae_hidden=32, vae_layers=1, diff_hidden=64, diff_layers=2
    ),
    ScaleName.small: ScalePreset(
        name=ScaleName.small,
        vae_hidden=128,
        vae_layers=2,
        diff_hidden=512,
        diff_layers=6,
    ),
    ScaleName.base: ScalePreset(
        name=ScaleName.base,
        vae_hidden=256,
        vae_layers=4,
        diff_hidden=1280,
        diff_layers=12,
    ),
    ScaleName.large: ScalePreset(
        name=ScaleName.large,
        vae_hidden=512,
        vae_layers=8,
        diff_hidden=2048,
        diff_layers=12,
    ),
}


def get_scale_preset(name: ScaleName | str) -> ScalePreset:
    """Return the preset registered under ``name``."""
    try:
        return SCALE_PRESETS[ScaleName(name)]
    except ValueError as e:
        raise ValueError(
            f"Unknown scale preset '{name}'. Known presets: "
            f"{', '.join(str(n) for n in SCALE_PRESETS)}"
        ) from e
