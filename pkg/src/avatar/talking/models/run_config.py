"""The run configuration, stored as config.json in a run directory."""

from __future__ import annotations

from typing import Literal, Self

from pydantic import BaseModel, Field, model_validator

from avatar.talking.diffusion.schedule import NoiseSchedule
from avatar.talking.models._enums import (
    Ablation,
    Backbone,
    ConditioningVariant,
    PoseModeKind,
    SamplerKind,
    ScaleName,
)
from avatar.talking.models.reports import FilterPolicy
from avatar.talking.models.shape import ScalePreset, ShapeConfig, get_scale_preset
from avatar.talking.types import (
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ResettableBaseModel,
    UnitInterval,
)


class SamplerSettings(BaseModel):
    """Reverse-process integrator settings."""

    kind: SamplerKind = SamplerKind.ode
    steps: PositiveInt = 50
    seed: int = 0


class PoseMode(BaseModel):
    """Source of the head-pose track used at generation time."""

    kind: PoseModeKind = PoseModeKind.predicted
    fixed: tuple[float, float, float] = (0.0, 0.0, 0.0)
    """(pitch, yaw, roll) in radians, used when ``kind`` is ``fixed``."""


class AblationSettings(BaseModel):
    """Which model variant to train and sample."""

    ablation: Ablation = Ablation.none
    cond_variant: ConditioningVariant = ConditioningVariant.speech_add_ref_attn
    backbone: Backbone = Backbone.conformer

    @property
    def conditioning(self: Self) -> ConditioningVariant:
        """Conditioning variant in effect; the default unless ablating it."""
        if self.ablation == Ablation.cond_variant:
            return self.cond_variant
        return ConditioningVariant.speech_add_ref_attn

    @property
    def uses_pose(self: Self) -> bool:
        """Whether the speech encoder receives the pose track."""
        return self.ablation != Ablation.no_pose


class VaeTrainingSettings(BaseModel):
    """Stage-one optimisation settings."""

    steps: PositiveInt = 2000
    batch_size: PositiveInt = 16
    learning_rate: PositiveFloat = 2e-4
    lambda_adv: NonNegativeFloat = 0.5
    kl_scale: NonNegativeFloat = 1e-6
    """λ_kl = kl_scale · latent elements / pixel elements."""

    disc_start: int = Field(default=0, ge=0)
    perceptual_features: bool = False
    """Add an L1 term over fixed random convolution features."""

    perceptual_weight: NonNegativeFloat = 0.5
    checkpoint_interval: PositiveInt = 500
    keep_checkpoints: PositiveInt = 3


class DiffusionTrainingSettings(BaseModel):
    """Stage-two optimisation settings."""

    steps: PositiveInt = 3000
    batch_size: PositiveInt = 8
    learning_rate: PositiveFloat = 1e-3
    warmup_steps: int = Field(default=200, ge=0)
    window_min: PositiveInt = 125
    window_max: PositiveInt = 250
    checkpoint_interval: PositiveInt = 500
    keep_checkpoints: PositiveInt = 3
    readout_ridge: PositiveFloat = 1e-3

    @model_validator(mode="after")
    def _window_order(self: Self) -> Self:
        if self.window_min > self.window_max:
            raise ValueError("window_min must not exceed window_max")
        return self


class CorpusSettings(BaseModel):
    """Size and dynamics of the synthetic training corpus."""

    n_identities: PositiveInt = 20
    duration_s: PositiveFloat = 10.0
    fps: PositiveFloat = 25.0
    seed: int = 0
    pose_amplitude: NonNegativeFloat = 0.3
    pose_cutoff_hz: PositiveFloat = 0.5
    silence_fraction: UnitInterval = 0.1
    mask_fraction: UnitInterval = 0.0
    workers: PositiveInt = 1


class RunConfig(ResettableBaseModel):
    """Everything needed to reproduce a training or generation run."""

    schema_version: Literal[1] = 1
    shape: ShapeConfig = Field(default_factory=ShapeConfig)
    scale: ScaleName = ScaleName.tiny
    schedule: NoiseSchedule = Field(default_factory=NoiseSchedule)
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)
    pose_mode: PoseMode = Field(default_factory=PoseMode)
    ablation: AblationSettings = Field(default_factory=AblationSettings)
    corpus: CorpusSettings = Field(default_factory=CorpusSettings)
    filter_policy: FilterPolicy = Field(default_factory=FilterPolicy)
    vae_training: VaeTrainingSettings = Field(default_factory=VaeTrainingSettings)
    diffusion_training: DiffusionTrainingSettings = Field(
        default_factory=DiffusionTrainingSettings
    )
    seed: int = 0
    device: str = "cpu"

    @classmethod
    def reset(cls: type[Self]) -> Self:
        """Return the desk-scale defaults."""
        return cls()

    @property
    def preset(self: Self) -> ScalePreset:
        """The resolved model size preset."""
        return get_scale_preset(self.scale)
