"""Contains enumerations used in this package."""

from enum import StrEnum


class ScaleName(StrEnum):
    """Model size presets."""

    tiny = "tiny"
    small = "small"
    base = "base"
    large = "large"


class SamplerKind(StrEnum):
    """Reverse-time integrators for the diffusion prior."""

    sde = "sde"
    ode = "ode"


class PoseModeKind(StrEnum):
    """Where the head-pose track comes from at generation time."""

    predicted = "predicted"
    provided = "provided"
    fixed = "fixed"


class Ablation(StrEnum):
    """Model variants that can be trained instead of the full model."""

    none = "none"
    no_disentangle = "no_disentangle"
    no_pose = "no_pose"
    no_diffusion = "no_diffusion"
    landmark_pred = "landmark_pred"
    cond_variant = "cond_variant"


class ConditioningVariant(StrEnum):
    """How speech and the reference latent enter each denoiser block."""

    speech_add_ref_attn = "speech_add_ref_attn"
    speech_add_ref_add = "speech_add_ref_add"
    speech_attn_ref_attn = "speech_attn_ref_attn"
    speech_attn_ref_add = "speech_attn_ref_add"


class Backbone(StrEnum):
    """Sequence backbone of the denoiser."""

    conformer = "conformer"
    transformer = "transformer"


class LandmarkGroup(StrEnum):
    """Named groups of the fixed 68-point landmark topology."""

    jaw = "jaw"
    brows = "brows"
    nose = "nose"
    eyes = "eyes"
    mouth = "mouth"
    pose_ring = "pose-ring"


class TrainingStage(StrEnum):
    """The two training stages, also used as checkpoint and log names."""

    vae = "vae"
    diffusion = "diffusion"
