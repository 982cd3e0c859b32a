"""Contains the pydantic models of configuration files, manifests and reports."""

from .run_config import (
    AblationSettings,
    CorpusSettings,
    DiffusionTrainingSettings,
    PoseMode,
    RunConfig,
    SamplerSettings,
    VaeTrainingSettings,
)
from .reports import FilterPolicy, FilterReport, MetricReport
from .shape import SCALE_PRESETS, ScalePreset, ShapeConfig, get_scale_preset

__all__ = [
    "AblationSettings",
    "CorpusSettings",
    "DiffusionTrainingSettings",
    "FilterPolicy",
    "FilterReport",
    "MetricReport",
    "PoseMode",
    "RunConfig",
    "SCALE_PRESETS",
    "SamplerSettings",
    "ScalePreset",
    "ShapeConfig",
    "VaeTrainingSettings",
    "get_scale_preset",
]
