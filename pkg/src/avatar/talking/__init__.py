"""Speech-driven talking-avatar generation."""

try:
    from ._version import version

    __version__: str = version
except ImportError:
    __version__ = version = "0.0.0"

from ._init import init_run_directory
from ._run_dir import RunDirectory
from ._training import NonFiniteLossError, StageOrderError
from .clip import VideoClip, validate_clip
from .container import CorruptContainerError, read_clip, write_clip
from .diffusion.landmarks import ConstraintMask
from .evaluation import run_evaluation
from .export import export_frames
from .filtration import filter_corpus, filter_video
from .models._enums import (
    Ablation,
    LandmarkGroup,
    PoseModeKind,
    SamplerKind,
    ScaleName,
    TrainingStage,
)
from .models.reports import FilterPolicy, MetricReport
from .models.run_config import RunConfig
from .models.shape import ShapeConfig
from .pipeline import (
    GeneratedVideo,
    TrainedModels,
    run_ablations,
    run_generation_pipeline,
    run_two_stage_training,
)
from .synthetic.corpus import build_corpus, generate_clip, read_corpus

__all__ = [
    "Ablation",
    "ConstraintMask",
    "CorruptContainerError",
    "FilterPolicy",
    "GeneratedVideo",
    "LandmarkGroup",
    "MetricReport",
    "NonFiniteLossError",
    "PoseModeKind",
    "RunConfig",
    "RunDirectory",
    "SamplerKind",
    "ScaleName",
    "ShapeConfig",
    "StageOrderError",
    "TrainedModels",
    "TrainingStage",
    "VideoClip",
    "build_corpus",
    "export_frames",
    "filter_corpus",
    "filter_video",
    "generate_clip",
    "init_run_directory",
    "read_clip",
    "read_corpus",
    "run_ablations",
    "run_evaluation",
    "run_generation_pipeline",
    "run_two_stage_training",
    "validate_clip",
    "write_clip",
]
