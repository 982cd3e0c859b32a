"""Command line entry point: ``python -m avatar.talking`` or ``avatar-talking``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any, Final

import yaml
from pydantic import ValidationError

from avatar.talking import __version__
from avatar.talking._init import init_run_directory
from avatar.talking._logging import configure_cli_logging, null_logger
from avatar.talking._resources.lock_manager import LockError
from avatar.talking._resources.pydantic_resource_manager import (
    MutablePydanticResourceManager,
)
from avatar.talking._run_dir import RunDirectory
from avatar.talking._training import NonFiniteLossError, StageOrderError
from avatar.talking._utils import path_exists
from avatar.talking.container import CorruptContainerError, read_clip
from avatar.talking.diffusion.landmarks import ConstraintMask
from avatar.talking.diffusion.training import train_diffusion
from avatar.talking.evaluation import run_evaluation
from avatar.talking.export import export_frames
from avatar.talking.filtration import filter_corpus
from avatar.talking.models._enums import LandmarkGroup, PoseModeKind, SamplerKind
from avatar.talking.models.reports import FilterPolicy
from avatar.talking.models.run_config import RunConfig
from avatar.talking.pipeline import (
    TrainedModels,
    generate_for_clips,
    run_ablations,
    run_generation_pipeline,
    run_two_stage_training,
)
from avatar.talking.synthetic.corpus import build_corpus, read_corpus
from avatar.talking.vae.training import train_vae

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger: Final = null_logger(__name__)

YAML_SUFFIXES: Final = (".yml", ".yaml")
METRICS_REPORT: Final = "reports/metrics.json"


def parse_override(text: str) -> tuple[str, Any]:
    """Split ``key=value``; the value is parsed as JSON when possible.

    Raises:
        argparse.ArgumentTypeError: If there is no ``=``.
    """
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"Expected key=value, got '{text}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def read_config_file(path: Path) -> RunConfig:
    """Load a run configuration from JSON, or from YAML by suffix.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the file does not hold a valid configuration.
    """
    if not path_exists(path):
        raise FileNotFoundError(f"Config file not found at: '{path}'")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in YAML_SUFFIXES:
            return RunConfig.model_validate(yaml.safe_load(text) or {})
        return RunConfig.model_validate_json(text)
    except (ValidationError, yaml.YAMLError) as e:
        raise ValueError(f"Invalid run configuration in '{path}': {e}") from e


def config_updates(args: argparse.Namespace) -> dict[str, Any]:
    """Dot-notation updates from ``--set`` and ``--seed``."""
    updates = dict(args.set or [])
    if args.seed is not None:
        for key in ("seed", "sampler.seed", "corpus.seed"):
            updates.setdefault(key, args.seed)
    return updates


def apply_updates(config: RunConfig, updates: dict[str, Any]) -> RunConfig:
    """A copy of ``config`` with dot-notation updates applied and validated.

    Raises:
        ValueError: If the updated configuration is invalid.
    """
    data = config.model_dump()
    for key, value in updates.items():
        MutablePydanticResourceManager._set_dot_notation_key(data, key, value)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ValueError(f"Invalid configuration overrides {updates}: {e}") from e


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """The configuration of a command that does not use a run directory."""
    config = read_config_file(args.config) if args.config else RunConfig.reset()
    return apply_updates(config, config_updates(args))


def open_run(args: argparse.Namespace) -> RunDirectory:
    """Open the run directory named by ``--run``, creating it if missing."""
    run_path = Path(args.run)
    if not path_exists(run_path / "config.json"):
        return init_run_directory(run_path, resolve_config(args))
    return RunDirectory(run_path)


def update_run_config(run_dir: RunDirectory, args: argparse.Namespace) -> RunConfig:
    """Apply ``--config``, ``--set`` and ``--seed`` to the run's ``config.json``."""
    if args.config:
        run_dir.config.save(read_config_file(args.config))
    updates = config_updates(args)
    if updates:
        run_dir.config.update(updates)
    return run_dir.load_config()


def cmd_schema(args: argparse.Namespace) -> int:
    """Print the run configuration JSON schema."""
    print(json.dumps(RunConfig.model_json_schema(), indent=2))
    return 0


def cmd_init(args: argparse.Namespace) -> int:
    """Create a run directory from the resolved configuration."""
    run_dir = init_run_directory(args.run, resolve_config(args))
    print(run_dir.path)
    return 0


def cmd_corpus(args: argparse.Namespace) -> int:
    """Synthesize a corpus."""
    config = resolve_config(args)
    index = build_corpus(config.corpus, config.shape, args.out)
    print(f"{len(index.clips)} clips written to {args.out}")
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    """Filter a corpus into talking-head segments."""
    config = resolve_config(args)
    policy = FilterPolicy.for_vae() if args.vae else config.filter_policy
    index = filter_corpus(args.corpus, args.out, policy, config.corpus.workers)
    print(f"{len(index.clips)} segments written to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    """Train both stages into one run directory."""
    run_dir = open_run(args)
    with run_dir.lock:
        config = update_run_config(run_dir, args)
        result = run_two_stage_training(
            args.corpus, run_dir, config, vae_corpus_dir=args.vae_corpus
        )
    print(
        f"Trained the VAE for {result.vae.steps} steps and stage two for "
        f"{result.diffusion.steps} steps in {run_dir.path}"
    )
    return 0


def cmd_train_vae(args: argparse.Namespace) -> int:
    """Train stage one."""
    run_dir = open_run(args)
    with run_dir.lock:
        config = update_run_config(run_dir, args)
        _, clips = read_corpus(args.corpus)
        result = train_vae(clips, config, run_dir)
    print(f"Trained the VAE for {result.steps} steps in {run_dir.path}")
    return 0


def cmd_train_diffusion(args: argparse.Namespace) -> int:
    """Train stage two against the run's autoencoder."""
    run_dir = RunDirectory(args.run)
    with run_dir.lock:
        config = update_run_config(run_dir, args)
        _, clips = read_corpus(args.corpus)
        result = train_diffusion(clips, config, run_dir)
    print(f"Trained stage two for {result.steps} steps in {run_dir.path}")
    return 0


def generation_updates(args: argparse.Namespace) -> dict[str, Any]:
    """Config updates from the sampler and pose flags of ``generate``."""
    updates: dict[str, Any] = {}
    if args.sampler is not None:
        updates["sampler.kind"] = args.sampler
    if args.steps is not None:
        updates["sampler.steps"] = args.steps
    if args.pose_mode is not None:
        updates["pose_mode.kind"] = args.pose_mode
    if args.fixed_pose is not None:
        updates["pose_mode.kind"] = PoseModeKind.fixed
        updates["pose_mode.fixed"] = list(args.fixed_pose)
    return updates


def cmd_generate(args: argparse.Namespace) -> int:
    """Generate one video and export it as PNG frames."""
    run_dir = RunDirectory(args.run)
    models = TrainedModels.load(run_dir)
    config = apply_updates(
        models.config, config_updates(args) | generation_updates(args)
    )
    models = TrainedModels(config, models.vae, models.stage_two)
    reference = read_clip(args.reference)
    driving = read_clip(args.speech) if args.speech else reference
    constraint = None
    if args.fix:
        constraint = ConstraintMask.from_groups(
            args.fix, driving.landmarks, config.shape
        )
    video = run_generation_pipeline(
        reference.frames[0],
        reference.landmarks[0],
        driving.speech_features,
        models,
        poses=driving.poses,
        constraint=constraint,
        fps=driving.fps,
    )
    out = Path(args.out) if args.out else run_dir.get_file_path("videos/generated")
    export_frames(video.frames, out, video.fps)
    print(f"{video.n_frames} frames written to {out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Generate for every clip of a corpus and write a metric report."""
    run_dir = RunDirectory(args.run)
    models = TrainedModels.load(run_dir)
    names, clips = read_corpus(args.corpus)
    videos = generate_for_clips(models, clips, args.seed)
    report = run_evaluation(
        [v.to_clip(name) for v, name in zip(videos, names, strict=True)],
        clips,
        vae=models.vae,
        seed=models.config.seed if args.seed is None else args.seed,
        names=names,
    )
    payload = report.model_dump_json(indent=2)
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        with run_dir.lock:
            run_dir.write_json_model(METRICS_REPORT, report)
    print(payload)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    """Run the ablation table."""
    config = resolve_config(args)
    _, eval_clips = read_corpus(args.eval_corpus or args.corpus)
    table = run_ablations(args.corpus, eval_clips, config, args.out, seeds=args.seeds)
    print(table.to_string())
    return 0


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for debug output",
    )
    common.add_argument(
        "--config", type=Path, help="Run configuration (JSON, or YAML by suffix)"
    )
    common.add_argument("--seed", type=int, help="Override every seed of the run")
    common.add_argument(
        "--set",
        type=parse_override,
        action="append",
        metavar="KEY=VALUE",
        help="Dot-notation config override, e.g. diffusion_training.steps=200",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    """The argument parser with one subcommand per pipeline step."""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="avatar-talking",
        description="Train and run a speech-driven talking-avatar model.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func: Callable[[argparse.Namespace], int], summary: str) -> Any:
        p = sub.add_parser(name, parents=[common], help=summary)
        p.set_defaults(func=func)
        return p

    add("schema", cmd_schema, "Print the run configuration JSON schema")

    p = add("init", cmd_init, "Create a run directory")
    p.add_argument("--run", "--out", dest="run", type=Path, required=True)

    p = add("corpus", cmd_corpus, "Synthesize a corpus of avatar clips")
    p.add_argument("--out", type=Path, required=True)

    p = add("filter", cmd_filter, "Filter a corpus into talking-head segments")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument(
        "--vae", action="store_true", help="Use the looser autoencoder policy"
    )

    p = add("train", cmd_train, "Train both stages")
    p.add_argument("--run", "--out", dest="run", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--vae-corpus", type=Path, help="Corpus for the autoencoder")

    for name, func, summary in (
        ("train-vae", cmd_train_vae, "Train the motion/appearance autoencoder"),
        ("train-diffusion", cmd_train_diffusion, "Train the speech-to-motion model"),
    ):
        p = add(name, func, summary)
        p.add_argument("--run", "--out", dest="run", type=Path, required=True)
        p.add_argument("--corpus", type=Path, required=True)

    p = add("generate", cmd_generate, "Generate a video from a trained run")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument(
        "--reference", type=Path, required=True, help="Clip whose first frame is used"
    )
    p.add_argument("--speech", type=Path, help="Clip supplying speech and poses")
    p.add_argument("--out", type=Path, help="Frame directory")
    p.add_argument("--sampler", choices=[k.value for k in SamplerKind])
    p.add_argument("--steps", type=int)
    p.add_argument("--pose-mode", choices=[k.value for k in PoseModeKind])
    p.add_argument(
        "--fixed-pose", type=float, nargs=3, metavar=("PITCH", "YAW", "ROLL")
    )
    p.add_argument(
        "--fix",
        action="append",
        choices=[g.value for g in LandmarkGroup],
        help="Landmark group held to the speech clip's track",
    )

    p = add("evaluate", cmd_evaluate, "Generate for a corpus and compute metrics")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, help="Report file")

    p = add("ablate", cmd_ablate, "Train and evaluate every ablation variant")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--eval-corpus", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_cli_logging(args.verbose)
    try:
        return int(args.func(args))
    except (
        CorruptContainerError,
        FileExistsError,
        FileNotFoundError,
        LockError,
        NonFiniteLossError,
        PermissionError,
        StageOrderError,
        ValueError,
    ) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
