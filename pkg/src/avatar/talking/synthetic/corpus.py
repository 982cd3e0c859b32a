"""Synthetic clips and corpus directories."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import TYPE_CHECKING, Final

import numpy as np
from scipy.signal import butter, sosfiltfilt

from avatar.talking._logging import null_logger
from avatar.talking.clip import VideoClip
from avatar.talking.container import read_clip, write_clip
from avatar.talking.models.manifest import CorpusIndex
from avatar.talking.models.run_config import CorpusSettings
from avatar.talking.synthetic.render import (
    MAX_POSE_RAD,
    MotionParams,
    render_avatar_frame,
    sample_appearance,
)
from avatar.talking.synthetic.speech import synth_script, synth_speech_features

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from avatar.talking.models.shape import ShapeConfig

logger: Final = null_logger(__name__)

CORPUS_INDEX_NAME: Final = "corpus.json"
POSE_AXIS_WEIGHTS: Final = (0.5, 1.0, 0.3)
"""Relative amplitude of (pitch, yaw, roll)."""

BLINK_RATE_HZ: Final = 0.3
BLINK_FRAMES: Final = 3


def identity_name(identity_seed: int) -> str:
    """Identity id used for clips drawn from ``identity_seed``."""
    return f"id{identity_seed:05d}"


def smooth_pose_trajectory(
    n_frames: int,
    fps: float,
    rng: np.random.Generator,
    amplitude: float = 0.3,
    cutoff_hz: float = 0.5,
) -> NDArray[np.float64]:
    """Low-pass filtered noise scaled to ``amplitude``, shape ``[N, 3]``.

    Yaw peaks at ``amplitude``; pitch and roll are scaled by
    :data:`POSE_AXIS_WEIGHTS`. All angles are clipped to the renderer's range.
    """
    noise = rng.standard_normal((n_frames, 3))
    if amplitude == 0 or n_frames < 2:
        return np.zeros((n_frames, 3))

    nyquist = fps / 2
    wn = min(cutoff_hz, 0.99 * nyquist)
    sos = butter(2, wn, btype="low", fs=fps, output="sos")
    default_padlen = 3 * (2 * len(sos) + 1)
    smooth = sosfiltfilt(sos, noise, axis=0, padlen=min(default_padlen, n_frames - 1))

    peak = np.abs(smooth).max(axis=0)
    smooth /= np.where(peak > 0, peak, 1.0)
    smooth *= amplitude * np.asarray(POSE_AXIS_WEIGHTS)
    return np.clip(smooth, -MAX_POSE_RAD, MAX_POSE_RAD)


def _blinks(n_frames: int, fps: float, rng: np.random.Generator) -> NDArray[np.float64]:
    eyes = np.ones(n_frames)
    n_blinks = rng.poisson(BLINK_RATE_HZ * n_frames / fps)
    for start in rng.integers(0, max(1, n_frames), size=n_blinks):
        eyes[start : start + BLINK_FRAMES] = 0.2
    return eyes


def _mask_flags(
    n_frames: int, fps: float, rng: np.random.Generator, fraction: float
) -> NDArray[np.bool_] | None:
    if fraction <= 0:
        return None
    flags = np.zeros(n_frames, dtype=bool)
    target = round(fraction * n_frames)
    while flags.sum() < target:
        length = max(1, min(round(fps), target))
        start = int(rng.integers(0, max(1, n_frames - length + 1)))
        flags[start : start + length] = True
    return flags


def generate_clip(
    identity_seed: int,
    duration_s: float,
    fps: float,
    cfg: ShapeConfig,
    settings: CorpusSettings | None = None,
) -> VideoClip:
    """Render a talking clip of one synthetic identity.

    Args:
        identity_seed: Seeds the appearance and all motion of the clip.
        duration_s: Clip length in seconds.
        fps: Frame rate.
        cfg: Frame size and speech width.
        settings: Pose dynamics, silence and mask fractions. Defaults apply when
            omitted; the corpus seed and size fields are ignored.

    Returns:
        A clip of ``round(duration_s · fps)`` frames. Identical arguments give
        bit-identical clips.

    Raises:
        ValueError: If the clip would have no frames.
    """
    settings = settings or CorpusSettings()
    n_frames = round(duration_s * fps)
    if n_frames < 1:
        raise ValueError(
            f"duration_s · fps must give at least one frame, got {duration_s}·{fps}"
        )

    appearance = sample_appearance(identity_seed)
    rng = np.random.default_rng([identity_seed, 1])
    poses = smooth_pose_trajectory(
        n_frames, fps, rng, settings.pose_amplitude, settings.pose_cutoff_hz
    )
    script = synth_script(n_frames, fps, rng, settings.silence_fraction)
    eyes = _blinks(n_frames, fps, rng)
    masked = _mask_flags(n_frames, fps, rng, settings.mask_fraction)
    features, mouth_track = synth_speech_features(script, cfg, seed=identity_seed)

    frames = np.empty((n_frames, cfg.H, cfg.W, 3), dtype=np.float32)
    landmarks = np.empty((n_frames, cfg.K, 2), dtype=np.float32)
    for i in range(n_frames):
        motion = MotionParams(
            pose=(float(poses[i, 0]), float(poses[i, 1]), float(poses[i, 2])),
            mouth_open=float(mouth_track[i]),
            eyes_open=float(eyes[i]),
        )
        covered = bool(masked[i]) if masked is not None else False
        frames[i], landmarks[i] = render_avatar_frame(
            appearance, motion, cfg, masked=covered
        )

    logger.debug(f"Generated {n_frames} frames for identity {identity_seed}")
    return VideoClip(
        frames=frames,
        landmarks=landmarks,
        poses=poses,
        speech_features=features,
        fps=fps,
        identity_id=identity_name(identity_seed),
        masked=masked,
    )


def _write_one(
    identity_seed: int, settings: CorpusSettings, cfg: ShapeConfig, out_dir: Path
) -> str:
    clip = generate_clip(
        settings.seed + identity_seed, settings.duration_s, settings.fps, cfg, settings
    )
    write_clip(clip, out_dir / clip.identity_id, cfg)
    return clip.identity_id


def build_corpus(
    settings: CorpusSettings, cfg: ShapeConfig, out_dir: Path | str
) -> CorpusIndex:
    """Write one clip container per identity and a ``corpus.json`` index.

    Clips are rendered in a process pool when ``settings.workers > 1``.

    Returns:
        The corpus index that was written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = range(settings.n_identities)

    if settings.workers > 1:
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            names = list(
                pool.map(
                    _write_one,
                    seeds,
                    [settings] * len(seeds),
                    [cfg] * len(seeds),
                    [out_dir] * len(seeds),
                )
            )
    else:
        names = [_write_one(seed, settings, cfg, out_dir) for seed in seeds]

    index = CorpusIndex(clips=names, fps=settings.fps)
    (out_dir / CORPUS_INDEX_NAME).write_text(index.model_dump_json(indent=2))
    logger.info(f"Wrote corpus of {len(names)} clips to {out_dir}")
    return index


def read_corpus_index(corpus_dir: Path | str) -> CorpusIndex:
    """Load the ``corpus.json`` of a corpus directory."""
    path = Path(corpus_dir) / CORPUS_INDEX_NAME
    if not path.exists():
        raise FileNotFoundError(f"Corpus index not found at: '{path}'")
    try:
        return CorpusIndex.model_validate_json(path.read_text())
    except ValueError as e:
        raise ValueError(f"Invalid corpus index at '{path}': {e}") from e


def read_corpus(corpus_dir: Path | str) -> tuple[list[str], list[VideoClip]]:
    """Every clip of a corpus directory, with its container name.

    Raises:
        FileNotFoundError: If the index or a container is missing.
        ValueError: If the corpus lists no clips.
    """
    corpus_dir = Path(corpus_dir)
    index = read_corpus_index(corpus_dir)
    if not index.clips:
        raise ValueError(f"Corpus at '{corpus_dir}' lists no clips")
    clips = [read_clip(corpus_dir / name) for name in index.clips]
    logger.debug(f"Read {len(clips)} clips from {corpus_dir}")
    return list(index.clips), clips
