"""Frame-by-frame filtration of talking clips.

Each frame is checked for a frontal face, for stability relative to the previous
frame, and for active unmasked speech. Maximal runs of passing frames that are long
enough are cut out, centred on the face and returned as new clips.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import TYPE_CHECKING, Final

import numpy as np

from avatar.talking import topology
from avatar.talking._logging import null_logger
from avatar.talking.clip import VideoClip
from avatar.talking.container import read_clip, write_clip
from avatar.talking.models.manifest import CorpusIndex
from avatar.talking.models.reports import FilterPolicy, FilterReport, FrameVerdict
from avatar.talking.synthetic.corpus import CORPUS_INDEX_NAME, read_corpus_index

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

logger: Final = null_logger(__name__)

FRONTAL_ANGLE_DEG: Final = 180.0
REPORT_SUFFIX: Final = ".filter.json"


class DegenerateGeometryError(ValueError):
    """Raised when an eye corner coincides with the nose tip."""


def frontal_angle(landmarks: ArrayLike) -> float:
    """Clockwise angle at the nose tip between the two outer eye-corner rays.

    The left-corner ray is measured against the horizontal through the nose tip, and
    the right-corner ray against the same horizontal mirrored. A symmetric frontal
    face gives 180 degrees; the value is invariant to translation and uniform
    scaling of the landmarks.

    Args:
        landmarks: ``[68, 2]`` image coordinates.

    Returns:
        The angle in degrees, in [0, 360).

    Raises:
        DegenerateGeometryError: If an outer eye corner coincides with the nose tip.
    """
    points = np.asarray(landmarks, dtype=np.float64)
    tip = points[topology.NOSE_TIP]
    left = points[topology.LEFT_EYE_OUTER] - tip
    right = points[topology.RIGHT_EYE_OUTER] - tip
    if not np.any(left) or not np.any(right):
        raise DegenerateGeometryError(
            "An outer eye corner coincides with the nose tip; the frontal angle is "
            "undefined"
        )
    left_deg = math.degrees(math.atan2(left[1], left[0]))
    right_deg = math.degrees(math.atan2(-right[1], right[0]))
    return (right_deg - left_deg) % 360.0


def inter_frame_displacement(prev: ArrayLike, next: ArrayLike) -> float:
    """Largest Euclidean landmark displacement between two frames, in pixels.

    Raises:
        ValueError: If the landmark arrays differ in shape.
    """
    a = np.asarray(prev, dtype=np.float64)
    b = np.asarray(next, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"Landmark shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(b - a, axis=-1).max())


def silence_mask(speech_features: ArrayLike, threshold: float) -> NDArray[np.bool_]:
    """Mark frames whose speech-feature L2 energy is strictly below ``threshold``."""
    features = np.asarray(speech_features, dtype=np.float64)
    return np.linalg.norm(features, axis=-1) < threshold


def passing_runs(passed: ArrayLike, min_length: int) -> list[tuple[int, int]]:
    """Maximal runs of True with at least ``min_length`` frames.

    Returns:
        ``(start, end)`` pairs, ``end`` exclusive, in order.
    """
    flags = np.asarray(passed, dtype=bool)
    padded = np.concatenate([[False], flags, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2]
    return [
        (int(s), int(e))
        for s, e in zip(starts, ends, strict=True)
        if e - s >= max(1, min_length)
    ]


def center_crop(clip: VideoClip) -> VideoClip:
    """Shift a clip so the landmark centroid of its first frame sits at the centre.

    The shift is a whole number of pixels, with edge padding. It is limited so that
    every landmark of the clip stays inside the frame.
    """
    h, w = clip.frames.shape[1:3]
    centroid = clip.landmarks[0].astype(np.float64).mean(axis=0)
    dx = round(w / 2 - centroid[0])
    dy = round(h / 2 - centroid[1])

    lo = clip.landmarks.reshape(-1, 2).min(axis=0)
    hi = clip.landmarks.reshape(-1, 2).max(axis=0)
    dx = int(np.clip(dx, -math.floor(lo[0]), math.floor(w - 1 - hi[0])))
    dy = int(np.clip(dy, -math.floor(lo[1]), math.floor(h - 1 - hi[1])))
    if dx == 0 and dy == 0:
        return clip

    pad = ((0, 0), (max(dy, 0), max(-dy, 0)), (max(dx, 0), max(-dx, 0)), (0, 0))
    padded = np.pad(clip.frames, pad, mode="edge")
    y0 = max(-dy, 0)
    x0 = max(-dx, 0)
    frames = padded[:, y0 : y0 + h, x0 : x0 + w]
    logger.debug(f"Centre crop shifted clip '{clip.identity_id}' by ({dx}, {dy})")
    return VideoClip(
        frames=frames,
        landmarks=clip.landmarks + np.array([dx, dy], dtype=np.float32),
        poses=clip.poses,
        speech_features=clip.speech_features,
        fps=clip.fps,
        identity_id=clip.identity_id,
        masked=clip.masked,
    )


def frame_verdicts(clip: VideoClip, policy: FilterPolicy) -> list[FrameVerdict]:
    """Run the frontal, stability and speaking checks on every frame."""
    height = clip.frames.shape[1]
    tolerance = policy.angle_tolerance()
    max_displacement = policy.displacement_threshold(height)
    silent = silence_mask(clip.speech_features, policy.silence_threshold())
    masked = clip.mask_flags

    verdicts = []
    for i in range(clip.n_frames):
        try:
            angle = frontal_angle(clip.landmarks[i])
            frontal_ok = abs(angle - FRONTAL_ANGLE_DEG) <= tolerance
        except DegenerateGeometryError:
            angle, frontal_ok = float("nan"), False
        displacement = (
            inter_frame_displacement(clip.landmarks[i - 1], clip.landmarks[i])
            if i > 0
            else 0.0
        )
        verdicts.append(
            FrameVerdict(
                frontal_ok=frontal_ok,
                stable_ok=displacement <= max_displacement,
                speaking_ok=not (silent[i] or masked[i]),
                angle_deg=angle,
                displacement_px=displacement,
            )
        )
    return verdicts


def filter_video(
    clip: VideoClip, policy: FilterPolicy
) -> tuple[FilterReport, list[VideoClip]]:
    """Filter one clip and cut out its retained segments.

    Args:
        clip: A clip that validates.
        policy: Filtration thresholds.

    Returns:
        The report and one centre-cropped sub-clip per retained segment. An empty
        segment list is a valid outcome.
    """
    verdicts = frame_verdicts(clip, policy)
    segments = passing_runs(
        [v.passed for v in verdicts], policy.min_segment_frames(clip.fps)
    )
    report = FilterReport(
        identity_id=clip.identity_id,
        fps=clip.fps,
        policy=policy,
        per_frame=verdicts,
        segments=segments,
    )
    sub_clips = [center_crop(clip.sub_clip(start, end)) for start, end in segments]
    logger.info(
        f"Clip '{clip.identity_id}': kept {report.retained_frames} of "
        f"{clip.n_frames} frames in {len(segments)} segments"
    )
    return report, sub_clips


def _filter_one(
    name: str, corpus_dir: Path, out_dir: Path, policy: FilterPolicy
) -> list[str]:
    clip = read_clip(corpus_dir / name)
    report, segments = filter_video(clip, policy)
    (out_dir / f"{name}{REPORT_SUFFIX}").write_text(report.model_dump_json(indent=2))
    names = []
    for k, segment in enumerate(segments):
        segment_name = f"{name}_seg{k:03d}"
        write_clip(segment, out_dir / segment_name)
        names.append(segment_name)
    return names


def filter_corpus(
    corpus_dir: Path | str,
    out_dir: Path | str,
    policy: FilterPolicy,
    workers: int = 1,
) -> CorpusIndex:
    """Filter every clip of a corpus directory into a new corpus directory.

    Writes each retained segment as a clip container, a JSON filter report per
    source clip, and a ``corpus.json`` listing the segments.

    Returns:
        The index of the filtered corpus.
    """
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = read_corpus_index(corpus_dir)

    if workers > 1:
        n = len(source.clips)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(
                pool.map(
                    _filter_one,
                    source.clips,
                    [corpus_dir] * n,
                    [out_dir] * n,
                    [policy] * n,
                )
            )
    else:
        nested = [
            _filter_one(name, corpus_dir, out_dir, policy) for name in source.clips
        ]

    index = CorpusIndex(
        clips=[name for names in nested for name in names], fps=source.fps
    )
    (out_dir / CORPUS_INDEX_NAME).write_text(index.model_dump_json(indent=2))
    logger.info(
        f"Filtered {len(source.clips)} clips into {len(index.clips)} segments at "
        f"{out_dir}"
    )
    return index
