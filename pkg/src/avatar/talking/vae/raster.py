"""Landmark images fed to the motion encoder.

A landmark image carries only the positions of facial features: anti-aliased dots
joined by feature polylines, one colour per feature group, on black.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Final

import numpy as np

from avatar.talking import topology
from avatar.talking.models._enums import LandmarkGroup
from avatar.talking.synthetic.render import polyline_segments, segment_distance

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from avatar.talking.models.shape import ShapeConfig

DOT_RADIUS_PX: Final = 2.0
LINE_WIDTH_PX: Final = 1.0

GROUP_COLORS: Final[dict[LandmarkGroup, tuple[float, float, float]]] = {
    LandmarkGroup.jaw: (1.0, 1.0, 1.0),
    LandmarkGroup.brows: (1.0, 0.85, 0.0),
    LandmarkGroup.nose: (0.0, 1.0, 0.2),
    LandmarkGroup.eyes: (0.0, 0.6, 1.0),
    LandmarkGroup.mouth: (1.0, 0.1, 0.3),
}


def _check_bounds(points: NDArray[np.float64], cfg: ShapeConfig) -> None:
    if points.shape != (cfg.K, 2):
        raise ValueError(f"Landmarks must have shape ({cfg.K}, 2), got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValueError("Landmarks must be finite")
    x, y = points[:, 0], points[:, 1]
    if x.min() < 0 or y.min() < 0 or x.max() >= cfg.W or y.max() >= cfg.H:
        raise ValueError(
            f"Landmark out of bounds for a {cfg.W}x{cfg.H} frame: x in "
            f"[{x.min():.2f}, {x.max():.2f}], y in [{y.min():.2f}, {y.max():.2f}]"
        )


def rasterize_landmarks(landmarks: ArrayLike, cfg: ShapeConfig) -> NDArray[np.float32]:
    """Draw one landmark image.

    Args:
        landmarks: ``[K, 2]`` pixel coordinates inside the frame.
        cfg: Frame size.

    Returns:
        ``[H, W, 3]`` float32 image in [0, 1]. Pixels further than the dot radius
        from every landmark and off every polyline are exactly zero.

    Raises:
        ValueError: If a landmark lies outside ``[0, W) x [0, H)``.
    """
    points = np.asarray(landmarks, dtype=np.float64)
    _check_bounds(points, cfg)

    ys, xs = np.mgrid[0 : cfg.H, 0 : cfg.W].astype(np.float64)
    image = np.zeros((cfg.H, cfg.W, 3))
    for indices, closed in topology.POLYLINES:
        color = np.asarray(GROUP_COLORS[topology.group_of(indices[0])])
        segments = polyline_segments(points, indices, closed)
        line = np.clip(
            LINE_WIDTH_PX / 2 + 0.5 - segment_distance(xs, ys, segments), 0.0, 1.0
        )
        dist = np.sqrt(
            (xs[..., None] - points[list(indices), 0]) ** 2
            + (ys[..., None] - points[list(indices), 1]) ** 2
        ).min(axis=-1)
        dots = np.clip(DOT_RADIUS_PX + 0.5 - dist, 0.0, 1.0)
        coverage = np.maximum(0.5 * line, dots)
        image = np.maximum(image, coverage[..., None] * color)
    return image.astype(np.float32)


def rasterize_sequence(landmarks: ArrayLike, cfg: ShapeConfig) -> NDArray[np.float32]:
    """Rasterize ``[N, K, 2]`` landmarks into ``[N, H, W, 3]`` images."""
    frames = np.asarray(landmarks, dtype=np.float64)
    if frames.ndim != 3:
        raise ValueError(f"Expected [N, K, 2] landmarks, got shape {frames.shape}")
    out = np.empty((frames.shape[0], cfg.H, cfg.W, 3), dtype=np.float32)
    for i, points in enumerate(frames):
        out[i] = rasterize_landmarks(points, cfg)
    return out
