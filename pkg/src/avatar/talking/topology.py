"""The fixed 68-point landmark topology.

Indices follow the common 68-point face layout. "Left" and "right" refer to image
space: the left eye is the one with the smaller x coordinate in a frontal view.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Final

import numpy as np

from avatar.talking.models._enums import LandmarkGroup

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

NUM_LANDMARKS: Final = 68

JAW: Final = tuple(range(0, 17))
LEFT_BROW: Final = tuple(range(17, 22))
RIGHT_BROW: Final = tuple(range(22, 27))
NOSE_BRIDGE: Final = tuple(range(27, 31))
NOSTRILS: Final = tuple(range(31, 36))
LEFT_EYE: Final = tuple(range(36, 42))
RIGHT_EYE: Final = tuple(range(42, 48))
OUTER_LIPS: Final = tuple(range(48, 60))
INNER_LIPS: Final = tuple(range(60, 68))

NOSE_TIP: Final = 30
LEFT_EYE_OUTER: Final = 36
LEFT_EYE_INNER: Final = 39
RIGHT_EYE_INNER: Final = 42
RIGHT_EYE_OUTER: Final = 45
JAW_LEFT: Final = 0
JAW_RIGHT: Final = 16
MOUTH_LEFT: Final = 48
MOUTH_RIGHT: Final = 54

INNER_UPPER_LIP: Final = (61, 62, 63)
INNER_LOWER_LIP: Final = (67, 66, 65)
"""Paired with ``INNER_UPPER_LIP`` element by element."""

POLYLINES: Final[tuple[tuple[tuple[int, ...], bool], ...]] = (
    (JAW, False),
    (LEFT_BROW, False),
    (RIGHT_BROW, False),
    (NOSE_BRIDGE, False),
    (NOSTRILS, False),
    (LEFT_EYE, True),
    (RIGHT_EYE, True),
    (OUTER_LIPS, True),
    (INNER_LIPS, True),
)
"""Feature polylines as (indices, closed)."""

GROUPS: Final[dict[LandmarkGroup, tuple[int, ...]]] = {
    LandmarkGroup.jaw: JAW,
    LandmarkGroup.brows: LEFT_BROW + RIGHT_BROW,
    LandmarkGroup.nose: NOSE_BRIDGE + NOSTRILS,
    LandmarkGroup.eyes: LEFT_EYE + RIGHT_EYE,
    LandmarkGroup.mouth: OUTER_LIPS + INNER_LIPS,
    LandmarkGroup.pose_ring: JAW + NOSE_BRIDGE + NOSTRILS,
}


def group_of(index: int) -> LandmarkGroup:
    """Return the primary group a landmark index belongs to."""
    for group, indices in GROUPS.items():
        if group != LandmarkGroup.pose_ring and index in indices:
            return group
    raise ValueError(f"Landmark index {index} outside 0..{NUM_LANDMARKS - 1}")


def group_mask(
    groups: list[LandmarkGroup] | tuple[LandmarkGroup, ...],
) -> NDArray[np.bool_]:
    """Boolean mask over the 68 landmarks selecting the union of ``groups``."""
    mask = np.zeros(NUM_LANDMARKS, dtype=bool)
    for group in groups:
        mask[list(GROUPS[LandmarkGroup(group)])] = True
    return mask


def mouth_openness(landmarks: ArrayLike) -> NDArray[np.float64]:
    """Mean distance between paired inner upper and lower lip points.

    Args:
        landmarks: Array of shape ``[..., 68, 2]``.

    Returns:
        Array of shape ``[...]``, one openness value per frame.
    """
    points = np.asarray(landmarks, dtype=np.float64)
    upper = points[..., list(INNER_UPPER_LIP), :]
    lower = points[..., list(INNER_LOWER_LIP), :]
    return np.linalg.norm(upper - lower, axis=-1).mean(axis=-1)
