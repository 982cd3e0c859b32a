"""A procedural cartoon avatar with analytic landmarks.

The face is a canonical 3D landmark template (units of ``u``, y pointing down, z
towards the camera) rotated by the head pose and projected orthographically into
the frame. The jaw points lie on the head outline and follow roll only. Landmarks
depend on the motion parameters and the frame size alone; appearance parameters only
change how the face is painted.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Annotated, Final, Self

import annotated_types
import numpy as np
from pydantic import BaseModel, ConfigDict

from avatar.talking import topology
from avatar.talking.types import RGB, UnitInterval  # noqa: TC001

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from avatar.talking.models.shape import ShapeConfig

FRAME_FILL: Final = 0.8
HEAD_RX: Final = 0.62
HEAD_RY: Final = 0.8
NOSE_DEPTH: Final = 0.5
"""Depth of the nose tip in front of the head centre, in units of ``u``."""

MAX_POSE_RAD: Final = 0.6
FACE_SCALE_RANGE: Final = (1.0, 1.2)
EYE_SPACING_RANGE: Final = (0.8, 1.2)
BBOX_MARGIN_PX: Final = 2

EYE_X: Final = 0.26
EYE_Y: Final = -0.2
EYE_HALF_WIDTH: Final = 0.11
EYE_HALF_HEIGHT: Final = 0.05
MOUTH_Y: Final = 0.45
MOUTH_HALF_WIDTH: Final = 0.22
LIP_THICKNESS: Final = 0.06
UPPER_LIP_TRAVEL: Final = 0.03
LOWER_LIP_TRAVEL: Final = 0.16

EYE_WHITE: Final = np.array([0.96, 0.96, 0.94])
PUPIL: Final = np.array([0.08, 0.06, 0.05])
LIP: Final = np.array([0.72, 0.22, 0.25])
MOUTH_INSIDE: Final = np.array([0.3, 0.04, 0.06])
MASK_COLOR: Final = np.array([0.55, 0.75, 0.92])

PoseAngle = Annotated[
    float, annotated_types.Interval(ge=-MAX_POSE_RAD, le=MAX_POSE_RAD)
]


class AppearanceParams(BaseModel):
    """Colours and proportions of one identity."""

    model_config = ConfigDict(frozen=True)

    skin_color: RGB
    hair_color: RGB
    background_color: RGB
    face_scale: Annotated[
        float, annotated_types.Interval(ge=FACE_SCALE_RANGE[0], le=FACE_SCALE_RANGE[1])
    ] = 1.0
    """Size of the painted head relative to the landmark template."""

    eye_spacing: Annotated[
        float,
        annotated_types.Interval(ge=EYE_SPACING_RANGE[0], le=EYE_SPACING_RANGE[1]),
    ] = 1.0
    """Moves the pupils apart (above 1) or together (below 1)."""

    identity_seed: int = 0


class MotionParams(BaseModel):
    """Head pose and facial expression of one frame."""

    model_config = ConfigDict(frozen=True)

    pose: tuple[PoseAngle, PoseAngle, PoseAngle] = (0.0, 0.0, 0.0)
    """(pitch, yaw, roll) in radians."""

    mouth_open: UnitInterval = 0.0
    eyes_open: UnitInterval = 1.0

    @property
    def roll(self: Self) -> float:
        """In-plane rotation."""
        return self.pose[2]


def sample_appearance(identity_seed: int) -> AppearanceParams:
    """Draw the appearance of an identity, deterministically from its seed."""
    rng = np.random.default_rng([identity_seed, 0])
    skin = rng.uniform([0.55, 0.38, 0.28], [0.98, 0.82, 0.7])
    hair = rng.uniform(0.02, 0.5, size=3)
    background = rng.uniform(0.0, 1.0, size=3)
    return AppearanceParams(
        skin_color=tuple(float(c) for c in skin),  # type: ignore[arg-type]
        hair_color=tuple(float(c) for c in hair),  # type: ignore[arg-type]
        background_color=tuple(float(c) for c in background),  # type: ignore[arg-type]
        face_scale=float(rng.uniform(*FACE_SCALE_RANGE)),
        eye_spacing=float(rng.uniform(0.85, 1.15)),
        identity_seed=identity_seed,
    )


def unit_length(cfg: ShapeConfig) -> float:
    """Pixels per template unit ``u`` for this frame size."""
    return FRAME_FILL * min(cfg.H, cfg.W) / 2


def frame_center(cfg: ShapeConfig) -> tuple[float, float]:
    """Image position of the head centre."""
    return cfg.W / 2, cfg.H / 2


def _lip_profile(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return 1.0 - 0.6 * (np.abs(x) / MOUTH_HALF_WIDTH) ** 2


def landmark_template(mouth_open: float, eyes_open: float) -> NDArray[np.float64]:
    """The 68 landmarks of the unrotated face, ``[68, 3]`` in units of ``u``.

    Jaw rows hold the head-outline points with z = 0.
    """
    pts = np.zeros((topology.NUM_LANDMARKS, 3))

    phi = np.pi - np.arange(17) * np.pi / 16
    pts[list(topology.JAW), 0] = HEAD_RX * np.cos(phi)
    pts[list(topology.JAW), 1] = HEAD_RY * np.sin(phi)

    brow_x = np.linspace(0.12, 0.44, 5)
    brow_y = -0.42 + 0.05 * ((brow_x - 0.28) / 0.16) ** 2
    pts[list(topology.LEFT_BROW)] = np.stack(
        [-brow_x[::-1], brow_y[::-1], np.full(5, 0.33)], axis=1
    )
    pts[list(topology.RIGHT_BROW)] = np.stack(
        [brow_x, brow_y, np.full(5, 0.33)], axis=1
    )

    pts[list(topology.NOSE_BRIDGE)] = np.stack(
        [np.zeros(4), np.linspace(-0.2, 0.12, 4), np.linspace(0.36, NOSE_DEPTH, 4)],
        axis=1,
    )
    pts[list(topology.NOSTRILS)] = np.stack(
        [
            np.linspace(-0.12, 0.12, 5),
            0.2 + np.array([0.0, 0.02, 0.03, 0.02, 0.0]),
            np.full(5, 0.4),
        ],
        axis=1,
    )

    eh = EYE_HALF_HEIGHT * eyes_open
    ew = EYE_HALF_WIDTH
    # corner, upper, upper, corner, lower, lower; clockwise in the image
    eye_dx = np.array([-ew, -ew / 3, ew / 3, ew, ew / 3, -ew / 3])
    eye_dy = np.array([0.0, -eh, -eh, 0.0, eh, eh])
    for indices, cx in ((topology.LEFT_EYE, -EYE_X), (topology.RIGHT_EYE, EYE_X)):
        pts[list(indices)] = np.stack(
            [cx + eye_dx, EYE_Y + eye_dy, np.full(6, 0.34)], axis=1
        )

    upper_x = np.array([-0.14, -0.05, 0.0, 0.05, 0.14])
    outer_x = np.concatenate(
        [[-MOUTH_HALF_WIDTH], upper_x, [MOUTH_HALF_WIDTH], upper_x[::-1]]
    )
    outer_y = np.full(12, MOUTH_Y)
    upper_travel = UPPER_LIP_TRAVEL * mouth_open * _lip_profile(upper_x)
    outer_y[1:6] -= LIP_THICKNESS + upper_travel
    outer_y[7:12] += LIP_THICKNESS + LOWER_LIP_TRAVEL * mouth_open * _lip_profile(
        upper_x[::-1]
    )
    pts[list(topology.OUTER_LIPS)] = np.stack(
        [outer_x, outer_y, np.full(12, 0.36)], axis=1
    )

    inner_x = np.array([-0.14, -0.07, 0.0, 0.07, 0.14, 0.07, 0.0, -0.07])
    inner_y = np.full(8, MOUTH_Y)
    inner_y[1:4] -= UPPER_LIP_TRAVEL * mouth_open * _lip_profile(inner_x[1:4])
    inner_y[5:8] += LOWER_LIP_TRAVEL * mouth_open * _lip_profile(inner_x[5:8])
    pts[list(topology.INNER_LIPS)] = np.stack(
        [inner_x, inner_y, np.full(8, 0.36)], axis=1
    )
    return pts


def rotation_matrix(pitch: float, yaw: float, roll: float) -> NDArray[np.float64]:
    """R = Rz(roll) · Ry(yaw) · Rx(pitch)."""
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    cr, sr = math.cos(roll), math.sin(roll)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def project_landmarks(m: MotionParams, cfg: ShapeConfig) -> NDArray[np.float64]:
    """Image-space landmarks ``[68, 2]`` of the face posed by ``m``."""
    template = landmark_template(m.mouth_open, m.eyes_open)
    pitch, yaw, roll = m.pose
    projected = template @ rotation_matrix(pitch, yaw, roll).T

    jaw = list(topology.JAW)
    cr, sr = math.cos(roll), math.sin(roll)
    projected[jaw, 0] = cr * template[jaw, 0] - sr * template[jaw, 1]
    projected[jaw, 1] = sr * template[jaw, 0] + cr * template[jaw, 1]

    u = unit_length(cfg)
    cx, cy = frame_center(cfg)
    return np.stack([cx + u * projected[:, 0], cy + u * projected[:, 1]], axis=1)


def estimate_yaw(landmarks: ArrayLike) -> float:
    """Recover yaw from the nose-tip offset relative to the jaw line.

    The jaw end points fix the roll and the face width; the nose tip's sideways
    offset then gives the yaw. Exact for avatar landmarks with zero pitch.
    """
    points = np.asarray(landmarks, dtype=np.float64)
    left = points[topology.JAW_LEFT]
    right = points[topology.JAW_RIGHT]
    half_width = 0.5 * float(np.linalg.norm(right - left))
    if half_width == 0.0:
        raise ValueError("Jaw end points coincide; yaw is undefined")
    roll = math.atan2(right[1] - left[1], right[0] - left[0])
    offset = points[topology.NOSE_TIP] - 0.5 * (left + right)
    sideways = math.cos(roll) * offset[0] + math.sin(roll) * offset[1]
    ratio = sideways / half_width * HEAD_RX / NOSE_DEPTH
    return math.asin(max(-1.0, min(1.0, ratio)))


def _head_extent(a: AppearanceParams, roll: float, u: float) -> tuple[float, float]:
    rx = HEAD_RX * a.face_scale * u
    ry = HEAD_RY * a.face_scale * u
    c, s = math.cos(roll), math.sin(roll)
    return math.hypot(rx * c, ry * s), math.hypot(rx * s, ry * c)


def face_bounding_box(
    a: AppearanceParams, m: MotionParams, cfg: ShapeConfig
) -> tuple[int, int, int, int]:
    """Pixel box ``(x0, y0, x1, y1)``, end exclusive, outside which a frame is pure
    background."""
    u = unit_length(cfg)
    cx, cy = frame_center(cfg)
    ex, ey = _head_extent(a, m.roll, u)
    return (
        max(0, math.floor(cx - ex) - BBOX_MARGIN_PX),
        max(0, math.floor(cy - ey) - BBOX_MARGIN_PX),
        min(cfg.W, math.ceil(cx + ex) + BBOX_MARGIN_PX + 1),
        min(cfg.H, math.ceil(cy + ey) + BBOX_MARGIN_PX + 1),
    )


def _ellipse(
    xs: NDArray[np.float64],
    ys: NDArray[np.float64],
    center: tuple[float, float],
    radii: tuple[float, float],
    angle: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Soft coverage of a rotated ellipse and the local y coordinate of each pixel."""
    dx = xs - center[0]
    dy = ys - center[1]
    c, s = math.cos(angle), math.sin(angle)
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    a, b = max(radii[0], 1e-6), max(radii[1], 1e-6)
    rho = np.sqrt((local_x / a) ** 2 + (local_y / b) ** 2)
    return np.clip(0.5 - (rho - 1.0) * min(a, b), 0.0, 1.0), local_y


def segment_distance(
    xs: NDArray[np.float64], ys: NDArray[np.float64], segments: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Distance from every pixel to the nearest of ``segments`` (``[M, 2, 2]``)."""
    p = np.stack([xs, ys], axis=-1)[..., None, :]
    start = segments[:, 0]
    direction = segments[:, 1] - start
    length2 = np.maximum((direction**2).sum(-1), 1e-12)
    t = np.clip(((p - start) * direction).sum(-1) / length2, 0.0, 1.0)
    nearest = start + t[..., None] * direction
    return np.sqrt(((p - nearest) ** 2).sum(-1)).min(axis=-1)


def polyline_segments(
    points: NDArray[np.float64], indices: tuple[int, ...], closed: bool
) -> NDArray[np.float64]:
    """Segments ``[M, 2, 2]`` joining consecutive ``indices`` of ``points``."""
    idx = list(indices) + ([indices[0]] if closed else [])
    return np.stack([points[idx[:-1]], points[idx[1:]]], axis=1)


def _line(
    xs: NDArray[np.float64],
    ys: NDArray[np.float64],
    segments: NDArray[np.float64],
    width: float,
) -> NDArray[np.float64]:
    return np.clip(width / 2 + 0.5 - segment_distance(xs, ys, segments), 0.0, 1.0)


def _polygon_inside(
    xs: NDArray[np.float64], ys: NDArray[np.float64], polygon: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Even-odd point-in-polygon test."""
    inside = np.zeros(xs.shape, dtype=bool)
    x0, y0 = polygon[:, 0], polygon[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1, strict=True):
        crosses = (ay > ys) != (by > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (ys - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (xs < x_cross)
    return inside.astype(np.float64)


def _paint(
    image: NDArray[np.float64],
    coverage: NDArray[np.float64],
    color: NDArray[np.float64],
) -> None:
    image *= 1.0 - coverage[..., None]
    image += coverage[..., None] * color


def render_avatar_frame(
    a: AppearanceParams,
    m: MotionParams,
    cfg: ShapeConfig,
    masked: bool = False,
) -> tuple[NDArray[np.float32], NDArray[np.float32]]:
    """Render one frame and its landmarks.

    Args:
        a: Appearance of the identity.
        m: Pose and expression.
        cfg: Frame size.
        masked: Cover the mouth with a face mask. Landmarks are unaffected.

    Returns:
        ``(frame [H, W, 3] in [0, 1], landmarks [68, 2])``, both float32.
    """
    landmarks = project_landmarks(m, cfg)
    u = unit_length(cfg)
    center = frame_center(cfg)
    ys, xs = np.mgrid[0 : cfg.H, 0 : cfg.W].astype(np.float64)

    skin = np.asarray(a.skin_color)
    hair = np.asarray(a.hair_color)
    image = np.empty((cfg.H, cfg.W, 3))
    image[...] = np.asarray(a.background_color)

    head_radii = (HEAD_RX * a.face_scale * u, HEAD_RY * a.face_scale * u)
    head, local_y = _ellipse(xs, ys, center, head_radii, m.roll)
    _paint(image, head, skin)
    hairline = -0.55 * head_radii[1]
    _paint(image, head * np.clip(hairline - local_y + 0.5, 0.0, 1.0), hair)

    def group_lines(groups: tuple[tuple[int, ...], ...], closed: bool) -> NDArray:
        return np.concatenate(
            [polyline_segments(landmarks, g, closed) for g in groups], axis=0
        )

    jaw = group_lines((topology.JAW,), False)
    _paint(image, 0.6 * _line(xs, ys, jaw, 0.8), skin * 0.8)
    brows = group_lines((topology.LEFT_BROW, topology.RIGHT_BROW), False)
    _paint(image, _line(xs, ys, brows, 1.4), hair)
    nose = group_lines((topology.NOSE_BRIDGE, topology.NOSTRILS), False)
    _paint(image, _line(xs, ys, nose, 0.8), skin * 0.65)

    for eye, toward_nose in ((topology.LEFT_EYE, 1.0), (topology.RIGHT_EYE, -1.0)):
        corner_a = landmarks[eye[0]]
        corner_b = landmarks[eye[3]]
        eye_center = landmarks[list(eye)].mean(axis=0)
        half_w = 0.5 * float(np.linalg.norm(corner_b - corner_a))
        half_h = 0.5 * float(
            np.linalg.norm(landmarks[eye[1]] - landmarks[eye[5]])
            + np.linalg.norm(landmarks[eye[2]] - landmarks[eye[4]])
        ) / 2
        angle = math.atan2(corner_b[1] - corner_a[1], corner_b[0] - corner_a[0])
        white, _ = _ellipse(
            xs, ys, tuple(eye_center), (half_w, max(half_h, 0.3)), angle
        )
        _paint(image, white, EYE_WHITE)
        shift = (1.0 - a.eye_spacing) * toward_nose * half_w
        pupil_center = (
            eye_center[0] + shift * math.cos(angle),
            eye_center[1] + shift * math.sin(angle),
        )
        pupil_r = 0.45 * half_w
        pupil, _ = _ellipse(xs, ys, pupil_center, (pupil_r, pupil_r), 0.0)
        _paint(image, pupil * white, PUPIL)
        outline = polyline_segments(landmarks, eye, True)
        _paint(image, _line(xs, ys, outline, 0.6), PUPIL)

    mouth_inside = _polygon_inside(xs, ys, landmarks[list(topology.INNER_LIPS)])
    _paint(image, mouth_inside, MOUTH_INSIDE)
    lips = group_lines((topology.OUTER_LIPS, topology.INNER_LIPS), True)
    _paint(image, _line(xs, ys, lips, 1.0), LIP)

    if masked:
        mouth = landmarks[list(topology.OUTER_LIPS)]
        x0, y0 = mouth.min(axis=0) - 1.5
        x1, y1 = mouth.max(axis=0) + 1.5
        cover = ((xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)).astype(np.float64)
        _paint(image, cover, MASK_COLOR)

    np.clip(image, 0.0, 1.0, out=image)
    return image.astype(np.float32), landmarks.astype(np.float32)
