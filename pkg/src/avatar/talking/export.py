"""Writing generated frames as numbered PNG images."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Final

import numpy as np
from PIL import Image

from avatar.talking._logging import null_logger
from avatar.talking.models.manifest import VideoManifest

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

logger: Final = null_logger(__name__)

VIDEO_MANIFEST: Final = "video.json"


def frame_file_name(index: int) -> str:
    """File name of frame ``index``."""
    return f"frame_{index:05d}.png"


def to_uint8(frames: ArrayLike) -> np.ndarray:
    """``[..., 3]`` frames in [0, 1] to 8-bit RGB; values outside are clipped."""
    data = np.nan_to_num(np.asarray(frames, dtype=np.float32), nan=0.0)
    return np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def export_frames(
    frames: ArrayLike, out_dir: Path | str, fps: float
) -> VideoManifest:
    """Write ``[N, H, W, 3]`` frames and a ``video.json`` into ``out_dir``.

    Args:
        frames: Frames in [0, 1].
        out_dir: Target directory; created if missing.
        fps: Frame rate recorded in the manifest.

    Returns:
        The manifest that was written.

    Raises:
        ValueError: If ``frames`` is not ``[N, H, W, 3]``.
    """
    data = to_uint8(frames)
    if data.ndim != 4 or data.shape[-1] != 3:
        raise ValueError(f"Frames must be [N, H, W, 3], got {data.shape}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(data):
        name = frame_file_name(i)
        Image.fromarray(frame).save(out_dir / name)
        names.append(name)
    manifest = VideoManifest(
        fps=fps,
        n_frames=data.shape[0],
        height=data.shape[1],
        width=data.shape[2],
        frames=names,
    )
    (out_dir / VIDEO_MANIFEST).write_text(
        manifest.model_dump_json(indent=2), encoding="utf-8"
    )
    logger.info(f"Exported {len(names)} frames to {out_dir}")
    return manifest


def load_frames(out_dir: Path | str) -> np.ndarray:
    """Read exported frames back as ``[N, H, W, 3]`` float32 in [0, 1].

    Raises:
        FileNotFoundError: If the manifest or a frame is missing.
        ValueError: If the manifest is invalid.
    """
    out_dir = Path(out_dir)
    manifest_path = out_dir / VIDEO_MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"No {VIDEO_MANIFEST} in '{out_dir}'")
    manifest = VideoManifest.model_validate_json(
        manifest_path.read_text(encoding="utf-8")
    )
    frames = [
        np.asarray(Image.open(out_dir / name).convert("RGB"), dtype=np.float32)
        for name in manifest.frames
    ]
    if not frames:
        return np.zeros((0, manifest.height, manifest.width, 3), dtype=np.float32)
    return np.stack(frames) / np.float32(255.0)
