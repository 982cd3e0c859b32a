"""The on-disk clip container.

A container is a directory holding ``manifest.json`` and one raw little-endian
float32 file per array, in row-major order.
"""

from __future__ import annotations

from pathlib import Path
from typing import Final

import numpy as np
from pydantic import ValidationError

from avatar.talking._logging import null_logger
from avatar.talking._utils import path_exists
from avatar.talking.clip import VideoClip, validate_clip
from avatar.talking.models.manifest import ArrayEntry, ClipManifest
from avatar.talking.models.shape import ShapeConfig

logger: Final = null_logger(__name__)

MANIFEST_NAME: Final = "manifest.json"
LITTLE_ENDIAN_F32: Final = np.dtype("<f4")
REQUIRED_ARRAYS: Final = ("frames", "landmarks", "poses", "speech_features")


class CorruptContainerError(ValueError):
    """Raised when a manifest and its array files disagree."""


def write_float32(array: np.ndarray, path: Path) -> ArrayEntry:
    """Write ``array`` as raw little-endian float32 and describe it."""
    np.ascontiguousarray(array, dtype=LITTLE_ENDIAN_F32).tofile(path)
    return ArrayEntry(file=path.name, shape=list(array.shape))


def read_float32(entry: ArrayEntry, directory: Path) -> np.ndarray:
    """Read an array described by ``entry`` from ``directory``.

    Raises:
        FileNotFoundError: If the array file is missing.
        CorruptContainerError: If the file does not hold exactly ``entry.size``
            floats.
    """
    path = directory / entry.file
    if not path_exists(path):
        raise FileNotFoundError(f"Array file not found at: '{path}'")
    n_bytes = path.stat().st_size
    if n_bytes != entry.size * LITTLE_ENDIAN_F32.itemsize:
        raise CorruptContainerError(
            f"'{entry.file}' holds {n_bytes} bytes but the manifest declares shape "
            f"{entry.shape} ({entry.size} float32 values)"
        )
    data = np.fromfile(path, dtype=LITTLE_ENDIAN_F32)
    return data.astype(np.float32).reshape(entry.shape)


def write_clip(
    clip: VideoClip, path: Path | str, cfg: ShapeConfig | None = None
) -> None:
    """Write a clip container at ``path``.

    Args:
        clip: The clip to write.
        path: Container directory, created if needed.
        cfg: Shape configuration to validate against. Inferred from the clip's
            frame size and speech width when omitted.

    Raises:
        ValueError: If the clip does not validate.
    """
    path = Path(path)
    if cfg is None:
        cfg = _infer_shape(clip)
    report = validate_clip(clip, cfg)
    if not report.ok:
        raise ValueError(f"Refusing to write invalid clip: {report.violations}")

    path.mkdir(parents=True, exist_ok=True)
    arrays = {
        "frames": clip.frames,
        "landmarks": clip.landmarks,
        "poses": clip.poses,
        "speech_features": clip.speech_features,
    }
    if clip.masked is not None:
        arrays["masked"] = clip.masked.astype(np.float32)

    entries = {
        name: write_float32(array, path / f"{name}.f32")
        for name, array in arrays.items()
    }
    manifest = ClipManifest(fps=clip.fps, identity_id=clip.identity_id, arrays=entries)
    (path / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))
    logger.debug(f"Wrote clip '{clip.identity_id}' ({clip.n_frames} frames) to {path}")


def read_manifest(path: Path | str) -> ClipManifest:
    """Load and validate the manifest of a clip container.

    Raises:
        FileNotFoundError: If there is no manifest.
        CorruptContainerError: If the manifest is invalid or lacks a required array.
    """
    manifest_path = Path(path) / MANIFEST_NAME
    if not path_exists(manifest_path):
        raise FileNotFoundError(f"Clip manifest not found at: '{manifest_path}'")
    try:
        manifest = ClipManifest.model_validate_json(manifest_path.read_text())
    except ValidationError as e:
        raise CorruptContainerError(
            f"Invalid clip manifest at '{manifest_path}': {e}"
        ) from e

    missing = [name for name in REQUIRED_ARRAYS if name not in manifest.arrays]
    if missing:
        raise CorruptContainerError(
            f"Clip manifest at '{manifest_path}' lacks arrays: {', '.join(missing)}"
        )
    return manifest


def read_clip(path: Path | str) -> VideoClip:
    """Read a clip container written by :func:`write_clip`.

    Raises:
        FileNotFoundError: If the manifest or an array file is missing.
        CorruptContainerError: If the manifest is invalid or an array file does not
            match its declared shape.
    """
    path = Path(path)
    manifest = read_manifest(path)
    arrays = {
        name: read_float32(entry, path) for name, entry in manifest.arrays.items()
    }
    masked = arrays.get("masked")
    n = arrays["frames"].shape[0] if arrays["frames"].ndim else 0
    for name, array in arrays.items():
        if array.ndim == 0 or array.shape[0] != n:
            raise CorruptContainerError(
                f"Array '{name}' has {array.shape[0] if array.ndim else 0} rows, "
                f"expected {n}"
            )
    return VideoClip(
        frames=arrays["frames"],
        landmarks=arrays["landmarks"],
        poses=arrays["poses"],
        speech_features=arrays["speech_features"],
        fps=manifest.fps,
        identity_id=manifest.identity_id,
        masked=None if masked is None else masked > 0.5,
    )


def _infer_shape(clip: VideoClip) -> ShapeConfig:
    try:
        return ShapeConfig(
            H=clip.frames.shape[1],
            W=clip.frames.shape[2],
            d_s=clip.speech_features.shape[1],
        )
    except (IndexError, ValidationError) as e:
        raise ValueError(f"Cannot infer a shape configuration for clip: {e}") from e
