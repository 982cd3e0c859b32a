"""Tests for the clip container."""

import json
from pathlib import Path

import numpy as np
import pytest

from avatar.talking.clip import VideoClip
from avatar.talking.container import (
    MANIFEST_NAME,
    CorruptContainerError,
    read_clip,
    read_manifest,
    write_clip,
)
from avatar.talking.models.run_config import CorpusSettings
from avatar.talking.models.shape import ShapeConfig
from avatar.talking.synthetic.corpus import generate_clip


def test_write_then_read_is_bit_identical(clip: VideoClip, tmp_path: Path) -> None:
    """Tests that a written clip reads back unchanged."""
    write_clip(clip, tmp_path / "clip")
    restored = read_clip(tmp_path / "clip")

    for name in ("frames", "landmarks", "poses", "speech_features"):
        np.testing.assert_array_equal(getattr(restored, name), getattr(clip, name))
    assert restored.fps == clip.fps
    assert restored.identity_id == clip.identity_id
    assert restored.masked is None


def test_mask_flags_survive(shape_cfg: ShapeConfig, tmp_path: Path) -> None:
    """Tests that per-frame mask flags are stored and restored."""
    masked = generate_clip(
        1, 1.0, 25.0, shape_cfg, CorpusSettings(mask_fraction=0.4)
    )
    assert masked.masked is not None
    write_clip(masked, tmp_path / "clip", shape_cfg)
    restored = read_clip(tmp_path / "clip")
    assert restored.masked is not None
    np.testing.assert_array_equal(restored.masked, masked.masked)


def test_manifest_layout(clip: VideoClip, tmp_path: Path) -> None:
    """Tests the manifest and raw array files of a container."""
    write_clip(clip, tmp_path / "clip")
    manifest = json.loads((tmp_path / "clip" / MANIFEST_NAME).read_text())

    assert manifest["dtype"] == "<f4"
    assert manifest["arrays"]["frames"]["shape"] == [50, 32, 32, 3]
    assert manifest["arrays"]["landmarks"]["file"] == "landmarks.f32"
    size = (tmp_path / "clip" / "poses.f32").stat().st_size
    assert size == 50 * 3 * 4


def test_invalid_clip_is_not_written(clip: VideoClip, tmp_path: Path) -> None:
    """Tests that write_clip validates before writing anything."""
    data = dict(clip)
    data["poses"] = clip.poses[:10]
    with pytest.raises(ValueError, match="Refusing to write invalid clip"):
        write_clip(VideoClip(**data), tmp_path / "clip")
    assert not (tmp_path / "clip").exists()


def test_missing_manifest(tmp_path: Path) -> None:
    """Tests that a directory without a manifest is not a container."""
    with pytest.raises(FileNotFoundError, match="Clip manifest not found"):
        read_clip(tmp_path)


def test_manifest_missing_array(clip: VideoClip, tmp_path: Path) -> None:
    """Tests that a manifest lacking a required array is corrupt."""
    write_clip(clip, tmp_path / "clip")
    path = tmp_path / "clip" / MANIFEST_NAME
    manifest = json.loads(path.read_text())
    del manifest["arrays"]["poses"]
    path.write_text(json.dumps(manifest))

    with pytest.raises(CorruptContainerError, match="lacks arrays: poses"):
        read_manifest(tmp_path / "clip")


def test_manifest_missing_key(clip: VideoClip, tmp_path: Path) -> None:
    """Tests that a manifest without fps is corrupt."""
    write_clip(clip, tmp_path / "clip")
    path = tmp_path / "clip" / MANIFEST_NAME
    manifest = json.loads(path.read_text())
    del manifest["fps"]
    path.write_text(json.dumps(manifest))

    with pytest.raises(CorruptContainerError, match="Invalid clip manifest"):
        read_clip(tmp_path / "clip")


def test_truncated_array(clip: VideoClip, tmp_path: Path) -> None:
    """Tests that an array file shorter than its declared shape is corrupt."""
    write_clip(clip, tmp_path / "clip")
    blob = tmp_path / "clip" / "speech_features.f32"
    blob.write_bytes(blob.read_bytes()[:-8])

    with pytest.raises(CorruptContainerError, match="speech_features.f32"):
        read_clip(tmp_path / "clip")


def test_missing_array_file(clip: VideoClip, tmp_path: Path) -> None:
    """Tests that a missing array file is reported."""
    write_clip(clip, tmp_path / "clip")
    (tmp_path / "clip" / "landmarks.f32").unlink()
    with pytest.raises(FileNotFoundError, match="Array file not found"):
        read_clip(tmp_path / "clip")


def test_misaligned_rows(clip: VideoClip, tmp_path: Path) -> None:
    """Tests that arrays with differing row counts are corrupt."""
    write_clip(clip, tmp_path / "clip")
    path = tmp_path / "clip" / MANIFEST_NAME
    manifest = json.loads(path.read_text())
    manifest["arrays"]["poses"]["shape"] = [25, 6]
    path.write_text(json.dumps(manifest))

    with pytest.raises(CorruptContainerError, match="'poses' has 25 rows"):
        read_clip(tmp_path / "clip")
