"""Tests for PNG frame export."""

import json
from pathlib import Path

import numpy as np
import pytest

from avatar.talking.export import (
    VIDEO_MANIFEST,
    export_frames,
    frame_file_name,
    load_frames,
    to_uint8,
)


def test_to_uint8() -> None:
    """Tests rounding, clipping and NaN handling."""
    values = np.array([[-0.5, 0.0, 0.5], [1.0, 2.0, np.nan]])
    assert to_uint8(values).tolist() == [[0, 0, 128], [255, 255, 0]]


def test_export_and_load(tmp_path: Path, rng: np.random.Generator) -> None:
    """Tests that exported frames load back within 8-bit quantisation."""
    frames = rng.random((3, 16, 24, 3)).astype(np.float32)
    manifest = export_frames(frames, tmp_path / "video", fps=25.0)

    assert manifest.n_frames == 3
    assert (manifest.height, manifest.width) == (16, 24)
    assert manifest.frames == [frame_file_name(i) for i in range(3)]
    assert (tmp_path / "video" / "frame_00002.png").exists()
    stored = json.loads((tmp_path / "video" / VIDEO_MANIFEST).read_text())
    assert stored["fps"] == 25.0

    loaded = load_frames(tmp_path / "video")
    assert loaded.shape == frames.shape
    assert loaded.dtype == np.float32
    np.testing.assert_allclose(loaded, frames, atol=0.5 / 255 + 1e-6)


def test_export_rejects_bad_shapes(tmp_path: Path) -> None:
    """Tests that only [N, H, W, 3] frames are exported."""
    with pytest.raises(ValueError, match=r"\[N, H, W, 3\]"):
        export_frames(np.zeros((16, 16, 3)), tmp_path, fps=25.0)
    with pytest.raises(ValueError, match=r"\[N, H, W, 3\]"):
        export_frames(np.zeros((2, 16, 16, 4)), tmp_path, fps=25.0)


def test_load_without_manifest(tmp_path: Path) -> None:
    """Tests that a directory without a manifest is refused."""
    with pytest.raises(FileNotFoundError, match="No video.json"):
        load_frames(tmp_path)
