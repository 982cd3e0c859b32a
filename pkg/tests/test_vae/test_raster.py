"""Tests for landmark rasterization."""

import numpy as np
import pytest

from avatar.talking.models.shape import ShapeConfig
from avatar.talking.synthetic.render import MotionParams, project_landmarks
from avatar.talking.vae.raster import rasterize_landmarks, rasterize_sequence


@pytest.fixture
def cfg() -> ShapeConfig:
    """64x64 frames."""
    return ShapeConfig(H=64, W=64)


@pytest.fixture
def landmarks(cfg: ShapeConfig) -> np.ndarray:
    """Frontal landmarks with a half-open mouth."""
    return project_landmarks(MotionParams(mouth_open=0.5), cfg)


def test_raster_shape_and_range(cfg: ShapeConfig, landmarks: np.ndarray) -> None:
    """Tests the image shape, dtype and value range."""
    image = rasterize_landmarks(landmarks, cfg)
    assert image.shape == (64, 64, 3)
    assert image.dtype == np.float32
    assert 0.0 <= image.min() <= image.max() <= 1.0
    assert image.max() > 0.5


def test_far_pixels_are_black(cfg: ShapeConfig, landmarks: np.ndarray) -> None:
    """Tests that pixels away from every landmark are exactly zero."""
    image = rasterize_landmarks(landmarks, cfg)
    np.testing.assert_array_equal(image[0, 0], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(image[:3].max(), 0.0)


def test_translation_shifts_the_raster(cfg: ShapeConfig, landmarks: np.ndarray) -> None:
    """Tests that an integer shift of the landmarks shifts the image."""
    shift = 3
    moved = landmarks + np.array([shift, 0.0])
    a = rasterize_landmarks(landmarks, cfg)
    b = rasterize_landmarks(moved, cfg)
    np.testing.assert_allclose(b[:, shift:], a[:, :-shift], atol=1e-5)


def test_raster_is_deterministic(cfg: ShapeConfig, landmarks: np.ndarray) -> None:
    """Tests that the raster only depends on the landmarks."""
    np.testing.assert_array_equal(
        rasterize_landmarks(landmarks, cfg), rasterize_landmarks(landmarks.copy(), cfg)
    )


def test_out_of_bounds_landmark(cfg: ShapeConfig, landmarks: np.ndarray) -> None:
    """Tests that landmarks outside the frame are refused."""
    bad = landmarks.copy()
    bad[10, 0] = 64.0
    with pytest.raises(ValueError, match="out of bounds"):
        rasterize_landmarks(bad, cfg)
    with pytest.raises(ValueError, match="shape"):
        rasterize_landmarks(landmarks[:10], cfg)


def test_rasterize_sequence(cfg: ShapeConfig, landmarks: np.ndarray) -> None:
    """Tests that sequences are rasterized frame by frame."""
    track = np.stack([landmarks, landmarks + 1.0])
    images = rasterize_sequence(track, cfg)
    assert images.shape == (2, 64, 64, 3)
    np.testing.assert_array_equal(images[0], rasterize_landmarks(landmarks, cfg))
    with pytest.raises(ValueError, match=r"\[N, K, 2\]"):
        rasterize_sequence(landmarks, cfg)
