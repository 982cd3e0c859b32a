"""Tests for the ridge read-out."""

import numpy as np
import pytest

from avatar.talking.vae.readout import LATENT_READOUT, RidgeReadout, frame_features


@pytest.fixture
def linear_data(
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Features with landmarks that are an exact affine function of them."""
    features = rng.normal(size=(60, 5))
    weights = rng.normal(size=(5, 136))
    offset = rng.normal(size=136)
    landmarks = (features @ weights + offset).reshape(60, 68, 2)
    return features, landmarks


def test_fit_recovers_affine_map(linear_data: tuple[np.ndarray, np.ndarray]) -> None:
    """Tests that a near-zero penalty recovers an exact affine relation."""
    features, landmarks = linear_data
    readout = RidgeReadout.fit(features, landmarks, ridge=1e-12)
    np.testing.assert_allclose(readout.predict(features), landmarks, atol=1e-6)
    assert readout.weights.shape == (5, 136)


def test_ridge_shrinks_weights(linear_data: tuple[np.ndarray, np.ndarray]) -> None:
    """Tests that a larger penalty gives smaller weights."""
    features, landmarks = linear_data
    loose = RidgeReadout.fit(features, landmarks, ridge=1e-6)
    tight = RidgeReadout.fit(features, landmarks, ridge=10.0)
    assert np.linalg.norm(tight.weights) < np.linalg.norm(loose.weights)


def test_arrays_round_trip(linear_data: tuple[np.ndarray, np.ndarray]) -> None:
    """Tests that a stored read-out predicts the same landmarks."""
    features, landmarks = linear_data
    readout = RidgeReadout.fit(features, landmarks)
    arrays = readout.to_arrays(LATENT_READOUT)
    assert set(arrays) == {
        "latent_readout.x_mean",
        "latent_readout.y_mean",
        "latent_readout.weights",
    }
    restored = RidgeReadout.from_arrays(arrays, LATENT_READOUT)
    np.testing.assert_array_equal(restored.predict(features), readout.predict(features))
    with pytest.raises(KeyError):
        RidgeReadout.from_arrays(arrays, "frame_readout")


def test_mismatched_inputs(linear_data: tuple[np.ndarray, np.ndarray]) -> None:
    """Tests the shape errors of fit and predict."""
    features, landmarks = linear_data
    with pytest.raises(ValueError, match="row counts"):
        RidgeReadout.fit(features[:5], landmarks[:4])
    with pytest.raises(ValueError, match="row counts"):
        RidgeReadout.fit(features[:0], landmarks[:0])
    readout = RidgeReadout.fit(features, landmarks)
    with pytest.raises(ValueError, match="expects 5 features"):
        readout.predict(features[:, :4])


def test_frame_features(rng: np.random.Generator) -> None:
    """Tests that frame features flatten one row per frame."""
    frames = rng.random((3, 32, 32, 3))
    features = frame_features(frames)
    assert features.shape[0] == 3
    assert features.ndim == 2
