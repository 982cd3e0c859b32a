"""Objective metrics of generated talking videos.

Frame and landmark metrics take numpy arrays (or anything convertible) and return
plain floats. Sequence inputs are evaluated per frame and then averaged.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Final

import numpy as np
from scipy import linalg

from avatar.talking._logging import null_logger

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

logger: Final = null_logger(__name__)

PSNR_CAP_DB: Final = 100.0
MSI_EPS: Final = 1e-3
PSD_TOLERANCE: Final = 1e-8
FEATURE_SIZE: Final = 16


class NonPositiveSemidefiniteError(ArithmeticError):
    """Raised when a covariance has an eigenvalue below the negative tolerance."""


def _pair(a: ArrayLike, b: ArrayLike, what: str) -> tuple[NDArray, NDArray]:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"{what} shapes differ: {x.shape} vs {y.shape}")
    return x, y


def psnr(a: ArrayLike, b: ArrayLike) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    Args:
        a: ``[H, W, 3]`` or ``[N, H, W, 3]``.
        b: Same shape as ``a``.

    Returns:
        ``10·log10(1 / MSE)``, capped at 100 dB; the mean over frames for
        sequences.

    Raises:
        ValueError: If the shapes differ.
    """
    x, y = _pair(a, b, "Image")
    if x.ndim < 3:
        raise ValueError(f"Expected [..., H, W, 3] images, got shape {x.shape}")
    frames = (x - y).reshape(-1, *x.shape[-3:])
    mse = np.mean(frames**2, axis=(1, 2, 3))
    with np.errstate(divide="ignore"):
        values = np.where(mse > 0, -10.0 * np.log10(mse), PSNR_CAP_DB)
    return float(np.minimum(values, PSNR_CAP_DB).mean())


def akd(pred: ArrayLike, gt: ArrayLike) -> float:
    """Average keypoint distance in pixels.

    Raises:
        ValueError: If the shapes differ.
    """
    x, y = _pair(pred, gt, "Landmark")
    return float(np.linalg.norm(x - y, axis=-1).mean())


def msi(landmarks: ArrayLike) -> float:
    """Motion stability index of a landmark track; higher is stabler.

    The speed of every keypoint is taken between consecutive frames; its standard
    deviation over time, averaged over keypoints, measures jitter. The index is
    ``1 / (jitter + 1e-3)``, so static or uniformly moving landmarks score 1000.

    Args:
        landmarks: ``[N, K, 2]`` with N at least 3.

    Raises:
        ValueError: If there are fewer than 3 frames.
    """
    points = np.asarray(landmarks, dtype=np.float64)
    if points.ndim != 3 or points.shape[0] < 3:
        raise ValueError(
            f"MSI needs a [N, K, 2] track with N >= 3, got shape {points.shape}"
        )
    speed = np.linalg.norm(np.diff(points, axis=0), axis=-1)
    jitter = speed.std(axis=0).mean()
    return float(1.0 / (jitter + MSI_EPS))


def fit_gaussian(
    features: ArrayLike,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Mean and unbiased covariance of ``[M, d]`` features.

    Raises:
        ValueError: Unless M > d.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"Features must be [M, d], got shape {x.shape}")
    m, d = x.shape
    if m <= d:
        raise ValueError(f"Need more samples than dimensions, got M={m}, d={d}")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False))


def _psd_eigh(
    matrix: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigendecomposition of a covariance that must be PSD within tolerance."""
    eigvals, eigvecs = linalg.eigh(0.5 * (matrix + matrix.T))
    tolerance = PSD_TOLERANCE * max(1.0, float(np.abs(eigvals).max(initial=0.0)))
    if eigvals.min(initial=0.0) < -tolerance:
        raise NonPositiveSemidefiniteError(
            f"Covariance has eigenvalue {eigvals.min():.3e}, below -{tolerance:.1e}"
        )
    return eigvals, eigvecs


def _psd_sqrt(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    """Symmetric square root, clipping slightly negative eigenvalues to zero."""
    eigvals, eigvecs = _psd_eigh(matrix)
    root = np.sqrt(np.clip(eigvals, 0.0, None))
    return (eigvecs * root) @ eigvecs.T


def frechet_distance(
    mu1: ArrayLike, cov1: ArrayLike, mu2: ArrayLike, cov2: ArrayLike
) -> float:
    """Fréchet distance between two Gaussians.

    ``‖μ1 − μ2‖² + Tr(C1 + C2 − 2 (C1 C2)^½)``. The trace of the cross term is
    taken as ``Tr((C1^½ C2 C1^½)^½)``, which keeps every square root symmetric.

    Raises:
        ValueError: If the dimensions disagree.
        NonPositiveSemidefiniteError: If a covariance is not PSD within tolerance.
    """
    m1, m2 = _pair(mu1, mu2, "Mean")
    c1, c2 = _pair(cov1, cov2, "Covariance")
    m1, m2 = np.atleast_1d(m1), np.atleast_1d(m2)
    c1, c2 = np.atleast_2d(c1), np.atleast_2d(c2)
    if c1.shape != (m1.size, m1.size):
        raise ValueError(
            f"Covariance shape {c1.shape} does not match mean size {m1.size}"
        )

    root1 = _psd_sqrt(c1)
    _psd_eigh(c2)
    cross = _psd_sqrt(root1 @ c2 @ root1)
    diff = m1 - m2
    value = diff @ diff + np.trace(c1) + np.trace(c2) - 2.0 * np.trace(cross)
    return float(max(value, 0.0))


def downsampled_pixels(frames: ArrayLike, size: int = FEATURE_SIZE) -> NDArray:
    """Area-average ``[N, H, W, 3]`` frames to ``size × size`` and flatten.

    These are the default Fréchet features.

    Raises:
        ValueError: If H or W is not a multiple of ``size``.
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    n, h, w, c = x.shape
    if h % size or w % size:
        raise ValueError(f"Frame size {h}x{w} is not a multiple of {size}")
    pooled = x.reshape(n, size, h // size, size, w // size, c).mean(axis=(2, 4))
    return pooled.reshape(n, -1)


def frechet_from_features(real: ArrayLike, fake: ArrayLike) -> float | None:
    """Fréchet distance between Gaussians fitted to two feature sets.

    Returns:
        The distance, or None when either set has no more samples than dimensions.
    """
    a = np.asarray(real, dtype=np.float64)
    b = np.asarray(fake, dtype=np.float64)
    if min(a.shape[0], b.shape[0]) <= a.shape[1]:
        logger.warning(
            f"Skipping Fréchet distance: {min(a.shape[0], b.shape[0])} samples for "
            f"{a.shape[1]} feature dimensions"
        )
        return None
    return frechet_distance(*fit_gaussian(a), *fit_gaussian(b))


def lipsync_proxy(mouth_openness: ArrayLike, speech_energy: ArrayLike) -> float:
    """Pearson correlation between mouth openness and speech energy.

    Returns:
        The correlation in [-1, 1], or 0 when either track is constant.

    Raises:
        ValueError: If the tracks differ in length or have fewer than 2 frames.
    """
    x, y = _pair(mouth_openness, speech_energy, "Track")
    x, y = x.reshape(-1), y.reshape(-1)
    if x.size < 2:
        raise ValueError(f"Need at least 2 frames, got {x.size}")
    dx, dy = x - x.mean(), y - y.mean()
    denominator = np.sqrt((dx @ dx) * (dy @ dy))
    if denominator == 0.0:
        return 0.0
    return float(np.clip((dx @ dy) / denominator, -1.0, 1.0))
