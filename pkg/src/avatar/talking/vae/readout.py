"""Linear read-outs from latents or pixels to landmark coordinates.

Generated videos have no ground-truth landmarks. A ridge regression fitted on the
training corpus maps motion latents (or downsampled frames) back to landmark
coordinates, which then feed the lip-sync proxy, yaw re-estimation and AKD.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Self

import numpy as np
from scipy import linalg

from avatar.talking._logging import null_logger
from avatar.talking.metrics import downsampled_pixels

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import ArrayLike, NDArray

logger: Final = null_logger(__name__)

LATENT_READOUT: Final = "latent_readout"
FRAME_READOUT: Final = "frame_readout"


@dataclass(frozen=True)
class RidgeReadout:
    """Affine map ``y = (x − x_mean) · weights + y_mean`` from features to landmarks.

    Attributes:
        x_mean: ``[F]`` feature mean of the fitting data.
        y_mean: ``[K·2]`` landmark mean of the fitting data.
        weights: ``[F, K·2]``.
    """

    x_mean: NDArray[np.float64]
    y_mean: NDArray[np.float64]
    weights: NDArray[np.float64]

    @classmethod
    def fit(
        cls: type[Self], features: ArrayLike, landmarks: ArrayLike, ridge: float = 1e-3
    ) -> Self:
        """Fit on ``[M, ...]`` features and ``[M, K, 2]`` landmarks.

        Args:
            features: One row per frame; trailing dimensions are flattened.
            landmarks: Landmarks of the same frames.
            ridge: Penalty relative to the number of rows.

        Raises:
            ValueError: If the row counts differ or there are no rows.
        """
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(landmarks, dtype=np.float64)
        if x.shape[0] != y.shape[0] or x.shape[0] == 0:
            raise ValueError(
                f"Need equal, non-zero row counts, got {x.shape[0]} and {y.shape[0]}"
            )
        x = x.reshape(x.shape[0], -1)
        y = y.reshape(y.shape[0], -1)
        x_mean, y_mean = x.mean(axis=0), y.mean(axis=0)
        xc, yc = x - x_mean, y - y_mean
        gram = xc.T @ xc + ridge * x.shape[0] * np.eye(x.shape[1])
        weights = linalg.solve(gram, xc.T @ yc, assume_a="pos")
        logger.debug(f"Fitted ridge read-out {x.shape[1]} -> {y.shape[1]}")
        return cls(x_mean, y_mean, weights)

    def predict(self: Self, features: ArrayLike) -> NDArray[np.float64]:
        """Landmarks ``[M, K, 2]`` for ``[M, ...]`` features."""
        x = np.asarray(features, dtype=np.float64)
        x = x.reshape(x.shape[0], -1)
        if x.shape[1] != self.x_mean.size:
            raise ValueError(
                f"Read-out expects {self.x_mean.size} features, got {x.shape[1]}"
            )
        y = (x - self.x_mean) @ self.weights + self.y_mean
        return y.reshape(x.shape[0], -1, 2)

    def to_arrays(self: Self, prefix: str) -> dict[str, NDArray[np.float64]]:
        """Named arrays for storing the read-out with a checkpoint."""
        return {
            f"{prefix}.x_mean": self.x_mean,
            f"{prefix}.y_mean": self.y_mean,
            f"{prefix}.weights": self.weights,
        }

    @classmethod
    def from_arrays(
        cls: type[Self], arrays: Mapping[str, ArrayLike], prefix: str
    ) -> Self:
        """Inverse of :meth:`to_arrays`.

        Raises:
            KeyError: If an array is missing.
        """
        return cls(
            np.asarray(arrays[f"{prefix}.x_mean"], dtype=np.float64),
            np.asarray(arrays[f"{prefix}.y_mean"], dtype=np.float64),
            np.asarray(arrays[f"{prefix}.weights"], dtype=np.float64),
        )


def frame_features(frames: ArrayLike) -> NDArray[np.float64]:
    """Pixel features the frame read-out is fitted on."""
    return downsampled_pixels(frames)
