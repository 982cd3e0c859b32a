"""Synthetic speech features standing in for a pretrained speech encoder.

A script is one phone strength in [0, 1] per video frame. Feature row ``i`` is a
fixed smooth embedding of strength ``i`` plus low-amplitude seeded noise, rescaled so
its L2 energy equals the strength exactly.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Final

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from avatar.talking.models.shape import ShapeConfig

EMBEDDING_SEED: Final = 20_231_014
NOISE_AMPLITUDE: Final = 0.05
MIN_SPEAKING_STRENGTH: Final = 0.15
"""Lowest phone strength while speaking; silence is exactly 0."""


def _embedding(strengths: NDArray[np.float64], width: int) -> NDArray[np.float64]:
    rng = np.random.default_rng(EMBEDDING_SEED)
    freqs = rng.uniform(0.5, 3.0, size=width)
    phases = rng.uniform(0.0, 2 * np.pi, size=width)
    offsets = rng.uniform(0.5, 1.0, size=width) * rng.choice([-1.0, 1.0], size=width)
    return offsets + np.cos(2 * np.pi * freqs * strengths[:, None] + phases)


def synth_speech_features(
    script: Sequence[float] | NDArray[np.floating],
    cfg: ShapeConfig,
    seed: int = 0,
) -> tuple[NDArray[np.float32], NDArray[np.float32]]:
    """Features and mouth track for a script of per-frame phone strengths.

    Args:
        script: Phone strengths in [0, 1], one per frame.
        cfg: Supplies the feature width ``d_s``.
        seed: Seeds the low-amplitude noise.

    Returns:
        ``(features [N, d_s], mouth_track [N])``. ``mouth_track`` equals the script.

    Raises:
        ValueError: If the script is empty or leaves [0, 1].
    """
    strengths = np.asarray(script, dtype=np.float64).reshape(-1)
    if strengths.size == 0:
        raise ValueError("Script must hold at least one frame")
    if np.any(~np.isfinite(strengths)) or strengths.min() < 0 or strengths.max() > 1:
        raise ValueError("Phone strengths must lie in [0, 1]")

    rng = np.random.default_rng([seed, 2])
    directions = _embedding(strengths, cfg.d_s)
    directions += NOISE_AMPLITUDE * rng.standard_normal(directions.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    features = strengths[:, None] * directions
    return features.astype(np.float32), strengths.astype(np.float32)


def feature_energy(features: NDArray[np.floating]) -> NDArray[np.float64]:
    """Row-wise L2 energy of a feature sequence."""
    return np.linalg.norm(np.asarray(features, dtype=np.float64), axis=-1)


def synth_script(
    n_frames: int,
    fps: float,
    rng: np.random.Generator,
    silence_fraction: float = 0.1,
) -> NDArray[np.float64]:
    """Draw a smooth syllable-like strength track with silent pauses.

    Speaking frames have strength at least ``MIN_SPEAKING_STRENGTH``. Syllable
    amplitude tapers to zero around each pause so the mouth closes smoothly.
    """
    t = np.arange(n_frames) / fps
    rate = rng.uniform(1.2, 2.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    syllables = 0.5 * (1.0 - np.cos(2 * np.pi * rate * t + phase))
    loudness = rng.uniform(0.6, 1.0)

    silent = np.zeros(n_frames, dtype=bool)
    target = round(silence_fraction * n_frames)
    while silent.sum() < target:
        drawn = int(rng.integers(round(0.4 * fps), round(1.0 * fps) + 1))
        length = max(1, min(drawn, target))
        start = int(rng.integers(0, max(1, n_frames - length + 1)))
        silent[start : start + length] = True

    envelope = np.ones(n_frames)
    if silent.any():
        taper = max(1.0, 0.3 * fps)
        idx = np.arange(n_frames)
        silent_idx = np.flatnonzero(silent)
        nearest = np.abs(idx[:, None] - silent_idx[None, :]).min(axis=1)
        envelope = np.clip((nearest - 1) / taper, 0.0, 1.0)

    strengths = MIN_SPEAKING_STRENGTH + (
        1.0 - MIN_SPEAKING_STRENGTH
    ) * loudness * envelope * syllables
    strengths[silent] = 0.0
    return strengths
