"""Random sub-sequence windows for stage-two training."""

from __future__ import annotations

from typing import TYPE_CHECKING, Final, NamedTuple

if TYPE_CHECKING:
    from collections.abc import Sequence

    import numpy as np

WINDOW_MIN: Final = 125
WINDOW_MAX: Final = 250


class Window(NamedTuple):
    """Frames ``[start, start + length)`` of clip ``clip``."""

    clip: int
    start: int
    length: int

    @property
    def stop(self) -> int:
        """Exclusive end frame."""
        return self.start + self.length


def sample_training_window(
    n_frames: int,
    rng: np.random.Generator,
    window_min: int = WINDOW_MIN,
    window_max: int = WINDOW_MAX,
) -> tuple[int, int]:
    """Draw a window with a random start and a random length.

    The length is uniform on ``window_min..window_max`` and clamped to the clip.
    Clips no longer than ``window_min`` are used whole.

    Returns:
        ``(start, length)`` with the window inside the clip.

    Raises:
        ValueError: If the clip is empty or the bounds are out of order.
    """
    if n_frames < 1:
        raise ValueError(f"Cannot window a clip of {n_frames} frames")
    if not 1 <= window_min <= window_max:
        raise ValueError(f"Invalid window bounds {window_min}..{window_max}")
    if n_frames <= window_min:
        return 0, n_frames
    length = int(rng.integers(window_min, min(window_max, n_frames) + 1))
    start = int(rng.integers(0, n_frames - length + 1))
    return start, length


def sample_window_batch(
    lengths: Sequence[int],
    batch_size: int,
    rng: np.random.Generator,
    window_min: int = WINDOW_MIN,
    window_max: int = WINDOW_MAX,
) -> list[Window]:
    """Draw ``batch_size`` windows of one shared length from random clips.

    Clips are drawn with replacement. The shared length follows
    :func:`sample_training_window` for the shortest chosen clip, and every window
    then gets its own uniform start.

    Raises:
        ValueError: If ``lengths`` is empty.
    """
    if not lengths:
        raise ValueError("Cannot sample windows from an empty corpus")
    chosen = [int(i) for i in rng.integers(len(lengths), size=batch_size)]
    shortest = min(lengths[i] for i in chosen)
    _, length = sample_training_window(shortest, rng, window_min, window_max)
    return [
        Window(i, int(rng.integers(0, lengths[i] - length + 1)), length)
        for i in chosen
    ]
