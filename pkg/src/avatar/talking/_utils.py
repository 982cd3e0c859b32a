"""Small filesystem and array helpers shared across the package."""

from __future__ import annotations

import stat
from typing import TYPE_CHECKING

import numpy as np
import torch

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray


def path_exists(path: Path) -> bool:
    """Return whether a path exists without masking other OS errors."""
    try:
        path.stat()
    except (FileNotFoundError, NotADirectoryError):
        return False
    return True


def path_is_dir(path: Path) -> bool:
    """Return whether a path is a directory without masking other OS errors."""
    try:
        return stat.S_ISDIR(path.stat().st_mode)
    except (FileNotFoundError, NotADirectoryError):
        return False


def frozen_float32(value: ArrayLike) -> NDArray[np.float32]:
    """Copy ``value`` into a C-contiguous, read-only float32 array."""
    array = np.array(value, dtype=np.float32, copy=True, order="C")
    array.setflags(write=False)
    return array


def torch_generator(seed: int, device: torch.device | str = "cpu") -> torch.Generator:
    """Return a torch generator seeded with ``seed``."""
    generator = torch.Generator(device=device)
    generator.manual_seed(seed)
    return generator


def to_tensor(
    array: ArrayLike | torch.Tensor,
    dtype: torch.dtype = torch.float32,
    device: torch.device | str = "cpu",
) -> torch.Tensor:
    """Convert a numpy array (or tensor) to a tensor of the given dtype."""
    if isinstance(array, torch.Tensor):
        return array.to(device=device, dtype=dtype)
    return torch.as_tensor(np.asarray(array), dtype=dtype, device=device)
