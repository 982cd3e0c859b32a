"""Diffusion over landmark coordinates and sampling with fixed landmarks.

Landmark sequences are diffused in coordinates normalised to [−1, 1] by the frame
half-extent. Constrained sampling clamps a chosen set of landmarks to a reference
track: after every reverse step those coordinates are replaced by the reference
noised to the current time, and by the reference itself at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Self

import numpy as np
import torch

from avatar.talking._logging import null_logger
from avatar.talking._utils import to_tensor, torch_generator
from avatar.talking.diffusion.data import DataNormalizer
from avatar.talking.diffusion.training import train_diffusion
from avatar.talking.models._enums import Ablation, SamplerKind
from avatar.talking.models.run_config import SamplerSettings
from avatar.talking.topology import group_mask

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from avatar.talking._run_dir import RunDirectory
    from avatar.talking.clip import VideoClip
    from avatar.talking.diffusion.model import SpeechToMotion
    from avatar.talking.diffusion.networks import ConditioningBundle
    from avatar.talking.diffusion.sampling import ProjectionFn
    from avatar.talking.diffusion.schedule import NoiseSchedule
    from avatar.talking.diffusion.training import DiffusionTrainingResult
    from avatar.talking.models._enums import LandmarkGroup
    from avatar.talking.models.run_config import RunConfig
    from avatar.talking.models.shape import ShapeConfig

logger: Final = null_logger(__name__)

EDGE_MARGIN_PX: Final = 1e-3
CONSTRAINT_NOISE_OFFSET: Final = 1


def normalize_landmarks(landmarks: ArrayLike, cfg: ShapeConfig) -> NDArray[np.float32]:
    """Pixel coordinates ``[..., K, 2]`` to [−1, 1]."""
    return DataNormalizer.for_landmarks(cfg).normalize(landmarks)


def denormalize_landmarks(coords: torch.Tensor, cfg: ShapeConfig) -> torch.Tensor:
    """Inverse of :func:`normalize_landmarks`."""
    return DataNormalizer.for_landmarks(cfg).denormalize(coords)


def clip_to_frame(landmarks: torch.Tensor, cfg: ShapeConfig) -> torch.Tensor:
    """Clamp pixel coordinates into ``[0, W) × [0, H)`` so they can be rasterised."""
    x = landmarks[..., 0].clamp(0.0, cfg.W - EDGE_MARGIN_PX)
    y = landmarks[..., 1].clamp(0.0, cfg.H - EDGE_MARGIN_PX)
    return torch.stack([x, y], dim=-1)


def train_landmark_diffusion(
    clips: Sequence[VideoClip],
    config: RunConfig,
    run_dir: RunDirectory | None = None,
) -> DiffusionTrainingResult:
    """Train the stage-two model on landmark coordinates instead of latents.

    The conditioning and diffusion machinery are those of the motion prior; only
    the data space differs.
    """
    ablation = config.ablation.model_copy(update={"ablation": Ablation.landmark_pred})
    return train_diffusion(
        clips, config.model_copy(update={"ablation": ablation}), run_dir
    )


@dataclass(frozen=True)
class ConstraintMask:
    """Landmarks held fixed during sampling and the track they follow.

    Attributes:
        fixed: ``[K]`` flags of the fixed landmarks.
        reference: ``[N, K, 2]`` normalised coordinates; finite wherever
            ``fixed`` is set.
    """

    fixed: NDArray[np.bool_]
    reference: NDArray[np.float32]

    def __post_init__(self: Self) -> None:
        """Check shapes and the finiteness of the fixed coordinates."""
        fixed = np.asarray(self.fixed, dtype=bool)
        reference = np.asarray(self.reference, dtype=np.float32)
        if fixed.ndim != 1:
            raise ValueError(f"Mask must be [K], got {fixed.shape}")
        if reference.ndim != 3 or reference.shape[1:] != (fixed.size, 2):
            raise ValueError(
                f"Reference must be [N, {fixed.size}, 2], got {reference.shape}"
            )
        if not np.all(np.isfinite(reference[:, fixed])):
            raise ValueError("Reference coordinates of fixed landmarks must be finite")
        object.__setattr__(self, "fixed", fixed)
        object.__setattr__(self, "reference", reference)

    @classmethod
    def from_groups(
        cls: type[Self],
        groups: Sequence[LandmarkGroup | str],
        reference_px: ArrayLike,
        cfg: ShapeConfig,
    ) -> Self:
        """Fix the named landmark groups to a pixel-space reference track."""
        return cls(group_mask(tuple(groups)), normalize_landmarks(reference_px, cfg))

    @property
    def empty(self: Self) -> bool:
        """Whether no landmark is fixed."""
        return not self.fixed.any()


def constraint_projection(
    mask: ConstraintMask,
    schedule: NoiseSchedule,
    batch_size: int,
    seed: int,
    device: torch.device | str = "cpu",
) -> ProjectionFn:
    """Projection that overwrites the fixed coordinates of a ``[B, N, K, 2]`` state.

    At time ``t > 0`` the fixed coordinates become the reference noised with the
    closed-form marginal, using noise from a generator seeded with
    ``seed + 1``. At ``t = 0`` they become the reference exactly.
    """
    reference = to_tensor(mask.reference, device=device)[None].expand(
        batch_size, -1, -1, -1
    )
    where = torch.as_tensor(mask.fixed, device=device)[None, None, :, None]
    generator = torch_generator(seed + CONSTRAINT_NOISE_OFFSET, device)

    def project(z: torch.Tensor, t: float) -> torch.Tensor:
        if t <= 0.0:
            target = reference
        else:
            noise = torch.randn(
                reference.shape, generator=generator, device=device
            )
            target = (
                schedule.mean_coef(t) * reference
                + math.sqrt(schedule.sigma2(t)) * noise
            )
        return torch.where(where, target.to(z.dtype), z)

    return project


def constrained_sample(
    model: SpeechToMotion,
    cond: ConditioningBundle,
    mask: ConstraintMask,
    schedule: NoiseSchedule,
    steps: int,
    seed: int,
    kind: SamplerKind = SamplerKind.ode,
) -> torch.Tensor:
    """Sample normalised landmarks with the masked landmarks following a reference.

    Args:
        model: A landmark stage-two model.
        cond: Conditioning of the ``[B, N]`` batch.
        mask: Fixed landmarks and their reference track of length N.
        schedule: Noise schedule.
        steps: Reverse steps.
        seed: Sampler seed.
        kind: Sampler kind.

    Returns:
        ``[B, N, K, 2]`` coordinates. Fixed coordinates equal the reference; with
        an empty mask the result is that of the unconstrained sampler.

    Raises:
        ValueError: If the model does not generate landmarks, or the reference
            length differs from the conditioning length while landmarks are fixed.
    """
    if model.frame_shape != (mask.fixed.size, 2):
        raise ValueError(
            f"Model generates frames of shape {model.frame_shape}, not landmarks "
            f"({mask.fixed.size}, 2)"
        )
    settings = SamplerSettings(kind=kind, steps=steps, seed=seed)
    if mask.empty:
        return model.generate(cond, schedule, settings)
    if mask.reference.shape[0] != cond.length:
        raise ValueError(
            f"Reference track has {mask.reference.shape[0]} frames but the "
            f"conditioning has {cond.length}"
        )
    projection = constraint_projection(
        mask, schedule, cond.batch_size, seed, cond.speech_hidden.device
    )
    logger.debug(f"Sampling with {int(mask.fixed.sum())} fixed landmarks")
    return model.generate(cond, schedule, settings, projection)
