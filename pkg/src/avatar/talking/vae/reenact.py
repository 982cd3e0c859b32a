"""Self-reconstruction and cross-reenactment with a trained autoencoder."""

from __future__ import annotations

from typing import TYPE_CHECKING, Final

import numpy as np
import torch

from avatar.talking._logging import null_logger
from avatar.talking._training import evaluating
from avatar.talking._utils import to_tensor
from avatar.talking.vae.networks import MotionAppearanceVAE
from avatar.talking.vae.raster import rasterize_sequence

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

    from avatar.talking.vae.networks import FrameAutoencoder

logger: Final = null_logger(__name__)

CHUNK_FRAMES: Final = 64


def reenact(
    vae: FrameAutoencoder,
    appearance_frame: ArrayLike | torch.Tensor,
    driving_landmarks: ArrayLike,
    driving_frames: ArrayLike | None = None,
) -> torch.Tensor:
    """Animate ``appearance_frame`` with a driving landmark track.

    For the disentangling autoencoder the appearance latent is encoded once and
    every output frame is ``decode(z_a, E_M(rasterize(driving[t])))``. The
    single-encoder ablation has no landmark path and reconstructs
    ``driving_frames`` instead.

    Args:
        vae: A trained autoencoder.
        appearance_frame: ``[H, W, 3]`` frame supplying identity and background.
        driving_landmarks: ``[N, K, 2]`` landmark track.
        driving_frames: ``[N, H, W, 3]``, required by the single-encoder ablation.

    Returns:
        ``[N, H, W, 3]`` frames in [0, 1].

    Raises:
        ValueError: On shape mismatches, or if the single-encoder ablation gets no
            driving frames.
    """
    device = next(vae.parameters()).device
    rasters = rasterize_sequence(driving_landmarks, vae.cfg)
    n = rasters.shape[0]
    outputs = []
    with torch.no_grad(), evaluating(vae):
        if isinstance(vae, MotionAppearanceVAE):
            z_a = vae.encode_appearance(to_tensor(appearance_frame, device=device)).mean
            for start in range(0, n, CHUNK_FRAMES):
                chunk = to_tensor(rasters[start : start + CHUNK_FRAMES], device=device)
                outputs.append(vae.decode(z_a, vae.encode_motion(chunk).mean))
        else:
            if driving_frames is None:
                raise ValueError(
                    f"{type(vae).__name__} reconstructs from frames; "
                    "pass driving_frames"
                )
            frames = np.asarray(driving_frames, dtype=np.float32)
            if frames.shape[0] != n:
                raise ValueError(
                    f"Got {frames.shape[0]} driving frames for {n} landmark frames"
                )
            reference = to_tensor(appearance_frame, device=device)
            for start in range(0, n, CHUNK_FRAMES):
                stop = start + CHUNK_FRAMES
                latents = vae.motion_latents(
                    to_tensor(frames[start:stop], device=device),
                    to_tensor(rasters[start:stop], device=device),
                )
                outputs.append(vae.render(reference, latents))
    logger.debug(f"Reenacted {n} frames with {type(vae).__name__}")
    return torch.cat(outputs, dim=0)


def self_reconstruct(
    vae: FrameAutoencoder, frames: ArrayLike, landmarks: ArrayLike
) -> torch.Tensor:
    """Reconstruct a clip from its first frame and its own landmark track."""
    clip_frames = np.asarray(frames, dtype=np.float32)
    return reenact(vae, clip_frames[0], landmarks, driving_frames=clip_frames)


def encode_motion_sequence(
    vae: FrameAutoencoder, frames: ArrayLike, landmarks: ArrayLike
) -> torch.Tensor:
    """Posterior-mean sequence latents ``[N, h_m, w_m, 3]`` of a clip."""
    device = next(vae.parameters()).device
    clip_frames = np.asarray(frames, dtype=np.float32)
    rasters = rasterize_sequence(landmarks, vae.cfg)
    chunks = []
    with torch.no_grad(), evaluating(vae):
        for start in range(0, rasters.shape[0], CHUNK_FRAMES):
            stop = start + CHUNK_FRAMES
            chunks.append(
                vae.motion_latents(
                    to_tensor(clip_frames[start:stop], device=device),
                    to_tensor(rasters[start:stop], device=device),
                )
            )
    return torch.cat(chunks, dim=0)


def render_sequence(
    vae: FrameAutoencoder,
    reference_frame: ArrayLike | torch.Tensor,
    latents: torch.Tensor,
) -> torch.Tensor:
    """Decode ``[N, h_m, w_m, 3]`` sequence latents against a reference frame."""
    device = next(vae.parameters()).device
    reference = to_tensor(reference_frame, device=device)
    with torch.no_grad(), evaluating(vae):
        frames = [
            vae.render(reference, latents[start : start + CHUNK_FRAMES].to(device))
            for start in range(0, latents.shape[0], CHUNK_FRAMES)
        ]
    return torch.cat(frames, dim=0)
