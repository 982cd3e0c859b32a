"""Reverse-time samplers driven by a z0-predicting denoiser.

Both samplers integrate backward on a uniform grid from t = 1 to ``t_min`` and return
the denoiser's prediction at ``t_min`` as the final sample.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Final, Protocol

import torch

from avatar.talking._logging import null_logger
from avatar.talking._utils import torch_generator
from avatar.talking.diffusion.schedule import score_from_denoised
from avatar.talking.models._enums import SamplerKind

if TYPE_CHECKING:
    from avatar.talking.diffusion.schedule import NoiseSchedule

logger: Final = null_logger(__name__)


class DenoiseFn(Protocol):
    """Maps a noised sample and its time to a prediction of the clean sample."""

    def __call__(self, z_t: torch.Tensor, t: float) -> torch.Tensor: ...  # noqa: D102


class ProjectionFn(Protocol):
    """Post-step hook that may overwrite parts of the state at time ``t``."""

    def __call__(self, z: torch.Tensor, t: float) -> torch.Tensor: ...  # noqa: D102


def time_grid(schedule: NoiseSchedule, steps: int) -> list[float]:
    """Uniform grid of ``steps + 1`` times from 1 down to exactly ``t_min``."""
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    delta = (1.0 - schedule.t_min) / steps
    grid = [1.0 - i * delta for i in range(steps)]
    grid.append(schedule.t_min)
    return grid


def _initial_noise(
    shape: tuple[int, ...], generator: torch.Generator, device: torch.device | str
) -> torch.Tensor:
    return torch.randn(shape, generator=generator, device=device)


def _integrate(
    denoise_fn: DenoiseFn,
    shape: tuple[int, ...],
    schedule: NoiseSchedule,
    steps: int,
    seed: int,
    stochastic: bool,
    projection: ProjectionFn | None,
    device: torch.device | str,
) -> torch.Tensor:
    generator = torch_generator(seed, device)
    grid = time_grid(schedule, steps)
    z = _initial_noise(shape, generator, device)
    if projection is not None:
        z = projection(z, grid[0])

    with torch.no_grad():
        for t_now, t_next in zip(grid[:-1], grid[1:], strict=True):
            h = t_now - t_next
            beta = schedule.beta(t_now)
            score = score_from_denoised(z, denoise_fn(z, t_now), t_now, schedule)
            if stochastic:
                xi = torch.randn(shape, generator=generator, device=device)
                z = z + h * (0.5 * beta * z + beta * score) + math.sqrt(beta * h) * xi
            else:
                z = z + h * (0.5 * beta * z + 0.5 * beta * score)
            if projection is not None:
                z = projection(z, t_next)
        z0_hat = denoise_fn(z, schedule.t_min)

    if projection is not None:
        z0_hat = projection(z0_hat, 0.0)
    logger.debug(
        f"Sampled {tuple(shape)} with {steps} {'SDE' if stochastic else 'ODE'} steps"
    )
    return z0_hat


def sample_sde(
    denoise_fn: DenoiseFn,
    shape: tuple[int, ...],
    schedule: NoiseSchedule,
    steps: int,
    seed: int,
    projection: ProjectionFn | None = None,
    device: torch.device | str = "cpu",
) -> torch.Tensor:
    """Euler–Maruyama integration of the reverse-time SDE.

    Args:
        denoise_fn: Returns the z0 prediction for ``(z_t, t)``.
        shape: Shape of the sample, batch dimensions included.
        schedule: The noise schedule.
        steps: Number of reverse steps, at least 1.
        seed: Seeds the initial noise and every per-step increment.
        projection: Optional hook applied after each step and at t = 1. It is called
            with t = 0 on the final sample.
        device: Device the sample lives on.

    Returns:
        The sample, deterministic given ``seed``.
    """
    return _integrate(
        denoise_fn, shape, schedule, steps, seed, True, projection, device
    )


def sample_ode(
    denoise_fn: DenoiseFn,
    shape: tuple[int, ...],
    schedule: NoiseSchedule,
    steps: int,
    seed: int = 0,
    projection: ProjectionFn | None = None,
    device: torch.device | str = "cpu",
) -> torch.Tensor:
    """Euler integration of the probability-flow ODE.

    Only the initial noise depends on ``seed``; the rest is deterministic.
    """
    return _integrate(
        denoise_fn, shape, schedule, steps, seed, False, projection, device
    )


def sample(
    kind: SamplerKind,
    denoise_fn: DenoiseFn,
    shape: tuple[int, ...],
    schedule: NoiseSchedule,
    steps: int,
    seed: int,
    projection: ProjectionFn | None = None,
    device: torch.device | str = "cpu",
) -> torch.Tensor:
    """Dispatch to :func:`sample_sde` or :func:`sample_ode`."""
    match SamplerKind(kind):
        case SamplerKind.sde:
            return sample_sde(
                denoise_fn, shape, schedule, steps, seed, projection, device
            )
        case SamplerKind.ode:
            return sample_ode(
                denoise_fn, shape, schedule, steps, seed, projection, device
            )


def simulate_forward_sde(
    z0: torch.Tensor,
    t_end: float,
    steps: int,
    schedule: NoiseSchedule,
    seed: int,
) -> torch.Tensor:
    """Euler–Maruyama simulation of the forward SDE from 0 to ``t_end``.

    Used to check the closed-form marginal against the dynamics it solves.
    """
    generator = torch_generator(seed, z0.device)
    z = z0.clone()
    h = t_end / steps
    for i in range(steps):
        beta = schedule.beta(i * h)
        xi = torch.randn(z.shape, generator=generator, device=z0.device, dtype=z.dtype)
        z = z - 0.5 * beta * z * h + math.sqrt(beta * h) * xi
    return z


def gaussian_denoiser(
    mean: float | torch.Tensor, variance: float | torch.Tensor, schedule: NoiseSchedule
) -> DenoiseFn:
    """Exact posterior mean E[z0 | z_t] for data distributed as N(mean, variance).

    Element-wise; ``mean`` and ``variance`` broadcast against the sample.
    """

    def denoise(z_t: torch.Tensor, t: float) -> torch.Tensor:
        mc = schedule.mean_coef(t)
        s2 = schedule.sigma2(t)
        gain = variance * mc / (mc * mc * variance + s2)
        return mean + gain * (z_t - mc * mean)

    return denoise
