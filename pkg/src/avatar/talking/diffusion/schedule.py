"""The linear variance-preserving noise schedule and its closed-form marginals."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Final, Self, overload

import torch
from pydantic import BaseModel, ConfigDict, model_validator

from avatar.talking.types import NonNegativeFloat, PositiveFloat  # noqa: TC001

if TYPE_CHECKING:
    from collections.abc import Callable

DEFAULT_BETA0: Final = 0.05
DEFAULT_BETA1: Final = 20.0
DEFAULT_T_MIN: Final = 1e-3


class ScoreSingularityError(ValueError):
    """Raised when a score is requested where the marginal variance vanishes."""


class NoiseSchedule(BaseModel):
    """A linear schedule β(t) = beta0 + t·(beta1 − beta0) on t ∈ [0, 1].

    Every method accepts a Python float or a tensor of times and returns the same
    kind of value.
    """

    model_config = ConfigDict(frozen=True)

    beta0: NonNegativeFloat = DEFAULT_BETA0
    beta1: PositiveFloat = DEFAULT_BETA1
    t_min: PositiveFloat = DEFAULT_T_MIN
    """Samplers stop here; scores are undefined at or below it."""

    @model_validator(mode="after")
    def _check_range(self: Self) -> Self:
        if self.t_min >= 1.0:
            raise ValueError(f"t_min must be below 1, got {self.t_min}")
        return self

    @overload
    def beta(self: Self, t: float) -> float: ...
    @overload
    def beta(self: Self, t: torch.Tensor) -> torch.Tensor: ...
    def beta(self: Self, t: float | torch.Tensor) -> float | torch.Tensor:
        """β(t)."""
        return self.beta0 + t * (self.beta1 - self.beta0)

    @overload
    def integral(self: Self, t: float) -> float: ...
    @overload
    def integral(self: Self, t: torch.Tensor) -> torch.Tensor: ...
    def integral(self: Self, t: float | torch.Tensor) -> float | torch.Tensor:
        """B(t), the integral of β from 0 to t."""
        return self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t * t

    @overload
    def mean_coef(self: Self, t: float) -> float: ...
    @overload
    def mean_coef(self: Self, t: torch.Tensor) -> torch.Tensor: ...
    def mean_coef(self: Self, t: float | torch.Tensor) -> float | torch.Tensor:
        """The factor e^{−B(t)/2} scaling z0 in the marginal mean."""
        return _apply(math.exp, torch.exp, -0.5 * self.integral(t))

    @overload
    def sigma2(self: Self, t: float) -> float: ...
    @overload
    def sigma2(self: Self, t: torch.Tensor) -> torch.Tensor: ...
    def sigma2(self: Self, t: float | torch.Tensor) -> float | torch.Tensor:
        """The marginal variance 1 − e^{−B(t)}."""
        return -_apply(math.expm1, torch.expm1, -self.integral(t))

    def time_at_integral(self: Self, value: float) -> float:
        """Invert B: return the t in [0, 1] with B(t) = ``value``."""
        a = 0.5 * (self.beta1 - self.beta0)
        if a == 0:
            t = value / self.beta0
        else:
            t = (-self.beta0 + math.sqrt(self.beta0**2 + 4 * a * value)) / (2 * a)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"B = {value} is not reached on [0, 1]")
        return t

    def time_at_sigma2(self: Self, sigma2: float) -> float:
        """Return the t at which the marginal variance equals ``sigma2``."""
        if not 0.0 <= sigma2 < 1.0:
            raise ValueError(f"sigma2 must lie in [0, 1), got {sigma2}")
        return self.time_at_integral(-math.log1p(-sigma2))


def _apply(
    scalar_fn: Callable[[float], float],
    tensor_fn: Callable[[torch.Tensor], torch.Tensor],
    value: float | torch.Tensor,
) -> float | torch.Tensor:
    if isinstance(value, torch.Tensor):
        return tensor_fn(value)
    return scalar_fn(value)


def _check_time(t: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"Diffusion time must lie in [0, 1], got {t}")


def schedule_eval(
    schedule: NoiseSchedule, t: float
) -> tuple[float, float, float, float]:
    """Evaluate the schedule at one time.

    Args:
        schedule: The noise schedule.
        t: Diffusion time in [0, 1].

    Returns:
        ``(beta, B, mean_coef, sigma2)`` at ``t``.

    Raises:
        ValueError: If ``t`` lies outside [0, 1].
    """
    _check_time(t)
    return (
        schedule.beta(t),
        schedule.integral(t),
        schedule.mean_coef(t),
        schedule.sigma2(t),
    )


def forward_marginal_sample(
    z0: torch.Tensor, t: float, noise: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """Draw z_t from the closed-form marginal given z0 and standard normal noise."""
    _check_time(t)
    if z0.shape != noise.shape:
        raise ValueError(
            f"Noise shape {tuple(noise.shape)} does not match z0 {tuple(z0.shape)}"
        )
    return schedule.mean_coef(t) * z0 + math.sqrt(schedule.sigma2(t)) * noise


def score_from_denoised(
    z_t: torch.Tensor, z0_hat: torch.Tensor, t: float, schedule: NoiseSchedule
) -> torch.Tensor:
    """Convert a z0 prediction into the score of the noised marginal.

    Raises:
        ScoreSingularityError: If ``t`` is at or below the schedule's ``t_min``.
    """
    if t <= schedule.t_min:
        raise ScoreSingularityError(
            f"Score requested at t={t}, at or below t_min={schedule.t_min}"
        )
    _check_time(t)
    return -(z_t - schedule.mean_coef(t) * z0_hat) / schedule.sigma2(t)
