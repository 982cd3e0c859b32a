"""Tests for the noise schedule."""

import math

import pytest
import torch

from avatar.talking.diffusion.sampling import simulate_forward_sde
from avatar.talking.diffusion.schedule import (
    NoiseSchedule,
    ScoreSingularityError,
    forward_marginal_sample,
    schedule_eval,
    score_from_denoised,
)


@pytest.fixture
def schedule() -> NoiseSchedule:
    """The default linear schedule."""
    return NoiseSchedule()


def test_schedule_at_endpoints(schedule: NoiseSchedule) -> None:
    """Tests the schedule values at t = 0 and t = 1."""
    assert schedule_eval(schedule, 0.0) == (0.05, 0.0, 1.0, 0.0)
    beta, integral, mean_coef, sigma2 = schedule_eval(schedule, 1.0)
    assert beta == pytest.approx(20.0)
    assert integral == pytest.approx(10.025)
    assert mean_coef == pytest.approx(math.exp(-10.025 / 2))
    assert sigma2 == pytest.approx(1.0 - math.exp(-10.025))


@pytest.mark.parametrize("t", [0.0, 0.1, 0.5, 0.9, 1.0])
def test_marginal_is_variance_preserving(schedule: NoiseSchedule, t: float) -> None:
    """Tests that mean_coef² + sigma2 = 1 at every time."""
    assert schedule.mean_coef(t) ** 2 + schedule.sigma2(t) == pytest.approx(1.0)


def test_tensor_times_match_floats(schedule: NoiseSchedule) -> None:
    """Tests that tensors and floats give the same values."""
    times = torch.tensor([0.2, 0.7], dtype=torch.float64)
    for fn in (schedule.beta, schedule.integral, schedule.mean_coef, schedule.sigma2):
        values = fn(times)
        assert isinstance(values, torch.Tensor)
        assert values.tolist() == pytest.approx([fn(0.2), fn(0.7)])


def test_time_inversion(schedule: NoiseSchedule) -> None:
    """Tests that times are recovered from B and from the variance."""
    assert schedule.time_at_integral(schedule.integral(0.37)) == pytest.approx(0.37)
    assert schedule.time_at_sigma2(schedule.sigma2(0.2)) == pytest.approx(0.2)
    flat = NoiseSchedule(beta0=2.0, beta1=2.0)
    assert flat.time_at_integral(1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError, match="not reached"):
        schedule.time_at_integral(11.0)
    with pytest.raises(ValueError, match="sigma2 must lie"):
        schedule.time_at_sigma2(1.0)


def test_invalid_schedule_and_times(schedule: NoiseSchedule) -> None:
    """Tests the validation of schedules and times."""
    with pytest.raises(ValueError, match="t_min must be below 1"):
        NoiseSchedule(t_min=1.0)
    with pytest.raises(ValueError, match="Diffusion time"):
        schedule_eval(schedule, 1.5)
    with pytest.raises(ValueError, match="Diffusion time"):
        forward_marginal_sample(torch.zeros(2), -0.1, torch.zeros(2), schedule)


def test_forward_marginal_sample(schedule: NoiseSchedule) -> None:
    """Tests the closed-form marginal draw."""
    z0 = torch.full((3,), 2.0)
    noise = torch.tensor([-1.0, 0.0, 1.0])
    z_t = forward_marginal_sample(z0, 0.5, noise, schedule)
    expected = schedule.mean_coef(0.5) * 2.0 + math.sqrt(schedule.sigma2(0.5)) * noise
    torch.testing.assert_close(z_t, expected)
    with pytest.raises(ValueError, match="does not match"):
        forward_marginal_sample(z0, 0.5, torch.zeros(4), schedule)


def test_forward_sde_matches_marginal(schedule: NoiseSchedule) -> None:
    """Tests that simulating the forward SDE reproduces the closed-form moments."""
    z0 = torch.ones(20_000, dtype=torch.float64)
    z = simulate_forward_sde(z0, 0.5, 500, schedule, seed=0)
    assert z.mean().item() == pytest.approx(schedule.mean_coef(0.5), abs=0.03)
    assert z.var().item() == pytest.approx(schedule.sigma2(0.5), abs=0.03)


def test_score_from_denoised(schedule: NoiseSchedule) -> None:
    """Tests the score at a time where the variance is one half."""
    t = schedule.time_at_sigma2(0.5)
    score = score_from_denoised(torch.tensor(1.0), torch.tensor(0.0), t, schedule)
    assert score.item() == pytest.approx(-2.0, rel=1e-6)


def test_score_is_undefined_near_zero(schedule: NoiseSchedule) -> None:
    """Tests that the score is refused at or below t_min."""
    with pytest.raises(ScoreSingularityError, match="at or below t_min"):
        score_from_denoised(torch.ones(1), torch.ones(1), schedule.t_min, schedule)
    with pytest.raises(ValueError):
        score_from_denoised(torch.ones(1), torch.ones(1), 0.0, schedule)
