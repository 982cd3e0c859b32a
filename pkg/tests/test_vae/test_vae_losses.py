"""Tests for the autoencoder losses."""

import math

import pytest
import torch

from avatar.talking.models.run_config import VaeTrainingSettings
from avatar.talking.models.shape import ShapeConfig, get_scale_preset
from avatar.talking.vae.losses import (
    RandomConvFeatures,
    VaeLossWeights,
    VaePairBatch,
    discriminator_loss,
    generator_adversarial_loss,
    kl_divergence,
    kl_weight,
    reconstruction_loss,
    vae_loss_terms,
    vae_losses,
)
from avatar.talking.vae.networks import (
    Discriminator,
    GaussianLatent,
    MotionAppearanceVAE,
)


def test_reconstruction_of_identical_frames() -> None:
    """Tests that a perfect reconstruction has zero loss, with or without features."""
    x = torch.rand(2, 16, 16, 3)
    assert reconstruction_loss(x, x).item() == 0.0
    features = RandomConvFeatures()
    assert reconstruction_loss(x, x, features, 0.5).item() == 0.0
    assert reconstruction_loss(x + 0.1, x).item() == pytest.approx(0.1, rel=1e-5)


def test_perceptual_term_adds_to_pixel_l1() -> None:
    """Tests that feature L1 only adds when enabled."""
    x = torch.rand(1, 16, 16, 3)
    y = torch.rand(1, 16, 16, 3)
    features = RandomConvFeatures()
    plain = reconstruction_loss(x, y, features, 0.0)
    with_features = reconstruction_loss(x, y, features, 0.5)
    assert with_features.item() > plain.item()


def test_random_features_are_frozen_and_seeded() -> None:
    """Tests that the feature extractor has no parameters and a fixed seed."""
    a, b = RandomConvFeatures(seed=3), RandomConvFeatures(seed=3)
    assert list(a.parameters()) == []
    x = torch.rand(1, 16, 16, 3)
    for fa, fb in zip(a(x), b(x), strict=True):
        assert torch.equal(fa, fb)
    assert [f.shape[1] for f in a(x)] == [16, 32, 32]


def test_kl_closed_form() -> None:
    """Tests the element-wise KL at known means and log-variances."""
    assert kl_divergence(torch.ones(4), torch.zeros(4)).tolist() == [0.5] * 4
    assert kl_divergence(torch.zeros(2), torch.zeros(2)).tolist() == [0.0, 0.0]
    mean, logvar = torch.tensor([0.3]), torch.tensor([-0.7])
    expected = 0.5 * (0.3**2 + math.exp(-0.7) - 1.0 + 0.7)
    assert kl_divergence(mean, logvar).item() == pytest.approx(expected, rel=1e-6)


def test_adversarial_losses_at_one_half() -> None:
    """Tests both adversarial terms when the discriminator is undecided."""
    half = torch.full((5,), 0.5)
    assert discriminator_loss(half, half).item() == pytest.approx(2 * math.log(2))
    assert generator_adversarial_loss(half).item() == pytest.approx(math.log(2))


def test_adversarial_losses_are_clamped() -> None:
    """Tests that saturated probabilities give finite losses."""
    assert math.isfinite(generator_adversarial_loss(torch.zeros(3)).item())
    assert math.isfinite(discriminator_loss(torch.zeros(3), torch.ones(3)).item())


def test_kl_weight() -> None:
    """Tests the KL weight relative to latent and pixel sizes."""
    cfg = ShapeConfig(H=64, W=64)
    assert kl_weight(cfg, 1e-6) == pytest.approx(1e-6 * (192 + 48) / 12288)
    assert kl_weight(cfg, 1e-6, disentangled=False) == pytest.approx(
        1e-6 * 48 / 12288
    )
    weights = VaeLossWeights.from_settings(
        VaeTrainingSettings(perceptual_features=True), cfg
    )
    assert weights.lambda_adv == 0.5
    assert weights.perceptual_weight == 0.5


def test_gradient_matches_finite_difference() -> None:
    """Tests the autograd gradient of l_rec + l_kl against central differences."""
    torch.manual_seed(0)
    cfg = ShapeConfig(H=16, W=16, d_s=4)
    vae = MotionAppearanceVAE(cfg, get_scale_preset("tiny")).double().eval()
    disc = Discriminator(8).double()
    batch = VaePairBatch(
        torch.rand(2, 16, 16, 3, dtype=torch.float64),
        torch.rand(2, 16, 16, 3, dtype=torch.float64),
        torch.rand(2, 16, 16, 3, dtype=torch.float64),
    )
    weights = VaeLossWeights(lambda_kl=1.0, lambda_adv=0.0)
    probe = vae.appearance_encoder.fc_mean.bias

    def objective() -> torch.Tensor:
        return vae_loss_terms(
            batch, vae, disc, weights, adversarial=False
        ).generator_total

    objective().backward()
    analytic = probe.grad[0].item()

    eps = 1e-6
    with torch.no_grad():
        probe[0] += eps
        upper = objective().item()
        probe[0] -= 2 * eps
        lower = objective().item()
        probe[0] += eps
    numeric = (upper - lower) / (2 * eps)
    assert analytic == pytest.approx(numeric, rel=1e-3, abs=1e-9)


def test_vae_losses_breakdown(shape_cfg: ShapeConfig) -> None:
    """Tests the detached loss breakdown of a batch."""
    vae = MotionAppearanceVAE(shape_cfg, get_scale_preset("tiny")).eval()
    frames = torch.rand(2, 32, 32, 3)
    batch = VaePairBatch(frames, frames, frames)
    losses = vae_losses(batch, vae, Discriminator(8), VaeLossWeights(lambda_kl=0.1))
    assert losses.is_finite()
    assert losses.total == pytest.approx(
        losses.l_rec + 0.1 * losses.l_kl + 0.5 * losses.l_gen_adv, rel=1e-5
    )

    no_adv = vae_losses(
        batch, vae, Discriminator(8), VaeLossWeights(lambda_kl=0.1), adversarial=False
    )
    assert no_adv.l_gen_adv == 0.0
    assert no_adv.l_disc == 0.0


def test_gaussian_latent_sampling() -> None:
    """Tests that seeded posterior draws are reproducible and use the variance."""
    latent = GaussianLatent(torch.zeros(1000), torch.zeros(1000))
    a = latent.sample(torch.Generator().manual_seed(1))
    b = latent.sample(torch.Generator().manual_seed(1))
    assert torch.equal(a, b)
    assert a.std().item() == pytest.approx(1.0, abs=0.1)
