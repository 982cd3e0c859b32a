"""Stage one: adversarial training of the frame autoencoder."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Final, Self

import numpy as np
import torch

from avatar.talking._logging import null_logger
from avatar.talking._training import (
    LossLogBuffer,
    StageOrderError,
    ensure_finite,
    evaluating,
    module_summary,
    trainable_parameters,
)
from avatar.talking._utils import to_tensor, torch_generator
from avatar.talking.models._enums import Ablation, TrainingStage
from avatar.talking.models.loss_log import LossRecord
from avatar.talking.vae.losses import (
    RandomConvFeatures,
    VaeLossBreakdown,
    VaeLossWeights,
    VaePairBatch,
    discriminator_loss,
    generator_adversarial_loss,
    latent_kl,
    reconstruction_loss,
    vae_losses,
)
from avatar.talking.vae.networks import (
    Discriminator,
    FrameAutoencoder,
    MotionAppearanceVAE,
    SingleEncoderVAE,
)
from avatar.talking.vae.raster import rasterize_landmarks

if TYPE_CHECKING:
    from collections.abc import Sequence

    from avatar.talking._run_dir import RunDirectory
    from avatar.talking.clip import VideoClip
    from avatar.talking.models.run_config import RunConfig
    from avatar.talking.models.shape import ShapeConfig

logger: Final = null_logger(__name__)

ADAM_BETAS: Final = (0.5, 0.9)
DEBUG_INTERVAL: Final = 50


def build_vae(config: RunConfig) -> FrameAutoencoder:
    """Freshly initialised autoencoder for ``config``.

    The ``no_disentangle`` ablation gets a :class:`SingleEncoderVAE`; every other
    variant the disentangling :class:`MotionAppearanceVAE`. Initialisation is seeded
    by ``config.seed`` without touching the global torch generator.
    """
    cls = (
        SingleEncoderVAE
        if config.ablation.ablation == Ablation.no_disentangle
        else MotionAppearanceVAE
    )
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return cls(config.shape, config.preset).to(config.device)


@dataclass
class VaeNets:
    """The autoencoder, its discriminator and the optional feature extractor."""

    vae: FrameAutoencoder
    discriminator: Discriminator
    features: RandomConvFeatures | None = None

    @classmethod
    def build(cls: type[Self], config: RunConfig) -> Self:
        """Initialise every network of stage one."""
        vae = build_vae(config)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed + 1)
            discriminator = Discriminator(config.preset.vae_hidden).to(config.device)
        features = (
            RandomConvFeatures().to(config.device)
            if config.vae_training.perceptual_features
            else None
        )
        return cls(vae, discriminator, features)

    def modules(self: Self) -> dict[str, torch.nn.Module]:
        """Modules stored in a stage-one checkpoint."""
        return {"vae": self.vae, "discriminator": self.discriminator}


@dataclass
class VaeOptimizers:
    """One Adam optimiser per side of the min-max game."""

    generator: torch.optim.Optimizer
    discriminator: torch.optim.Optimizer

    @classmethod
    def build(cls: type[Self], nets: VaeNets, learning_rate: float) -> Self:
        """Constant learning rate for both sides."""
        return cls(
            torch.optim.Adam(
                trainable_parameters(nets.vae), lr=learning_rate, betas=ADAM_BETAS
            ),
            torch.optim.Adam(
                trainable_parameters(nets.discriminator),
                lr=learning_rate,
                betas=ADAM_BETAS,
            ),
        )


@dataclass
class VaeTrainingResult:
    """Trained networks and the loss history of every step."""

    nets: VaeNets
    history: list[VaeLossBreakdown] = field(default_factory=list)

    @property
    def steps(self: Self) -> int:
        """Number of completed steps."""
        return len(self.history)


def sample_pair_batch(
    clips: Sequence[VideoClip],
    batch_size: int,
    rng: np.random.Generator,
    cfg: ShapeConfig,
    device: torch.device | str = "cpu",
) -> VaePairBatch:
    """Draw frame pairs ``(i, j)`` uniformly within randomly chosen clips.

    Frame i supplies the appearance, frame j is the target and only its landmarks
    reach the motion path.

    Raises:
        ValueError: If there are no clips.
    """
    if not clips:
        raise ValueError("Cannot sample VAE pairs from an empty corpus")
    appearance = np.empty((batch_size, cfg.H, cfg.W, 3), dtype=np.float32)
    target = np.empty_like(appearance)
    rasters = np.empty_like(appearance)
    for b in range(batch_size):
        clip = clips[int(rng.integers(len(clips)))]
        i, j = rng.integers(clip.n_frames, size=2)
        appearance[b] = clip.frames[i]
        target[b] = clip.frames[j]
        rasters[b] = rasterize_landmarks(clip.landmarks[j], cfg)
    return VaePairBatch(
        to_tensor(appearance, device=device),
        to_tensor(target, device=device),
        to_tensor(rasters, device=device),
    )


def train_vae_step(
    batch: VaePairBatch,
    nets: VaeNets,
    optimizers: VaeOptimizers,
    weights: VaeLossWeights,
    step: int = 0,
    generator: torch.Generator | None = None,
    adversarial: bool = True,
) -> VaeLossBreakdown:
    """One alternating update: discriminator first, then the autoencoder.

    The discriminator is updated on ``l_disc`` with the reconstruction detached.
    The autoencoder is then updated on ``l_rec + λ_kl·l_kl + λ_adv·l_gen_adv``,
    where the adversarial term uses the updated discriminator whose parameters are
    frozen for that half-step.

    Returns:
        The losses of the batch after both updates, at posterior means.

    Raises:
        NonFiniteLossError: If a loss is NaN or infinite. No update is applied
            for the half-step that produced it.
    """
    vae, disc = nets.vae, nets.discriminator
    vae.train()
    disc.train()
    x_hat, latents = vae.reconstruct(
        batch.appearance_frames,
        batch.target_frames,
        batch.target_landmark_images,
        generator,
    )

    if adversarial:
        l_disc = discriminator_loss(disc(batch.target_frames), disc(x_hat.detach()))
        ensure_finite(step, {"l_disc": float(l_disc.detach())})
        optimizers.discriminator.zero_grad(set_to_none=True)
        l_disc.backward()
        optimizers.discriminator.step()

    disc.requires_grad_(False)
    try:
        l_rec = reconstruction_loss(
            x_hat, batch.target_frames, nets.features, weights.perceptual_weight
        )
        l_kl = latent_kl(latents)
        l_gen_adv = (
            generator_adversarial_loss(disc(x_hat))
            if adversarial
            else x_hat.new_zeros(())
        )
        total = l_rec + weights.lambda_kl * l_kl + weights.lambda_adv * l_gen_adv
        ensure_finite(
            step,
            {
                "l_rec": float(l_rec.detach()),
                "l_kl": float(l_kl.detach()),
                "l_gen_adv": float(l_gen_adv.detach()),
            },
        )
        optimizers.generator.zero_grad(set_to_none=True)
        total.backward()
        optimizers.generator.step()
    finally:
        disc.requires_grad_(True)

    with evaluating(vae, disc):
        losses = vae_losses(
            batch, vae, disc, weights, generator, nets.features, adversarial
        )
    ensure_finite(step, losses.model_dump())
    return losses


def save_vae_checkpoint(
    run_dir: RunDirectory, nets: VaeNets, config: RunConfig, step: int
) -> None:
    """Write a stage-one checkpoint."""
    run_dir.checkpoints.max_revisions = config.vae_training.keep_checkpoints
    run_dir.checkpoints.save(
        TrainingStage.vae, step, nets.modules(), config=config.model_dump(mode="json")
    )


def load_vae(run_dir: RunDirectory, config: RunConfig) -> FrameAutoencoder:
    """The newest stage-one autoencoder of a run, in evaluation mode.

    Raises:
        StageOrderError: If the run has no stage-one checkpoint.
    """
    if not run_dir.checkpoints.has_checkpoint(TrainingStage.vae):
        raise StageOrderError(
            f"No VAE checkpoint in {run_dir.path}; run train-vae first"
        )
    vae = build_vae(config)
    run_dir.checkpoints.load_into(TrainingStage.vae, {"vae": vae})
    vae.eval()
    vae.requires_grad_(False)
    return vae


def train_vae(
    clips: Sequence[VideoClip],
    config: RunConfig,
    run_dir: RunDirectory | None = None,
) -> VaeTrainingResult:
    """Train stage one on filtered clips.

    Args:
        clips: Training clips. Pairs are drawn within each clip.
        config: Shapes, scale, ablation and :class:`VaeTrainingSettings`.
        run_dir: When given, losses are logged to ``logs/vae_loss.csv`` and
            checkpoints are written every ``checkpoint_interval`` steps and at the
            end.

    Returns:
        The trained networks and loss history.

    Raises:
        NonFiniteLossError: If a loss becomes non-finite. Checkpoints written
            before that step are kept.
    """
    settings = config.vae_training
    disentangled = config.ablation.ablation != Ablation.no_disentangle
    nets = VaeNets.build(config)
    optimizers = VaeOptimizers.build(nets, settings.learning_rate)
    weights = VaeLossWeights.from_settings(settings, config.shape, disentangled)
    rng = np.random.default_rng([config.seed, 1])
    generator = torch_generator(config.seed, config.device)
    result = VaeTrainingResult(nets)

    logger.info(
        f"Training {type(nets.vae).__name__} for {settings.steps} steps on "
        f"{len(clips)} clips, parameters {module_summary(nets.modules())}"
    )
    buffer = LossLogBuffer(
        run_dir.loss_log(TrainingStage.vae) if run_dir is not None else None
    )
    started = time.perf_counter()
    try:
        for step in range(1, settings.steps + 1):
            batch = sample_pair_batch(
                clips, settings.batch_size, rng, config.shape, config.device
            )
            losses = train_vae_step(
                batch,
                nets,
                optimizers,
                weights,
                step,
                generator,
                adversarial=step > settings.disc_start,
            )
            result.history.append(losses)
            buffer.add(
                LossRecord(
                    stage=TrainingStage.vae,
                    step=step,
                    losses=losses.model_dump(),
                    learning_rate=settings.learning_rate,
                    wall_time_s=time.perf_counter() - started,
                )
            )
            if run_dir is not None and (
                step % settings.checkpoint_interval == 0 or step == settings.steps
            ):
                save_vae_checkpoint(run_dir, nets, config, step)
            if step % DEBUG_INTERVAL == 0:
                logger.debug(f"VAE step {step}: l_rec={losses.l_rec:.4f}")
    finally:
        buffer.flush()

    nets.vae.eval()
    logger.info(
        f"Finished VAE training after {result.steps} steps, "
        f"final l_rec={result.history[-1].l_rec:.4f}"
        if result.history
        else "Finished VAE training without steps"
    )
    return result
