"""Fixtures shared by the stage-two tests."""

from collections.abc import Callable

import pytest
import torch

from avatar.talking.diffusion.model import SpeechToMotion, build_speech_to_motion
from avatar.talking.diffusion.networks import ConditioningBundle
from avatar.talking.models._enums import Ablation
from avatar.talking.models.run_config import AblationSettings, RunConfig


@pytest.fixture
def landmark_config(tiny_config: RunConfig) -> RunConfig:
    """``tiny_config`` diffusing landmark coordinates."""
    return tiny_config.model_copy(
        update={"ablation": AblationSettings(ablation=Ablation.landmark_pred)}
    )


@pytest.fixture
def motion_model(tiny_config: RunConfig) -> SpeechToMotion:
    """An untrained motion-latent model in evaluation mode."""
    return build_speech_to_motion(tiny_config).eval()


@pytest.fixture
def landmark_model(landmark_config: RunConfig) -> SpeechToMotion:
    """An untrained landmark model in evaluation mode."""
    return build_speech_to_motion(landmark_config).eval()


@pytest.fixture
def make_cond() -> Callable[[SpeechToMotion, int, int], ConditioningBundle]:
    """Build seeded conditioning for a model, batch size and length."""

    def make(model: SpeechToMotion, batch: int, length: int) -> ConditioningBundle:
        generator = torch.Generator().manual_seed(5)
        speech = torch.rand(batch, length, 16, generator=generator)
        poses = 0.1 * torch.randn(batch, length, 3, generator=generator)
        reference = torch.randn(batch, *model.frame_shape, generator=generator)
        with torch.no_grad():
            return model.condition(speech, poses, reference)

    return make
