"""Manifests describing the on-disk clip containers and checkpoints."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

from avatar.talking import __version__
from avatar.talking.models._enums import TrainingStage  # noqa: TC001
from avatar.talking.types import PositiveFloat, VersionStr  # noqa: TC001


class ArrayEntry(BaseModel):
    """A raw little-endian float32 array stored next to a manifest."""

    file: str
    """File name relative to the manifest's directory."""

    shape: list[int]
    """Row-major shape of the array."""

    @property
    def size(self) -> int:
        """Number of float32 elements the file must hold."""
        size = 1
        for dim in self.shape:
            size *= dim
        return size


class ClipManifest(BaseModel):
    """The ``manifest.json`` of a clip container.

    All keys are required; a manifest missing any of them is corrupt.
    """

    schema_version: Literal[1] = 1
    dtype: Literal["<f4"] = "<f4"
    fps: PositiveFloat
    identity_id: str
    arrays: dict[str, ArrayEntry]


class CheckpointParameter(ArrayEntry):
    """One named parameter or buffer blob of a checkpoint."""

    name: str


class CheckpointHeader(BaseModel):
    """The ``header.json`` of a checkpoint directory."""

    schema_version: Literal[1] = 1
    version: VersionStr = Field(default=__version__)
    stage: TrainingStage
    step: int = Field(ge=0)
    config: dict[str, Any]
    """The run configuration the checkpoint was trained with."""

    parameters: list[CheckpointParameter]
    checksum: str
    """SHA-256 over the blobs, in parameter order."""


class CorpusIndex(BaseModel):
    """The ``corpus.json`` listing the clip containers of a corpus directory."""

    clips: list[str] = Field(default_factory=list)
    """Container directory names relative to the corpus directory."""

    fps: PositiveFloat = 25.0


class LatentCacheIndex(BaseModel):
    """The ``latents/index.json`` of the stage-two latent cache.

    The cache is only valid for the autoencoder checkpoint it was computed with.
    """

    vae_checksum: str
    entries: dict[str, ArrayEntry] = Field(default_factory=dict)
    """Latent sequences by clip name, relative to the ``latents`` directory."""


class VideoManifest(BaseModel):
    """The ``video.json`` written next to exported frames."""

    schema_version: Literal[1] = 1
    fps: PositiveFloat
    n_frames: int = Field(ge=0)
    height: int = Field(gt=0)
    width: int = Field(gt=0)
    frames: list[str]
    """Image file names in playback order."""
