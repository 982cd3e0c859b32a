"""Model of the lock file guarding a run directory against concurrent writers."""

from pydantic import BaseModel, Field

from avatar.talking import __version__
from avatar.talking.types import VersionStr


class LockInfo(BaseModel):
    """Contents of a run directory ``.lock`` file."""

    pid: int
    """Process ID of the lock holder."""

    hostname: str
    user: str

    acquired_at: float
    """Unix timestamp when the lock was taken."""

    expires_at: float

    version: VersionStr = Field(default=__version__)
