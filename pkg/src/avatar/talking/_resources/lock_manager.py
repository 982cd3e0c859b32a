"""Single-writer lock of a run directory."""

from __future__ import annotations

import contextlib
import os
import socket
import time
import uuid
from pathlib import Path
from typing import TYPE_CHECKING, Final, Literal, Self

from avatar.talking._logging import null_logger
from avatar.talking.models.lock_info import LockInfo

from .pydantic_resource_manager import PydanticResourceManager

if TYPE_CHECKING:
    from types import TracebackType

    # Avoid circular dependency for type hint in __init__ only
    from avatar.talking._run_dir import RunDirectory

logger: Final = null_logger(__name__)

DEFAULT_LOCK_TIMEOUT: Final[int] = 6 * 3600
"""Seconds a lock lives without a refresh before it is considered stale."""

WAIT_POLL_S: Final = 0.5


class LockError(Exception):
    """Raised when the lock cannot be acquired."""


class LockManager(PydanticResourceManager[LockInfo]):
    """Manages the ``.lock`` file of a run directory.

    A training or generation command acquires the lock for its whole duration;
    every write to the run directory first calls :meth:`ensure_can_write`.
    """

    def __init__(
        self: Self,
        run_dir: RunDirectory,
        timeout_seconds: int = DEFAULT_LOCK_TIMEOUT,
    ) -> None:
        """Initializes the lock manager.

        Args:
            run_dir: The run directory to guard
            timeout_seconds: Seconds after which a held lock expires
        """
        super().__init__(run_dir, LockInfo)
        self._timeout_seconds = timeout_seconds
        self._acquired_at: float | None = None

    @property
    def relative_path(self: Self) -> Path:
        """Returns the relative path to the .lock file."""
        return Path(".lock")

    def acquire(self: Self, wait: bool = False, wait_timeout: float = 5.0) -> None:
        """Acquire the lock.

        Args:
            wait: If true, poll until the lock becomes available
            wait_timeout: Maximum time to wait in seconds

        Raises:
            LockError: If the lock cannot be acquired
        """
        if self._acquired_at is not None:
            raise LockError("Lock already acquired")
        if wait and wait_timeout <= 0:
            raise ValueError("wait_timeout must be positive")

        start_time = time.time()
        while True:
            if self.exists and self._is_stale():
                logger.warning(f"Removing stale lock at {self.path}")
                with contextlib.suppress(OSError):
                    self.path.unlink()

            if self._try_acquire():
                logger.debug(f"Acquired lock at {self.path}")
                return

            if not wait:
                holder = self.safe_load(force=True)
                if holder is None:
                    raise LockError(
                        f"Invalid lock file exists at {self.path}. "
                        "This file should be removed."
                    )
                raise LockError(
                    f"Run directory is locked by {holder.user}@{holder.hostname} "
                    f"(PID: {holder.pid}) until {time.ctime(holder.expires_at)}"
                )
            if time.time() - start_time > wait_timeout:
                raise LockError(f"Timeout waiting for lock after {wait_timeout}s")
            time.sleep(WAIT_POLL_S)

    def _try_acquire(self: Self) -> bool:
        """Write the lock to a unique temporary file and hard-link it into place.

        ``os.link`` fails if the lock already exists, which makes acquisition atomic
        also on network filesystems.
        """
        acquired_at = time.time()
        info = LockInfo(
            pid=os.getpid(),
            hostname=socket.gethostname(),
            user=os.getenv("USER", "unknown"),
            acquired_at=acquired_at,
            expires_at=acquired_at + self._timeout_seconds,
        )
        suffix = uuid.uuid4().hex[:8]
        temp_path = self.path.parent / f".lock.{info.hostname}.{info.pid}.{suffix}"
        try:
            fd = os.open(temp_path, os.O_CREAT | os.O_WRONLY | os.O_EXCL)
            try:
                os.write(fd, info.model_dump_json(indent=2).encode())
                os.fsync(fd)
            finally:
                os.close(fd)
            try:
                os.link(temp_path, self.path)
            except OSError:
                return False
            self._cache = info
            self._acquired_at = acquired_at
            return True
        finally:
            with contextlib.suppress(OSError):
                temp_path.unlink()

    def is_locked(self: Self) -> bool:
        """Whether anyone holds an unexpired lock."""
        info = self.safe_load(force=True)
        return info is not None and time.time() < info.expires_at

    def is_acquired(self: Self) -> bool:
        """Whether this instance currently holds the lock."""
        if self._acquired_at is None:
            return False
        info = self.safe_load(force=True)
        return info is not None and self._is_mine(info) and not self._is_stale(info)

    def ensure_can_write(self: Self) -> None:
        """Raise PermissionError if another process holds a live lock."""
        info = self.safe_load(force=True)
        if info is None or self.is_acquired() or self._is_stale(info):
            return
        raise PermissionError(
            "Cannot write to run directory because it is locked by "
            f"{info.user}@{info.hostname} (PID: {info.pid}). "
            f"Lock expires at {time.ctime(info.expires_at)}."
        )

    def refresh(self: Self) -> None:
        """Extend the expiry of a held lock by the full timeout.

        Every checkpoint write calls this while the lock is held.

        Raises:
            LockError: If this instance does not hold the lock
        """
        info = self.safe_load(force=True)
        if info is None or self._acquired_at is None or not self._is_mine(info):
            raise LockError("Cannot refresh: the lock is not held by this process")

        refreshed = info.model_copy(
            update={"expires_at": time.time() + self._timeout_seconds}
        )
        temp_path = self.path.parent / f".lock.tmp.{uuid.uuid4().hex[:8]}"
        try:
            temp_path.write_text(refreshed.model_dump_json(indent=2))
            temp_path.replace(self.path)
        except OSError as e:
            with contextlib.suppress(OSError):
                temp_path.unlink()
            raise LockError(f"Failed to refresh lock: {e}") from e
        self._cache = refreshed
        logger.debug(f"Refreshed lock at {self.path}")

    def release(self: Self) -> None:
        """Release the lock if this instance holds it."""
        info = self.safe_load(force=True)
        if info is not None and self._is_mine(info):
            with contextlib.suppress(OSError):
                self.path.unlink()
            logger.debug(f"Released lock at {self.path}")
        self._acquired_at = None
        self._cache = None

    def save(self: Self, model: LockInfo) -> None:
        """Locks are only written through :meth:`acquire` and :meth:`refresh`."""
        raise LockError("The lock file is written by acquire() and refresh() only")

    def safe_load(self: Self, force: bool = False) -> LockInfo | None:
        """Load the lock info, returning None if it is missing or corrupt."""
        try:
            return self.load(force=force, store_cache=False)
        except (FileNotFoundError, ValueError):
            return None

    def _is_mine(self: Self, info: LockInfo) -> bool:
        return (
            info.pid == os.getpid()
            and info.hostname == socket.gethostname()
            and info.acquired_at == self._acquired_at
        )

    def _is_stale(self: Self, info: LockInfo | None = None) -> bool:
        """Whether the lock has expired or its process is gone."""
        if info is None:
            info = self.safe_load(force=True)
        if info is None or time.time() > info.expires_at:
            return True
        # The PID of another host cannot be checked.
        if info.hostname != socket.gethostname():
            return False
        try:
            os.kill(info.pid, 0)
        except OSError:
            return True
        return False

    def __enter__(self: Self) -> Self:
        """Acquire on entry."""
        self.acquire()
        return self

    def __exit__(
        self: Self,
        exc_type: type[BaseException] | None,
        exc_val: BaseException | None,
        exc_tb: TracebackType | None,
    ) -> Literal[False]:
        """Release on exit."""
        self.release()
        return False
