"""Helpers shared by the VAE and diffusion training loops."""

from __future__ import annotations

import contextlib
import math
from typing import TYPE_CHECKING, Any, Final, Self

from avatar.talking._logging import null_logger

if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping

    import torch

    from avatar.talking._resources.loss_log_manager import LossLogManager
    from avatar.talking.models.loss_log import LossRecord

logger: Final = null_logger(__name__)

LOG_FLUSH_INTERVAL: Final = 50


class NonFiniteLossError(FloatingPointError):
    """Raised when a training loss becomes NaN or infinite.

    Attributes:
        step: The optimisation step that produced the loss.
        losses: Every loss value of that step.
    """

    def __init__(self: Self, step: int, losses: Mapping[str, float]) -> None:
        """Record the failing step and its loss values."""
        self.step = step
        self.losses = dict(losses)
        values = ", ".join(f"{k}={v:.6g}" for k, v in self.losses.items())
        super().__init__(f"Non-finite loss at step {step}: {values}")


def ensure_finite(step: int, losses: Mapping[str, float]) -> None:
    """Raise :class:`NonFiniteLossError` unless every value is finite."""
    if not all(math.isfinite(v) for v in losses.values()):
        error = NonFiniteLossError(step, losses)
        logger.error(str(error))
        raise error


def trainable_parameters(*modules: torch.nn.Module) -> list[torch.nn.Parameter]:
    """Parameters of ``modules`` that require gradients, in module order."""
    return [p for m in modules for p in m.parameters() if p.requires_grad]


def module_summary(modules: Mapping[str, torch.nn.Module]) -> dict[str, Any]:
    """Parameter counts per named module, for logging."""
    return {
        name: sum(p.numel() for p in module.parameters())
        for name, module in modules.items()
    }


class StageOrderError(RuntimeError):
    """Raised when a stage starts before the checkpoint it builds on exists."""


@contextlib.contextmanager
def evaluating(*modules: torch.nn.Module) -> Iterator[None]:
    """Put ``modules`` in evaluation mode and restore their previous modes."""
    modes = [m.training for m in modules]
    for m in modules:
        m.eval()
    try:
        yield
    finally:
        for m, mode in zip(modules, modes, strict=True):
            m.train(mode)


class LossLogBuffer:
    """Collects :class:`LossRecord` rows and appends them to a loss log in chunks.

    Without a log the buffer drops every record.
    """

    def __init__(
        self: Self,
        log: LossLogManager | None,
        flush_interval: int = LOG_FLUSH_INTERVAL,
    ) -> None:
        """Buffer records for ``log``, flushing every ``flush_interval`` records."""
        self._log = log
        self._flush_interval = flush_interval
        self._pending: list[LossRecord] = []

    def add(self: Self, record: LossRecord) -> None:
        """Buffer one record, flushing when the buffer is full."""
        if self._log is None:
            return
        self._pending.append(record)
        if len(self._pending) >= self._flush_interval:
            self.flush()

    def flush(self: Self) -> None:
        """Append every buffered record to the log."""
        if self._log is not None and self._pending:
            self._log.append(self._pending)
            self._pending.clear()
