"""Training loss curves stored as CSV files in a run directory."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Final, Self

import pandas as pd

from avatar.talking._logging import null_logger
from avatar.talking._utils import path_exists
from avatar.talking.models._enums import TrainingStage
from avatar.talking.models.loss_log import LossRecord

if TYPE_CHECKING:
    from collections.abc import Iterable

    # Avoid circular dependency for type hint in __init__ only
    from avatar.talking._run_dir import RunDirectory

logger: Final = null_logger(__name__)

NON_LOSS_COLUMNS: Final = ("stage", "step", "learning_rate", "wall_time_s")


class LossLogManager:
    """Appends :class:`LossRecord` rows to ``logs/<stage>_loss.csv``."""

    def __init__(self: Self, run_dir: RunDirectory, stage: TrainingStage | str) -> None:
        """Initializes the loss log of one training stage."""
        self.run_dir = run_dir
        self.stage = TrainingStage(stage)
        self._cached_dataframe: pd.DataFrame | None = None

    @property
    def relative_path(self: Self) -> Path:
        """Returns the relative path to the CSV file."""
        return Path("logs") / f"{self.stage}_loss.csv"

    @property
    def path(self: Self) -> Path:
        """Returns the full path to the CSV file."""
        return self.run_dir.get_file_path(self.relative_path)

    @property
    def exists(self: Self) -> bool:
        """Returns whether any row has been logged."""
        return path_exists(self.path)

    def append(self: Self, records: LossRecord | Iterable[LossRecord]) -> None:
        """Append one or more rows.

        Raises:
            ValueError: If a record belongs to another stage.
        """
        batch = [records] if isinstance(records, LossRecord) else list(records)
        if not batch:
            return
        wrong = [r.stage for r in batch if r.stage != self.stage]
        if wrong:
            raise ValueError(
                f"Cannot log {wrong[0]} records to the {self.stage} loss log"
            )

        self.run_dir.lock.ensure_can_write()
        frame = pd.DataFrame([r.to_row() for r in batch])
        write_header = not self.exists
        if not write_header:
            columns = pd.read_csv(self.path, nrows=0).columns
            frame = frame.reindex(columns=columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(self.path, mode="a", header=write_header, index=False)
        self._cached_dataframe = None

    def read(self: Self) -> pd.DataFrame:
        """Return every logged row, or an empty frame if nothing is logged."""
        if self._cached_dataframe is None:
            self._cached_dataframe = (
                pd.read_csv(self.path) if self.exists else pd.DataFrame()
            )
        return self._cached_dataframe

    def loss_columns(self: Self) -> list[str]:
        """Names of the logged loss columns."""
        return [c for c in self.read().columns if c not in NON_LOSS_COLUMNS]

    def summary(self: Self, window: int = 10) -> pd.DataFrame:
        """First and last rolling means of every loss column.

        Args:
            window: Rolling window in logged rows.

        Returns:
            A frame indexed by loss name with columns ``first``, ``last`` and
            ``ratio`` (last / first).
        """
        df = self.read()
        columns = self.loss_columns()
        if df.empty or not columns:
            return pd.DataFrame(columns=["first", "last", "ratio"])
        rolling = df[columns].rolling(window=min(window, len(df)), min_periods=1)
        means = rolling.mean()
        first = means.iloc[min(window, len(df)) - 1]
        last = means.iloc[-1]
        return pd.DataFrame({"first": first, "last": last, "ratio": last / first})
