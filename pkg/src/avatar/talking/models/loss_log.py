"""A single row of a training loss curve."""

from pydantic import BaseModel, Field

from avatar.talking.models._enums import TrainingStage


class LossRecord(BaseModel):
    """Losses logged after one optimisation step."""

    stage: TrainingStage
    step: int = Field(ge=0)
    losses: dict[str, float]
    learning_rate: float
    wall_time_s: float = Field(ge=0)

    def to_row(self) -> dict[str, float | int | str]:
        """Flatten to a CSV row with one column per loss."""
        return {
            "stage": str(self.stage),
            "step": self.step,
            **self.losses,
            "learning_rate": self.learning_rate,
            "wall_time_s": self.wall_time_s,
        }
