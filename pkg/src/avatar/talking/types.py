"""Type annotations used in Pydantic models."""

from __future__ import annotations

from typing import Annotated, Self, TypeAlias

import annotated_types
from pydantic import BaseModel, Field

VersionStr: TypeAlias = Annotated[
    str, Field(pattern=r"(\d+(\.\d+){0,2}|\d+\.\d+\.[a-z0-9]+\+[a-z0-9.]+)")
]
PositiveFloat: TypeAlias = Annotated[float, annotated_types.Gt(0)]
NonNegativeFloat: TypeAlias = Annotated[float, annotated_types.Ge(0)]
PositiveInt: TypeAlias = Annotated[int, annotated_types.Gt(0)]
UnitInterval: TypeAlias = Annotated[float, annotated_types.Interval(ge=0, le=1)]
Radians: TypeAlias = Annotated[float, annotated_types.Interval(ge=-3.2, le=3.2)]
RGB: TypeAlias = tuple[UnitInterval, UnitInterval, UnitInterval]


class ResettableBaseModel(BaseModel):
    """A Pydantic BaseModel that implements reset()."""

    @classmethod
    def reset(cls) -> Self:
        """Return the model in its default state."""
        raise NotImplementedError
