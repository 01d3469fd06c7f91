"""Domain types and time arithmetic shared across the package.

Times are plain ``float`` minutes since local midnight of the day an event
is assigned to. Evening behavior that happens after midnight stays on the
previous day with minutes above 1440, so one day never holds two evening
events. Validation happens where values enter a domain type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

MINUTES_PER_DAY = 1440.0
# Post-midnight evening events are allowed up to 06:00 the next day.
TIME_UPPER = 1800.0
# User-provided times in [00:00, 04:00) are treated as corrupted.
CORRUPT_BEFORE = 240.0

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


class SlotKind(str, Enum):
    MORNING = "morning"
    EVENING = "evening"

    @property
    def floor(self) -> float:
        """Earliest time a decision point for this slot may be scheduled."""
        return 240.0 if self is SlotKind.MORNING else 960.0

    @property
    def order(self) -> int:
        return 0 if self is SlotKind.MORNING else 1


SLOTS = (SlotKind.MORNING, SlotKind.EVENING)


def check_time(minutes: float, what: str = "time") -> float:
    """Return ``minutes`` as float, raising ``ValueError`` outside [0, 1800)."""
    m = float(minutes)
    if not math.isfinite(m) or m < 0.0 or m >= TIME_UPPER:
        raise ValueError(f"{what}={minutes!r} outside [0, {TIME_UPPER:g}) minutes")
    return m


def parse_weekday(value: int | str) -> int:
    """Weekday index with Monday = 0. Accepts an int or an English day name."""
    if isinstance(value, str):
        key = value.strip().lower()
        if key.isdigit():
            value = int(key)
        else:
            for i, name in enumerate(WEEKDAYS):
                if name.startswith(key) and len(key) >= 3:
                    return i
            raise ValueError(f"unknown weekday {value!r}")
    if not 0 <= int(value) <= 6:
        raise ValueError(f"weekday index must be in 0..6, got {value}")
    return int(value)


def weekday_of(day_index: int, anchor: int) -> int:
    return (anchor + day_index) % 7


def is_weekend(day_index: int, anchor: int) -> bool:
    return weekday_of(day_index, anchor) >= 5


@dataclass(frozen=True)
class BehaviorEvent:
    """One sensed occurrence of the target behavior."""

    participant: str
    day_index: int
    slot: SlotKind
    true_time: float
    intervened_before: bool = False

    def __post_init__(self) -> None:
        if self.day_index < 0:
            raise ValueError(f"day_index must be >= 0, got {self.day_index}")
        object.__setattr__(self, "slot", SlotKind(self.slot))
        object.__setattr__(self, "true_time", check_time(self.true_time, "true_time"))

    @property
    def key(self) -> tuple[int, int]:
        return (self.day_index, self.slot.order)


@dataclass(frozen=True)
class UserProvidedSchedule:
    """Typical behavior times a participant reported before the study."""

    participant: str
    weekday_morning: float
    weekday_evening: float
    weekend_morning: float
    weekend_evening: float

    def __post_init__(self) -> None:
        for name in ("weekday_morning", "weekday_evening", "weekend_morning", "weekend_evening"):
            value = check_time(getattr(self, name), name)
            if value < CORRUPT_BEFORE:
                raise ValueError(
                    f"{name}={value:g} falls in [00:00, 04:00); schedule for "
                    f"participant {self.participant!r} is treated as corrupted"
                )
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class PredictionWithUQ:
    t_hat: float
    sigma: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.t_hat):
            raise ValueError(f"t_hat must be finite, got {self.t_hat}")
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class DecisionPoint:
    participant: str
    day_index: int
    slot: SlotKind
    time: float
    clipped: bool = False

    def __post_init__(self) -> None:
        if self.time < self.slot.floor:
            raise ValueError(
                f"{self.slot.value} decision point at {self.time:g} precedes floor {self.slot.floor:g}"
            )


def resolve_user_time(
    schedule: UserProvidedSchedule, day_index: int, slot: SlotKind, anchor: int
) -> float:
    """User-provided time for ``slot`` on ``day_index``.

    ``anchor`` is the weekday of day 0 (Monday = 0).
    """
    if day_index < 0:
        raise ValueError(f"day_index must be >= 0, got {day_index}")
    weekend = is_weekend(day_index, anchor)
    if slot is SlotKind.MORNING:
        return schedule.weekend_morning if weekend else schedule.weekday_morning
    return schedule.weekend_evening if weekend else schedule.weekday_evening


def format_clock(minutes: float) -> str:
    """``HH:MM`` rendering; hours run past 24 for post-midnight times."""
    total = int(round(minutes))
    return f"{total // 60:02d}:{total % 60:02d}"
