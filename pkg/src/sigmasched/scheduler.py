"""Decision-point placement: uncertainty-scaled lead times and the fixed-offset baseline."""

from __future__ import annotations

from dataclasses import dataclass

from .core import DecisionPoint, PredictionWithUQ, SlotKind


@dataclass(frozen=True)
class SigmaPolicy:
    """Schedule ``c`` predictive SDs away from the predicted time (``c <= 0``)."""

    c: float

    def __post_init__(self) -> None:
        if self.c > 0:
            raise ValueError(f"critical value must be <= 0, got {self.c}")


@dataclass(frozen=True)
class FixedPolicy:
    """Schedule a constant ``offset_min`` minutes before the predicted time."""

    offset_min: float

    def __post_init__(self) -> None:
        if self.offset_min > 0:
            raise ValueError(f"fixed offset must be <= 0, got {self.offset_min}")


def clip_to_slot(slot: SlotKind, t: float) -> tuple[float, bool]:
    floor = slot.floor
    if t < floor:
        return floor, True
    return t, False


def _decision_point(
    raw: float, slot: SlotKind, participant: str, day_index: int
) -> DecisionPoint:
    time, clipped = clip_to_slot(slot, raw)
    return DecisionPoint(participant, day_index, slot, time, clipped)


def schedule_sigma(
    pred: PredictionWithUQ,
    policy: SigmaPolicy,
    slot: SlotKind,
    participant: str = "",
    day_index: int = 0,
) -> DecisionPoint:
    return _decision_point(pred.t_hat + policy.c * pred.sigma, slot, participant, day_index)


def schedule_fixed(
    t_hat: float,
    policy: FixedPolicy,
    slot: SlotKind,
    participant: str = "",
    day_index: int = 0,
) -> DecisionPoint:
    return _decision_point(t_hat + policy.offset_min, slot, participant, day_index)
