"""Prediction from user-provided times with residual-based uncertainty.

The predicted time is the user-provided time itself. The uncertainty is the
standard error of a prediction interval built from the errors observed so
far on the same (participant, slot) stream::

    sigma = s * sqrt(1 + 1/m)

where ``s`` is the sample SD of the ``m`` past errors. Only errors already
observed are used, so the value is available before the behavior happens.
With fewer than two errors the SD is undefined and ``sigma`` is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

from .core import SLOTS, PredictionWithUQ, SlotKind, resolve_user_time
from .data import Participant


@dataclass(frozen=True)
class ResidualState:
    """Welford accumulator over prediction errors (minutes)."""

    m: int = 0
    mean_err: float = 0.0
    m2: float = 0.0

    def __post_init__(self) -> None:
        if self.m < 0 or self.m2 < 0:
            raise ValueError(f"invalid residual state {self}")
        if self.m == 0 and (self.mean_err != 0.0 or self.m2 != 0.0):
            raise ValueError("empty residual state must have zero mean and m2")

    @property
    def sd(self) -> float:
        """Sample SD of the errors seen so far (0 when fewer than two)."""
        if self.m < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.m - 1))


def update_residual(state: ResidualState, error: float) -> ResidualState:
    if not math.isfinite(error):
        raise ValueError(f"error must be finite, got {error}")
    m = state.m + 1
    delta = error - state.mean_err
    mean = state.mean_err + delta / m
    m2 = state.m2 + delta * (error - mean)
    return ResidualState(m, mean, max(m2, 0.0))


def predict_residual(state: ResidualState, user_time: float) -> PredictionWithUQ:
    if state.m < 2:
        return PredictionWithUQ(user_time, 0.0)
    return PredictionWithUQ(user_time, state.sd * math.sqrt(1.0 + 1.0 / state.m))


def replay_participant(
    participant: Participant, anchor: int, n_days: int
) -> Iterator[tuple[int, SlotKind, float, PredictionWithUQ]]:
    """Walk every (day, slot) cell in order, predicting before observing.

    Morning and evening keep separate error streams. Intervened events do
    not update them.
    """
    states = {slot: ResidualState() for slot in SLOTS}
    events = {(e.day_index, e.slot): e for e in participant.events}
    for day in range(n_days):
        for slot in SLOTS:
            user_time = resolve_user_time(participant.schedule, day, slot, anchor)
            yield day, slot, user_time, predict_residual(states[slot], user_time)
            event = events.get((day, slot))
            if event is not None and not event.intervened_before:
                states[slot] = update_residual(states[slot], event.true_time - user_time)
