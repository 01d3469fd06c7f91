"""Small builders shared by the test modules."""

from __future__ import annotations

from sigmasched.core import BehaviorEvent, SlotKind, UserProvidedSchedule
from sigmasched.data import Participant


def make_participant(pid: str, times: dict[tuple[int, str], float],
                     sched: UserProvidedSchedule | None = None,
                     intervened: set[tuple[int, str]] = frozenset()) -> Participant:
    sched = sched or UserProvidedSchedule(pid, 450.0, 1260.0, 540.0, 1320.0)
    events = tuple(
        BehaviorEvent(pid, day, SlotKind(slot), t, (day, slot) in intervened)
        for (day, slot), t in sorted(times.items(), key=lambda kv: (kv[0][0], kv[0][1] != "morning"))
    )
    return Participant(sched, events)
