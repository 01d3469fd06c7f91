"""Schedule decision points ahead of predicted behavior times with
uncertainty-scaled lead times, and evaluate coverage/delay tradeoffs."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    BehaviorEvent,
    DecisionPoint,
    PredictionWithUQ,
    SlotKind,
    UserProvidedSchedule,
    resolve_user_time,
)
from .scheduler import FixedPolicy, SigmaPolicy, clip_to_slot, schedule_fixed, schedule_sigma  # noqa: E402

__all__ = [
    "BehaviorEvent",
    "DecisionPoint",
    "FixedPolicy",
    "PredictionWithUQ",
    "SigmaPolicy",
    "SlotKind",
    "UserProvidedSchedule",
    "clip_to_slot",
    "resolve_user_time",
    "schedule_fixed",
    "schedule_sigma",
]
