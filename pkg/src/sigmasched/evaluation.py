"""Coverage/delay metrics, parameter sweeps, tradeoff curves and bounded AUC.

A decision point covers an event when it is strictly earlier than the event.
Per participant, coverage is the covered fraction of analyzable events and
the delay is the mean lead time over covered events only. A cohort point is
the fraction of participants whose coverage reaches a threshold, paired with
the mean of participant delays in hours. Sweeping ``c`` (or the fixed offset)
traces a tradeoff curve; its area above the 50% line, up to 5 hours of
delay, is the bounded AUC in percentage-point hours.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import blr, residual
from .core import SLOTS, BehaviorEvent, DecisionPoint, PredictionWithUQ, SlotKind, resolve_user_time
from .data import Dataset, Participant

logger = logging.getLogger(__name__)

DEFAULT_C_GRID = tuple(float(v) for v in np.linspace(-3.0, 0.0, 31))
DEFAULT_F_GRID = tuple(float(v) for v in np.linspace(-360.0, 0.0, 37))
DEFAULT_THRESHOLDS = (0.66, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99)
AUC_FLOOR_PCT = 50.0
AUC_MAX_DELAY_H = 5.0


class Method(str, Enum):
    SIGMA = "sigma"
    FIXED = "fixed"


class Predictor(str, Enum):
    RESIDUAL = "residual"
    BLR = "blr"
    # User-provided time with one constant sigma for everyone; used to check
    # that the two scheduling rules coincide when uncertainty never varies.
    CONSTANT = "constant"


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class ParticipantMetrics:
    participant: str
    K: int
    P: int
    coverage: float
    mean_delay_min: float  # nan when P == 0


@dataclass(frozen=True)
class TradeoffPoint:
    parameter: float
    mean_delay_hours: float
    proportion_meeting: float


@dataclass(frozen=True)
class TradeoffCurve:
    method: Method
    threshold: float
    points: tuple[TradeoffPoint, ...]


def participant_metrics(
    dps: Sequence[DecisionPoint], events: Sequence[BehaviorEvent]
) -> ParticipantMetrics:
    """Coverage and mean delay for one participant.

    ``events`` should already exclude intervened events; every event needs a
    decision point on the same (day, slot).
    """
    if not events:
        raise EmptyInput("no analyzable events")
    by_cell = {(dp.day_index, dp.slot): dp for dp in dps}
    delays = []
    for e in events:
        dp = by_cell.get((e.day_index, e.slot))
        if dp is None:
            raise KeyError(f"no decision point for day {e.day_index} {e.slot.value}")
        if dp.time < e.true_time:
            delays.append(e.true_time - dp.time)
    K, P = len(events), len(delays)
    mean_delay = float(np.mean(delays)) if delays else float("nan")
    return ParticipantMetrics(events[0].participant, K, P, P / K, mean_delay)


def cohort_point(
    metrics: Sequence[ParticipantMetrics], threshold: float, parameter: float = float("nan")
) -> TradeoffPoint:
    if not metrics:
        raise EmptyInput("no participants")
    meeting = sum(1 for m in metrics if m.coverage >= threshold)
    delays = [m.mean_delay_min for m in metrics if m.P > 0]
    mean_delay_h = float(np.mean(delays)) / 60.0 if delays else 0.0
    return TradeoffPoint(parameter, mean_delay_h, meeting / len(metrics))


# ---------------------------------------------------------------------------
# Replay: predictions for every (day, slot) cell, independent of c and F.


@dataclass
class ParticipantReplay:
    """Predictions for one participant over all cells, with outcomes attached."""

    participant: str
    day: NDArray[np.int64]
    slot: list[SlotKind]
    user_time: NDArray[np.float64]
    t_hat: NDArray[np.float64]
    sigma: NDArray[np.float64]
    floor: NDArray[np.float64]
    true_time: NDArray[np.float64]  # nan where no event
    analyzable: NDArray[np.bool_]

    @classmethod
    def from_cells(cls, participant: Participant, cells: Iterable) -> "ParticipantReplay":
        events = {(e.day_index, e.slot): e for e in participant.events}
        days, slots, users, t_hats, sigmas, truths, keep = [], [], [], [], [], [], []
        for day, slot, user_time, pred in cells:
            e = events.get((day, slot))
            days.append(day)
            slots.append(slot)
            users.append(user_time)
            t_hats.append(pred.t_hat)
            sigmas.append(pred.sigma)
            truths.append(e.true_time if e is not None else np.nan)
            keep.append(e is not None and not e.intervened_before)
        return cls(
            participant.id,
            np.asarray(days, dtype=np.int64),
            slots,
            np.asarray(users, dtype=float),
            np.asarray(t_hats, dtype=float),
            np.asarray(sigmas, dtype=float),
            np.asarray([s.floor for s in slots], dtype=float),
            np.asarray(truths, dtype=float),
            np.asarray(keep, dtype=bool),
        )

    def predictions(self) -> list[PredictionWithUQ]:
        return [PredictionWithUQ(t, s) for t, s in zip(self.t_hat, self.sigma)]


def n_days(dataset: Dataset) -> int:
    configured = dataset.meta.get("synth_config", {}).get("n_days")
    last = max((e.day_index for p in dataset.participants for e in p.events), default=-1)
    return max(int(configured or 0), last + 1)


def _constant_cells(participant: Participant, anchor: int, days: int, sigma: float):
    for day in range(days):
        for slot in SLOTS:
            user_time = resolve_user_time(participant.schedule, day, slot, anchor)
            yield day, slot, user_time, PredictionWithUQ(user_time, sigma)


def replay_dataset(
    dataset: Dataset,
    predictor: Predictor | str,
    *,
    priors: blr.PriorSpec | None = None,
    constant_sigma: float | None = None,
    participants: Sequence[str] | None = None,
) -> list[ParticipantReplay]:
    """Predict every cell for every participant.

    For the BLR predictor without explicit ``priors``, each participant is
    replayed with priors elicited from all other participants
    (leave-one-participant-out).
    """
    predictor = Predictor(predictor)
    days = n_days(dataset)
    anchor = dataset.anchor
    chosen = [p for p in dataset.participants if participants is None or p.id in participants]
    if predictor is Predictor.RESIDUAL:
        return [
            ParticipantReplay.from_cells(p, residual.replay_participant(p, anchor, days))
            for p in chosen
        ]
    if predictor is Predictor.CONSTANT:
        if constant_sigma is None or constant_sigma < 0:
            raise ValueError("constant predictor needs constant_sigma >= 0")
        return [
            ParticipantReplay.from_cells(p, _constant_cells(p, anchor, days, constant_sigma))
            for p in chosen
        ]

    designs = None
    if priors is None:
        designs = {p.id: blr.design_matrix(p, anchor) for p in dataset.participants}
    out = []
    for p in chosen:
        prior = priors
        if prior is None:
            prior = blr.elicit_priors([d for pid, d in designs.items() if pid != p.id])
        out.append(ParticipantReplay.from_cells(p, blr.replay_participant(p, prior, anchor, days)))
    return out


# ---------------------------------------------------------------------------
# Scheduling over a replay, vectorized


def scheduled_times(
    replay: ParticipantReplay, method: Method | str, parameter: float
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Decision-point times for every cell plus a clipped mask."""
    method = Method(method)
    if parameter > 0:
        raise ValueError(f"{method.value} parameter must be <= 0, got {parameter}")
    if method is Method.SIGMA:
        raw = replay.t_hat + parameter * replay.sigma
    else:
        raw = replay.t_hat + parameter
    clipped = raw < replay.floor
    return np.where(clipped, replay.floor, raw), clipped


def replay_metrics(
    replay: ParticipantReplay, method: Method | str, parameter: float
) -> ParticipantMetrics:
    times, _ = scheduled_times(replay, method, parameter)
    mask = replay.analyzable
    K = int(mask.sum())
    if K == 0:
        raise EmptyInput(f"participant {replay.participant} has no analyzable events")
    t_star = replay.true_time[mask]
    t = times[mask]
    covered = t < t_star
    P = int(covered.sum())
    mean_delay = float(np.mean(t_star[covered] - t[covered])) if P else float("nan")
    return ParticipantMetrics(replay.participant, K, P, P / K, mean_delay)


def _as_replays(data: Dataset | Sequence[ParticipantReplay], predictor, **kwargs):
    if isinstance(data, Dataset):
        return replay_dataset(data, predictor, **kwargs)
    return list(data)


def _sorted_curve(method: Method, threshold: float, points: list[TradeoffPoint]) -> TradeoffCurve:
    order = sorted(range(len(points)), key=lambda i: (points[i].mean_delay_hours, i))
    return TradeoffCurve(method, threshold, tuple(points[i] for i in order))


def sweep(
    data: Dataset | Sequence[ParticipantReplay],
    predictor: Predictor | str,
    method: Method | str,
    grid: Sequence[float],
    threshold: float,
    **replay_kwargs,
) -> TradeoffCurve:
    """One tradeoff curve: a full schedule-and-score pass per grid value."""
    return sweep_thresholds(data, predictor, method, grid, [threshold], **replay_kwargs)[0]


def sweep_thresholds(
    data: Dataset | Sequence[ParticipantReplay],
    predictor: Predictor | str,
    method: Method | str,
    grid: Sequence[float],
    thresholds: Sequence[float],
    **replay_kwargs,
) -> list[TradeoffCurve]:
    """Curves for several thresholds sharing one set of per-grid metrics."""
    method = Method(method)
    replays = _as_replays(data, predictor, **replay_kwargs)
    per_grid = [(g, [replay_metrics(r, method, g) for r in replays]) for g in grid]
    return [
        _sorted_curve(method, th, [cohort_point(ms, th, g) for g, ms in per_grid])
        for th in thresholds
    ]


def auc(curve: TradeoffCurve) -> float:
    """Bounded area under a tradeoff curve, in percentage-point hours.

    Points are sorted by delay and joined linearly; the first and last values
    extend flat to 0 and 5 hours. The integrand is the proportion in percent
    minus 50, floored at 0. Crossings of the 50% line are inserted as knots
    so the trapezoid rule is exact for the piecewise-linear integrand.
    """
    if not curve.points:
        raise EmptyInput("empty curve")
    pts = sorted(
        ((p.mean_delay_hours, p.proportion_meeting * 100.0) for p in curve.points),
    )
    xs = np.array([x for x, _ in pts])
    ys = np.array([y for _, y in pts])

    knots = [0.0, AUC_MAX_DELAY_H]
    knots.extend(float(x) for x in xs if 0.0 < x < AUC_MAX_DELAY_H)
    knots = sorted(set(knots))

    # One-sided limits keep jumps at tied delays on the correct side.
    total = 0.0
    for x0, x1 in zip(knots[:-1], knots[1:]):
        y0 = _limit(xs, ys, x0, side="right")
        y1 = _limit(xs, ys, x1, side="left")
        g0, g1 = y0 - AUC_FLOOR_PCT, y1 - AUC_FLOOR_PCT
        if g0 >= 0 and g1 >= 0:
            total += 0.5 * (g0 + g1) * (x1 - x0)
        elif g0 > 0 or g1 > 0:
            cross = x0 + (x1 - x0) * g0 / (g0 - g1)
            if g0 > 0:
                total += 0.5 * g0 * (cross - x0)
            else:
                total += 0.5 * g1 * (x1 - cross)
    return float(total)


def _limit(xs: NDArray, ys: NDArray, x: float, side: str) -> float:
    """One-sided limit of the piecewise-linear, flat-extended curve at ``x``."""
    if side == "right":
        i = int(np.searchsorted(xs, x, side="right"))
        if i == 0:
            return float(ys[0])
        if i == len(xs):
            return float(ys[-1])
        # x sits in [xs[i-1], xs[i]); the last point at x defines the right limit.
        x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
    else:
        i = int(np.searchsorted(xs, x, side="left"))
        if i == 0:
            return float(ys[0])
        if i == len(xs):
            return float(ys[-1])
        # x sits in (xs[i-1], xs[i]]; the first point at x defines the left limit.
        x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
    return float(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
