"""Dataset ingestion, validation, splitting, and the seeded synthetic cohort.

On-disk layout of a dataset directory::

    events.csv         participant_id, day_index, slot, event_time_min, intervened_before
    schedules.csv      participant_id, weekday_morning_min, weekday_evening_min,
                       weekend_morning_min, weekend_evening_min
    dataset-meta.json  anchor weekday, generator name, config echo

Lines starting with ``#`` in the CSV files are provenance comments and are
skipped on load.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .core import (
    CORRUPT_BEFORE,
    SLOTS,
    TIME_UPPER,
    WEEKDAYS,
    BehaviorEvent,
    SlotKind,
    UserProvidedSchedule,
    parse_weekday,
)

logger = logging.getLogger(__name__)

MIN_ANALYZABLE_EVENTS = 7
GENERATOR_NAME = "numpy.random.Generator(PCG64) via SeedSequence([seed, participant_index])"

EVENT_COLUMNS = ("participant_id", "day_index", "slot", "event_time_min", "intervened_before")
SCHEDULE_COLUMNS = (
    "participant_id",
    "weekday_morning_min",
    "weekday_evening_min",
    "weekend_morning_min",
    "weekend_evening_min",
)

# Plausible windows for generated behavior times, per slot.
SLOT_WINDOWS = {SlotKind.MORNING: (240.0, 840.0), SlotKind.EVENING: (960.0, TIME_UPPER)}


class ParseError(ValueError):
    """A malformed row or value in an input file."""

    def __init__(self, message: str, path: str | None = None, row: int | None = None,
                 column: str | None = None):
        self.path, self.row, self.column = path, row, column
        where = ", ".join(
            part for part in (
                path and f"file {path}",
                row is not None and f"row {row}",
                column and f"column {column!r}",
            ) if part
        )
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(ValueError):
    """A dataset-level invariant is violated. ``problems`` lists every finding."""

    def __init__(self, problems: Sequence[tuple[str, str, str]]):
        self.problems = list(problems)
        lines = [f"participant {p!r}: {rule}: {detail}" for p, rule, detail in self.problems]
        super().__init__("dataset validation failed\n  " + "\n  ".join(lines))


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class Participant:
    schedule: UserProvidedSchedule
    events: tuple[BehaviorEvent, ...]

    @property
    def id(self) -> str:
        return self.schedule.participant

    def analyzable(self) -> list[BehaviorEvent]:
        return [e for e in self.events if not e.intervened_before]


@dataclass
class Dataset:
    participants: list[Participant]
    anchor: int = 0
    meta: dict[str, Any] = field(default_factory=dict)

    def by_id(self, participant: str) -> Participant:
        for p in self.participants:
            if p.id == participant:
                return p
        raise KeyError(participant)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.participants]


def _sorted_events(events: Iterable[BehaviorEvent]) -> tuple[BehaviorEvent, ...]:
    return tuple(sorted(events, key=lambda e: e.key))


def validation_problems(dataset: Dataset) -> list[tuple[str, str, str]]:
    problems = []
    seen: set[str] = set()
    for p in dataset.participants:
        if p.id in seen:
            problems.append((p.id, "unique-participant", "participant listed twice"))
        seen.add(p.id)
        n = len(p.analyzable())
        if n < MIN_ANALYZABLE_EVENTS:
            problems.append(
                (p.id, "minimum-week", f"{n} analyzable events < {MIN_ANALYZABLE_EVENTS}")
            )
    return problems


def validate_dataset(dataset: Dataset) -> None:
    problems = validation_problems(dataset)
    if problems:
        raise ValidationError(problems)


def analyzable_events(dataset: Dataset) -> dict[str, list[BehaviorEvent]]:
    """Events without a preceding intervention, per participant, in time order."""
    return {p.id: p.analyzable() for p in dataset.participants}


def lopo_splits(dataset: Dataset) -> list[tuple[list[Participant], Participant]]:
    """Leave-one-participant-out splits as ``(train, test)`` pairs."""
    if len(dataset.participants) < 2:
        raise InsufficientData("leave-one-participant-out needs at least 2 participants")
    return [
        (dataset.participants[:i] + dataset.participants[i + 1:], held_out)
        for i, held_out in enumerate(dataset.participants)
    ]


# ---------------------------------------------------------------------------
# CSV I/O


def _data_lines(handle: io.TextIOBase) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(handle, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def _read_rows(path: Path, columns: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    with path.open(newline="") as f:
        numbered = list(_data_lines(f))
    if not numbered:
        raise ParseError("no header row", str(path))
    reader = csv.reader(line for _, line in numbered)
    header = [h.strip() for h in next(reader)]
    missing = [c for c in columns if c not in header]
    if missing:
        raise ParseError(f"missing columns {missing}", str(path), numbered[0][0])
    rows = []
    for (lineno, _), values in zip(numbered[1:], reader):
        if len(values) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(values)}", str(path), lineno
            )
        rows.append((lineno, dict(zip(header, (v.strip() for v in values)))))
    return rows


def _float(value: str, path: Path, row: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ParseError(f"not a number: {value!r}", str(path), row, column) from None
    if not math.isfinite(out):
        raise ParseError(f"non-finite value {value!r}", str(path), row, column)
    return out


def _int(value: str, path: Path, row: int, column: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"not an integer: {value!r}", str(path), row, column) from None


def load_dataset(
    events_path: str | Path,
    schedules_path: str | Path,
    anchor: int | str | None = None,
    *,
    drop_invalid: bool = False,
) -> Dataset:
    """Read and validate a dataset.

    Malformed rows raise ``ParseError`` naming the row and column. Dataset
    invariants (corrupted user times, fewer than a week of analyzable
    events) raise ``ValidationError`` listing every offending participant,
    unless ``drop_invalid`` is set, in which case those participants are
    excluded and recorded under ``meta["excluded"]``.

    When ``anchor`` is None it is read from ``dataset-meta.json`` next to the
    events file, defaulting to Monday.
    """
    events_path, schedules_path = Path(events_path), Path(schedules_path)
    meta: dict[str, Any] = {}
    meta_path = events_path.parent / "dataset-meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    if anchor is None:
        anchor = meta.get("anchor", 0)
    anchor = parse_weekday(anchor)

    problems: list[tuple[str, str, str]] = []
    schedules: dict[str, UserProvidedSchedule] = {}
    for lineno, row in _read_rows(schedules_path, SCHEDULE_COLUMNS):
        pid = row["participant_id"]
        if not pid:
            raise ParseError("empty participant_id", str(schedules_path), lineno, "participant_id")
        if pid in schedules:
            raise ParseError(f"duplicate schedule for {pid!r}", str(schedules_path), lineno)
        times = {c: _float(row[c], schedules_path, lineno, c) for c in SCHEDULE_COLUMNS[1:]}
        bad = {c: t for c, t in times.items() if t < CORRUPT_BEFORE or t >= TIME_UPPER}
        if bad:
            problems.append((pid, "user-time-range", f"times outside [04:00, 30:00): {bad}"))
            schedules[pid] = None  # type: ignore[assignment]
            continue
        schedules[pid] = UserProvidedSchedule(
            pid, *(times[c] for c in SCHEDULE_COLUMNS[1:])
        )

    events: dict[str, list[BehaviorEvent]] = {pid: [] for pid in schedules}
    seen: set[tuple[str, int, str]] = set()
    for lineno, row in _read_rows(events_path, EVENT_COLUMNS):
        pid = row["participant_id"]
        day = _int(row["day_index"], events_path, lineno, "day_index")
        if day < 0:
            raise ParseError(f"negative day_index {day}", str(events_path), lineno, "day_index")
        try:
            slot = SlotKind(row["slot"].lower())
        except ValueError:
            raise ParseError(f"unknown slot {row['slot']!r}", str(events_path), lineno, "slot") from None
        t = _float(row["event_time_min"], events_path, lineno, "event_time_min")
        if t < 0 or t >= TIME_UPPER:
            raise ParseError(
                f"event time {t:g} outside [0, {TIME_UPPER:g})", str(events_path), lineno,
                "event_time_min",
            )
        flag = row["intervened_before"]
        if flag not in ("0", "1"):
            raise ParseError(f"expected 0 or 1, got {flag!r}", str(events_path), lineno,
                             "intervened_before")
        key = (pid, day, slot.value)
        if key in seen:
            raise ParseError(f"duplicate event {key}", str(events_path), lineno)
        seen.add(key)
        if pid not in events:
            raise ParseError(f"no schedule for participant {pid!r}", str(events_path), lineno,
                             "participant_id")
        events[pid].append(BehaviorEvent(pid, day, slot, t, flag == "1"))

    participants = [
        Participant(schedule, _sorted_events(events[pid]))
        for pid, schedule in schedules.items() if schedule is not None
    ]
    dataset = Dataset(participants, anchor, meta)
    problems.extend(validation_problems(dataset))
    if problems:
        if not drop_invalid:
            raise ValidationError(problems)
        bad_ids = {p for p, _, _ in problems}
        for p, rule, detail in problems:
            logger.warning("excluding participant %s (%s: %s)", p, rule, detail)
        dataset.participants = [p for p in participants if p.id not in bad_ids]
        dataset.meta = {**meta, "excluded": sorted(bad_ids)}
    return dataset


def load_dataset_dir(data_dir: str | Path, **kwargs: Any) -> Dataset:
    data_dir = Path(data_dir)
    return load_dataset(data_dir / "events.csv", data_dir / "schedules.csv", **kwargs)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(dataset: Dataset, out_dir: str | Path, header: Sequence[str] = ()) -> None:
    """Write the three dataset files; ``header`` lines are emitted as ``#`` comments."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    comment = "".join(f"# {line}\n" for line in header)

    buf = io.StringIO()
    buf.write(comment)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCHEDULE_COLUMNS)
    for p in dataset.participants:
        s = p.schedule
        w.writerow([s.participant, _fmt(s.weekday_morning), _fmt(s.weekday_evening),
                    _fmt(s.weekend_morning), _fmt(s.weekend_evening)])
    (out_dir / "schedules.csv").write_text(buf.getvalue())

    buf = io.StringIO()
    buf.write(comment)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for p in dataset.participants:
        for e in p.events:
            w.writerow([e.participant, e.day_index, e.slot.value, _fmt(e.true_time),
                        int(e.intervened_before)])
    (out_dir / "events.csv").write_text(buf.getvalue())

    meta = {**dataset.meta, "anchor": WEEKDAYS[dataset.anchor]}
    (out_dir / "dataset-meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Synthetic cohort


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic cohort generator.

    Each participant gets one routine SD drawn from ``sd_range_min``
    (uniformly, or log-uniformly with ``sd_distribution="loguniform"``) and per-slot routine means drawn uniformly from the slot
    ranges. Weekend routines are shifted later by a uniform draw from
    ``[0, weekend_shift_max_min]``. User-provided times are the routine means
    plus Gaussian reporting bias. Daily deviations follow a two-component
    Gaussian mixture: base SD, or SD times ``tail_scale`` with probability
    ``heavy_tail_mix``.
    """

    n_participants: int = 68
    n_days: int = 70
    morning_mean_range: tuple[float, float] = (390.0, 540.0)
    evening_mean_range: tuple[float, float] = (1230.0, 1380.0)
    sd_range_min: tuple[float, float] = (15.0, 180.0)
    reporting_bias_sd: float = 20.0
    heavy_tail_mix: float = 0.15
    tail_scale: float = 3.0
    missing_day_prob: float = 0.1
    intervened_prob: float = 0.5
    weekend_shift_max_min: float = 60.0
    sd_distribution: str = "uniform"
    anchor: int = 0
    seed: int = 1

    def __post_init__(self) -> None:
        problems = []
        if self.n_participants < 1:
            problems.append("n_participants must be >= 1")
        if self.n_days < 1:
            problems.append("n_days must be >= 1")
        for name, window in (("morning_mean_range", SLOT_WINDOWS[SlotKind.MORNING]),
                             ("evening_mean_range", SLOT_WINDOWS[SlotKind.EVENING])):
            lo, hi = getattr(self, name)
            if not (window[0] <= lo <= hi < window[1]):
                problems.append(f"{name} must satisfy {window[0]:g} <= low <= high < {window[1]:g}")
        lo, hi = self.sd_range_min
        if not 0 < lo <= hi:
            problems.append("sd_range_min must satisfy 0 < low <= high")
        for name in ("heavy_tail_mix", "missing_day_prob", "intervened_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must be in [0, 1]")
        if self.reporting_bias_sd < 0 or self.tail_scale <= 0 or self.weekend_shift_max_min < 0:
            problems.append("reporting_bias_sd, weekend_shift_max_min must be >= 0; tail_scale > 0")
        if self.sd_distribution not in ("uniform", "loguniform"):
            problems.append("sd_distribution must be 'uniform' or 'loguniform'")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known - {"name", "description"}
        if unknown:
            raise ValueError(f"unknown SynthConfig fields: {sorted(unknown)}")
        kwargs = {k: v for k, v in raw.items() if k in known}
        for k in ("morning_mean_range", "evening_mean_range", "sd_range_min"):
            if k in kwargs:
                kwargs[k] = tuple(float(v) for v in kwargs[k])
        if "anchor" in kwargs:
            kwargs["anchor"] = parse_weekday(kwargs["anchor"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


def reference_config_path() -> Path:
    return Path(__file__).parent / "configs" / "cohort_a.json"


def reference_config() -> SynthConfig:
    """The checked-in 68-participant, 70-day reference cohort (seed 1)."""
    return SynthConfig.from_json(reference_config_path())


def _draw_in(rng: np.random.Generator, center: float, sd: float, lo: float, hi: float) -> float:
    """Gaussian draw rounded to 0.01 min, resampled until it lands in [lo, hi)."""
    while True:
        x = round(center + sd * rng.standard_normal(), 2)
        if lo <= x < hi:
            return x


def _synth_participant(config: SynthConfig, index: int) -> Participant:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, index]))
    pid = f"P{index + 1:03d}"
    lo, hi = config.sd_range_min
    if config.sd_distribution == "loguniform":
        sd = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    else:
        sd = float(rng.uniform(lo, hi))
    ranges = {SlotKind.MORNING: config.morning_mean_range,
              SlotKind.EVENING: config.evening_mean_range}

    means: dict[tuple[bool, SlotKind], float] = {}
    for slot in SLOTS:
        weekday_mean = float(rng.uniform(*ranges[slot]))
        shift = float(rng.uniform(0.0, config.weekend_shift_max_min))
        means[(False, slot)] = weekday_mean
        means[(True, slot)] = min(weekday_mean + shift, SLOT_WINDOWS[slot][1] - 1.0)

    user: dict[tuple[bool, SlotKind], float] = {}
    for weekend in (False, True):
        for slot in SLOTS:
            w_lo, w_hi = SLOT_WINDOWS[slot]
            user[(weekend, slot)] = _draw_in(
                rng, means[(weekend, slot)], config.reporting_bias_sd, w_lo, w_hi
            )
    schedule = UserProvidedSchedule(
        pid,
        weekday_morning=user[(False, SlotKind.MORNING)],
        weekday_evening=user[(False, SlotKind.EVENING)],
        weekend_morning=user[(True, SlotKind.MORNING)],
        weekend_evening=user[(True, SlotKind.EVENING)],
    )

    events = []
    for day in range(config.n_days):
        weekend = (config.anchor + day) % 7 >= 5
        for slot in SLOTS:
            # Draw every variate unconditionally so streams stay aligned across configs.
            missing = rng.random() < config.missing_day_prob
            heavy = rng.random() < config.heavy_tail_mix
            intervened = rng.random() < config.intervened_prob
            scale = sd * config.tail_scale if heavy else sd
            t = _draw_in(rng, means[(weekend, slot)], scale, *SLOT_WINDOWS[slot])
            if missing:
                continue
            events.append(BehaviorEvent(pid, day, slot, t, bool(intervened)))
    return Participant(schedule, tuple(events))


def synth_cohort(config: SynthConfig) -> Dataset:
    """Generate a cohort; a pure function of ``config`` (seed included)."""
    participants = [_synth_participant(config, i) for i in range(config.n_participants)]
    meta = {"generator": GENERATOR_NAME, "synth_config": config.to_dict()}
    return Dataset(participants, config.anchor, meta)
