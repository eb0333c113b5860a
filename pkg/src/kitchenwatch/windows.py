"""Sliding current/baseline windows and per-period Frobenius dissimilarity."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import IntEnum
from functools import lru_cache
from zoneinfo import ZoneInfo

import numpy as np

from .chain import N_STATES, StateEventSequence, TransitionMatrix, normalize_rows

SERIES_COLUMNS = (
    "household_id",
    "step_date",
    "period",
    "score",
    "current_events",
    "baseline_events",
)
HOURS_PER_PERIOD = 6


class Period(IntEnum):
    NIGHT = 0
    MORNING = 1
    AFTERNOON = 2
    EVENING = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def hours(self) -> range:
        return range(self * HOURS_PER_PERIOD, (self + 1) * HOURS_PER_PERIOD)

    @classmethod
    def of_hour(cls, hour: int) -> "Period":
        return cls(hour // HOURS_PER_PERIOD)

    @classmethod
    def from_label(cls, label: str) -> "Period":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown period of day {label!r}") from None


class InsufficientRangeError(ValueError):
    """The requested range cannot hold one baseline plus one current window."""

    def __init__(self, required_days: int, available_days: int) -> None:
        super().__init__(
            f"range of {available_days} days is shorter than the required "
            f"{required_days} days (baseline + current)"
        )
        self.required_days = required_days
        self.available_days = available_days


@dataclass(frozen=True)
class WindowConfig:
    step_days: int = 1
    current_days: int = 7
    baseline_days: int = 21
    resample_hours: int = 1
    score_cap: float = 4.0
    min_support: int = 10
    timezone: str = "UTC"

    def __post_init__(self) -> None:
        for name in ("step_days", "current_days", "baseline_days", "resample_hours"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # each six-hour period must be a whole number of slots
        if HOURS_PER_PERIOD % self.resample_hours:
            raise ValueError("resample_hours must divide 6 (1, 2, 3 or 6)")
        if self.score_cap <= 0:
            raise ValueError("score_cap must be positive")
        if self.min_support < 0:
            raise ValueError("min_support must be non-negative")
        ZoneInfo(self.timezone)

    @property
    def n_slots(self) -> int:
        return 24 // self.resample_hours

    @property
    def warmup_days(self) -> int:
        return self.current_days + self.baseline_days

    @property
    def period_cap(self) -> float:
        return self.score_cap * (HOURS_PER_PERIOD // self.resample_hours)


@dataclass(frozen=True, slots=True)
class SeriesPoint:
    step_date: date
    period: Period
    score: float
    current_events: int
    baseline_events: int

    def low_support(self, min_support: int) -> bool:
        return min(self.current_events, self.baseline_events) < min_support


@dataclass
class DissimilaritySeries:
    household_id: str
    points: list[SeriesPoint] = field(default_factory=list)

    def for_period(self, period: Period) -> list[SeriesPoint]:
        return [p for p in self.points if p.period is period]

    @property
    def step_dates(self) -> list[date]:
        return sorted({p.step_date for p in self.points})


def frobenius_distance(a, b, cap: float = 4.0) -> float:
    """Capped Frobenius distance between two transition matrices."""
    a = a.matrix if isinstance(a, TransitionMatrix) else np.asarray(a, dtype=float)
    b = b.matrix if isinstance(b, TransitionMatrix) else np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return min(cap, float(np.sqrt(np.sum((a - b) ** 2))))


@lru_cache(maxsize=32)
def _zone(name: str) -> ZoneInfo:
    return ZoneInfo(name)


def slot_tally(
    seq: StateEventSequence,
    first_day: date,
    n_days: int,
    resample_hours: int = 1,
    tz: str = "UTC",
) -> tuple[np.ndarray, np.ndarray]:
    """Per (local day, clock slot) transition counts and event counts.

    Returns ``counts`` with shape ``(n_days, n_slots, 4, 4)`` and ``events``
    with shape ``(n_days, n_slots)``. A pair is counted only when source and
    target share the same day and slot.
    """
    n_slots = 24 // resample_hours
    counts = np.zeros((n_days, n_slots, N_STATES, N_STATES), dtype=np.int64)
    events = np.zeros((n_days, n_slots), dtype=np.int64)
    if not seq.items:
        return counts, events
    zone = _zone(tz)
    origin = first_day.toordinal()
    n = len(seq.items)
    day = np.empty(n, dtype=np.int64)
    slot = np.empty(n, dtype=np.int64)
    state = np.empty(n, dtype=np.int64)
    for i, (ts, s) in enumerate(seq.items):
        local = ts.astimezone(zone)
        day[i] = local.toordinal() - origin
        slot[i] = local.hour // resample_hours
        state[i] = s
    inside = (day >= 0) & (day < n_days)
    np.add.at(events, (day[inside], slot[inside]), 1)
    same = inside[:-1] & (day[:-1] == day[1:]) & (slot[:-1] == slot[1:])
    np.add.at(
        counts,
        (day[:-1][same], slot[:-1][same], state[:-1][same], state[1:][same]),
        1,
    )
    return counts, events


def window_matrices(
    seq: StateEventSequence,
    start: date,
    end: date,
    resample_hours: int = 1,
    tz: str = "UTC",
) -> dict[int, TransitionMatrix]:
    """Pool every occurrence of each clock slot in ``[start, end)`` and normalise."""
    n_days = (end - start).days
    if n_days <= 0:
        raise ValueError("window must be non-empty")
    counts, _ = slot_tally(seq, start, n_days, resample_hours, tz)
    pooled = normalize_rows(counts.sum(axis=0))
    return {slot: TransitionMatrix(pooled[slot]) for slot in range(pooled.shape[0])}


def sliding_scan(
    seq: StateEventSequence, config: WindowConfig, start: date, end: date
) -> DissimilaritySeries:
    """Score every step date in ``[start + warm-up, end]``.

    A step date ``t`` compares the current window ``[t - current, t)`` with
    the baseline ``[t - current - baseline, t - current)``; per-slot capped
    distances are summed within each period of day.
    """
    n_days = (end - start).days
    if n_days < config.warmup_days:
        raise InsufficientRangeError(config.warmup_days, n_days)
    counts, events = slot_tally(seq, start, n_days, config.resample_hours, config.timezone)

    prefix = np.zeros((n_days + 1, *counts.shape[1:]), dtype=np.int64)
    np.cumsum(counts, axis=0, out=prefix[1:])
    ev_prefix = np.zeros((n_days + 1, events.shape[1]), dtype=np.int64)
    np.cumsum(events, axis=0, out=ev_prefix[1:])

    ends = np.arange(config.warmup_days, n_days + 1, config.step_days)
    mids = ends - config.current_days
    starts = mids - config.baseline_days
    current = normalize_rows(prefix[ends] - prefix[mids])
    baseline = normalize_rows(prefix[mids] - prefix[starts])
    dist = np.sqrt(np.sum((current - baseline) ** 2, axis=(-2, -1)))
    dist = np.minimum(dist, config.score_cap)

    per_period = HOURS_PER_PERIOD // config.resample_hours
    scores = dist.reshape(len(ends), len(Period), per_period).sum(axis=-1)
    cur_ev = (ev_prefix[ends] - ev_prefix[mids]).reshape(len(ends), len(Period), per_period).sum(-1)
    base_ev = (ev_prefix[mids] - ev_prefix[starts]).reshape(len(ends), len(Period), per_period).sum(-1)

    points = []
    for i, offset in enumerate(ends):
        step_date = start + timedelta(days=int(offset))
        for period in Period:
            points.append(
                SeriesPoint(
                    step_date,
                    period,
                    float(scores[i, period]),
                    int(cur_ev[i, period]),
                    int(base_ev[i, period]),
                )
            )
    return DissimilaritySeries(seq.household_id, points)


def export_series(series: DissimilaritySeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SERIES_COLUMNS)
    for p in sorted(series.points, key=lambda p: (p.step_date, p.period)):
        writer.writerow(
            [
                series.household_id,
                p.step_date.isoformat(),
                p.period.label,
                repr(p.score),
                p.current_events,
                p.baseline_events,
            ]
        )
    return buf.getvalue()


def parse_series(text: str) -> dict[str, DissimilaritySeries]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in SERIES_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise ValueError(f"series CSV missing column {missing[0]!r}")
    out: dict[str, DissimilaritySeries] = {}
    for row in reader:
        household = row["household_id"]
        series = out.setdefault(household, DissimilaritySeries(household))
        series.points.append(
            SeriesPoint(
                date.fromisoformat(row["step_date"]),
                Period.from_label(row["period"]),
                float(row["score"]),
                int(row["current_events"]),
                int(row["baseline_events"]),
            )
        )
    return out
