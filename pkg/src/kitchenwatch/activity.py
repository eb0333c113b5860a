"""Kitchen activity aggregation: daily and six-hourly tables for mixed models."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date, datetime, time, timedelta
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .ingest import SENSORS, ValidatedEventLog
from .windows import Period

LME_COLUMNS = ("household_id", "date", "period_label", "period_of_day", "occupancy", "value")
PERIOD_MEAN_COLUMNS = ("household_id", "period_label", "period_of_day", "occupancy", "value")
OCCUPANCY = ("single", "multiple")

SENSOR_MEANS = "sensor_means"
DAILY_SUMS = "daily_sums"


@dataclass(frozen=True, slots=True)
class CovidPeriod:
    label: str
    start: date
    end: date  # inclusive

    def __contains__(self, day: date) -> bool:
        return self.start <= day <= self.end


COVID_PERIODS: tuple[CovidPeriod, ...] = (
    CovidPeriod("P1", date(2019, 12, 1), date(2020, 1, 30)),
    CovidPeriod("P2", date(2020, 1, 31), date(2020, 3, 23)),
    CovidPeriod("P3", date(2020, 3, 24), date(2020, 6, 1)),
    CovidPeriod("P4", date(2020, 6, 2), date(2020, 11, 5)),
    CovidPeriod("P5", date(2020, 11, 6), date(2020, 12, 2)),
    CovidPeriod("P6", date(2020, 12, 3), date(2021, 1, 6)),
    CovidPeriod("P7", date(2021, 1, 7), date(2021, 4, 12)),
)


class StandardizationError(ValueError):
    """A time-of-day stratum cannot be z-scored."""

    def __init__(self, stratum: str, reason: str) -> None:
        super().__init__(f"cannot standardize stratum {stratum!r}: {reason}")
        self.stratum = stratum


@dataclass(frozen=True, slots=True)
class ActivityRecord:
    household_id: str
    date: date
    value: float
    period_of_day: Period | None = None
    occupancy: str | None = None

    def __post_init__(self) -> None:
        if self.occupancy is not None and self.occupancy not in OCCUPANCY:
            raise ValueError(f"occupancy must be one of {OCCUPANCY}, got {self.occupancy!r}")


def assign_covid_period(
    day: date, periods: Sequence[CovidPeriod] = COVID_PERIODS
) -> str | None:
    """Label of the period containing ``day``; None when outside every period."""
    for period in periods:
        if day in period:
            return period.label
    return None


def load_period_table(text: str) -> tuple[CovidPeriod, ...]:
    """Read ``label,start,end`` rows (inclusive ISO dates)."""
    reader = csv.DictReader(io.StringIO(text))
    periods = tuple(
        CovidPeriod(row["label"].strip(), date.fromisoformat(row["start"].strip()), date.fromisoformat(row["end"].strip()))
        for row in reader
    )
    ordered = sorted(periods, key=lambda p: p.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            raise ValueError(f"periods {a.label} and {b.label} overlap")
    return periods


def _gap_days(log: ValidatedEventLog, zone: ZoneInfo) -> set[date]:
    """Local days lying entirely inside a recorded gap."""
    days = set()
    for gap_start, gap_end in log.gaps:
        day = gap_start.astimezone(zone).date()
        last = gap_end.astimezone(zone).date()
        while day <= last:
            day_start = datetime.combine(day, time(), tzinfo=zone)
            day_end = datetime.combine(day + timedelta(days=1), time(), tzinfo=zone)
            if gap_start <= day_start and day_end <= gap_end:
                days.add(day)
            day += timedelta(days=1)
    return days


@dataclass
class _Tally:
    counts: dict  # sensor -> key -> count
    days: list[date]  # covered local dates, gap days removed
    reporting: dict  # sensor -> set of dates in its install span


def _tally(log: ValidatedEventLog, sensors, tz: str, by_period: bool) -> _Tally:
    zone = ZoneInfo(tz)
    sensors = frozenset(SENSORS if sensors is None else sensors)
    if not sensors:
        raise ValueError("sensor set must be non-empty")
    counts: dict = defaultdict(lambda: defaultdict(int))
    first_seen: dict[str, date] = {}
    last_seen: dict[str, date] = {}
    dates = []
    for event in log.events:
        local = event.timestamp.astimezone(zone)
        dates.append(local.date())
        if event.sensor not in sensors:
            continue
        key = (local.date(), Period.of_hour(local.hour)) if by_period else local.date()
        counts[event.sensor][key] += 1
        first_seen.setdefault(event.sensor, local.date())
        last_seen[event.sensor] = local.date()
    if not dates:
        return _Tally({}, [], {})
    gaps = _gap_days(log, zone)
    days = []
    day = min(dates)
    while day <= max(dates):
        if day not in gaps:
            days.append(day)
        day += timedelta(days=1)
    covered = set(days)
    reporting = {}
    for sensor in counts:
        span = set()
        day = first_seen[sensor]
        while day <= last_seen[sensor]:
            if day in covered:
                span.add(day)
            day += timedelta(days=1)
        reporting[sensor] = span
    return _Tally(counts, days, reporting)


def daily_mean_activity(
    log: ValidatedEventLog,
    sensors: Iterable[str] | None = None,
    tz: str = "UTC",
    occupancy: str | None = None,
) -> list[ActivityRecord]:
    """One record per covered local date: the summed event counts of ``sensors``.

    A single day's mean is its count, so the per-sensor contributions simply
    add up. Dates entirely inside a recorded gap are left out rather than
    reported as zero.
    """
    tally = _tally(log, sensors, tz, by_period=False)
    return [
        ActivityRecord(
            log.household_id,
            day,
            float(sum(tally.counts[s].get(day, 0) for s in tally.counts)),
            None,
            occupancy,
        )
        for day in tally.days
    ]


def six_hourly_activity(
    log: ValidatedEventLog,
    sensors: Iterable[str] | None = None,
    tz: str = "UTC",
    occupancy: str | None = None,
) -> list[ActivityRecord]:
    """Like :func:`daily_mean_activity`, split into the four periods of the day."""
    tally = _tally(log, sensors, tz, by_period=True)
    return [
        ActivityRecord(
            log.household_id,
            day,
            float(sum(tally.counts[s].get((day, period), 0) for s in tally.counts)),
            period,
            occupancy,
        )
        for day in tally.days
        for period in Period
    ]


def mean_activity(
    log: ValidatedEventLog,
    start: date,
    end: date,
    sensors: Iterable[str] | None = None,
    tz: str = "UTC",
    period: Period | None = None,
    mode: str = SENSOR_MEANS,
) -> float | None:
    """Mean kitchen activity over local dates ``[start, end]``.

    ``sensor_means`` averages each sensor over the days it was reporting and
    sums those means; ``daily_sums`` averages the daily totals over all
    covered days. Returns None when no covered day falls in the range.
    """
    if mode not in (SENSOR_MEANS, DAILY_SUMS):
        raise ValueError(f"unknown activity mode {mode!r}")
    tally = _tally(log, sensors, tz, by_period=period is not None)
    days = [d for d in tally.days if start <= d <= end]
    if not days:
        return None

    def count(sensor: str, day: date) -> int:
        key = (day, period) if period is not None else day
        return tally.counts[sensor].get(key, 0)

    if mode == DAILY_SUMS:
        return sum(count(s, d) for s in tally.counts for d in days) / len(days)
    total = 0.0
    for sensor in tally.counts:
        reporting = [d for d in days if d in tally.reporting[sensor]]
        if reporting:
            total += sum(count(sensor, d) for d in reporting) / len(reporting)
    return total


def covid_period_means(
    log: ValidatedEventLog,
    sensors: Iterable[str] | None = None,
    tz: str = "UTC",
    occupancy: str | None = None,
    mode: str = SENSOR_MEANS,
    periods: Sequence[CovidPeriod] = COVID_PERIODS,
) -> list[tuple[str, Period | None, float]]:
    """Mean activity per timeline period, whole-day and per period of day."""
    sensors = None if sensors is None else frozenset(sensors)
    rows = []
    for covid in periods:
        for tod in (None, *Period):
            value = mean_activity(log, covid.start, covid.end, sensors, tz, tod, mode)
            if value is not None:
                rows.append((covid.label, tod, value))
    return rows


def standardize_by_time_of_day(records: Sequence[ActivityRecord]) -> list[ActivityRecord]:
    """Z-score values within each period-of-day stratum, pooled over households.

    Uses the sample (n - 1) standard deviation. Whole-day records form their
    own stratum.
    """
    strata: dict[Period | None, list[int]] = defaultdict(list)
    for i, record in enumerate(records):
        strata[record.period_of_day].append(i)
    out = list(records)
    for stratum, indices in strata.items():
        name = stratum.label if stratum is not None else "daily"
        values = np.array([records[i].value for i in indices], dtype=float)
        if values.size < 2:
            raise StandardizationError(name, "fewer than two values")
        sd = values.std(ddof=1)
        if sd == 0:
            raise StandardizationError(name, "zero standard deviation")
        z = (values - values.mean()) / sd
        for i, value in zip(indices, z):
            out[i] = replace(records[i], value=float(value))
    return out


def _sort_key(record: ActivityRecord):
    tod = -1 if record.period_of_day is None else int(record.period_of_day)
    return (record.household_id, record.date, tod)


def export_lme_table(
    records: Iterable[ActivityRecord], periods: Sequence[CovidPeriod] = COVID_PERIODS
) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LME_COLUMNS)
    for r in sorted(records, key=_sort_key):
        writer.writerow(
            [
                r.household_id,
                r.date.isoformat(),
                assign_covid_period(r.date, periods) or "",
                r.period_of_day.label if r.period_of_day is not None else "",
                r.occupancy or "",
                repr(r.value),
            ]
        )
    return buf.getvalue()


def parse_lme_table(text: str) -> list[ActivityRecord]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        ActivityRecord(
            row["household_id"],
            date.fromisoformat(row["date"]),
            float(row["value"]),
            Period.from_label(row["period_of_day"]) if row["period_of_day"] else None,
            row["occupancy"] or None,
        )
        for row in reader
    ]


def export_period_means(rows: Iterable[tuple[str, str, str | None, Period | None, float]]) -> str:
    """``rows`` are (household, period label, occupancy, period of day, value)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PERIOD_MEAN_COLUMNS)
    for household, label, occupancy, tod, value in rows:
        writer.writerow([household, label, tod.label if tod is not None else "", occupancy or "", repr(value)])
    return buf.getvalue()
