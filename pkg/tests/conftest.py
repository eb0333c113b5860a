from __future__ import annotations

from datetime import date, datetime, time, timedelta, timezone

import pytest

from kitchenwatch import ingest

UTC = timezone.utc


def at(day: date, hh: int, mm: int = 0, ss: int = 0) -> datetime:
    return datetime.combine(day, time(hh, mm, ss), tzinfo=UTC)


def ev(ts: datetime, sensor: str, value: str | None = None, household: str = "h001") -> ingest.SensorEvent:
    if value is None:
        value = {
            ingest.KITCHEN_MOTION: ingest.MOTION_FIRED,
            ingest.FRIDGE_DOOR: ingest.DOOR_OPENED,
        }.get(sensor, ingest.PLUG_USED)
    return ingest.SensorEvent(household, ts, sensor, value)


def log_of(events, household: str = "h001", gap_threshold=ingest.DEFAULT_GAP_THRESHOLD):
    logs = ingest.validate_events(events, gap_threshold)
    return logs.get(household, ingest.ValidatedEventLog(household, ()))


def daily_routine(day: date, household: str = "h001") -> list[ingest.SensorEvent]:
    """Same kitchen routine every day: morning tea, lunch, dinner.

    Each meal starts on the kettle, so consecutive-kitchen collapsing never
    reaches across midnight and every day yields the same state sequence.
    """
    out = []
    for hh in (7, 12, 18):
        out += [
            ev(at(day, hh, 5), ingest.KETTLE_PLUG, household=household),
            ev(at(day, hh, 10), ingest.FRIDGE_DOOR, ingest.DOOR_OPENED, household),
            ev(at(day, hh, 10, 20), ingest.FRIDGE_DOOR, ingest.DOOR_CLOSED, household),
            ev(at(day, hh, 20), ingest.OVEN_PLUG, household=household),
            ev(at(day, hh, 30), ingest.KITCHEN_MOTION, household=household),
        ]
    return out


def routine_log(start: date, days: int, household: str = "h001") -> ingest.ValidatedEventLog:
    events = []
    for i in range(days):
        events += daily_routine(start + timedelta(days=i), household)
    return log_of(events, household)


@pytest.fixture
def d0() -> date:
    return date(2021, 1, 1)
