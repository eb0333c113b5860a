"""Parsing, validation and canonicalisation of raw kitchen sensor logs."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Iterator, Sequence

CSV_COLUMNS = ("household_id", "timestamp", "sensor", "value")
REJECT_COLUMNS = ("line", "reason")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

KITCHEN_MOTION = "kitchen_motion"
FRIDGE_DOOR = "fridge_door"
KETTLE_PLUG = "kettle_plug"
OVEN_PLUG = "oven_plug"
TOASTER_PLUG = "toaster_plug"
MICROWAVE_PLUG = "microwave_plug"

MOTION_FIRED = "motion_fired"
DOOR_OPENED = "door_opened"
DOOR_CLOSED = "door_closed"
PLUG_USED = "plug_used"

PLUG_SENSORS = frozenset({KETTLE_PLUG, OVEN_PLUG, TOASTER_PLUG, MICROWAVE_PLUG})
SENSORS = frozenset({KITCHEN_MOTION, FRIDGE_DOOR}) | PLUG_SENSORS
VALUES = frozenset({MOTION_FIRED, DOOR_OPENED, DOOR_CLOSED, PLUG_USED})

ALLOWED_VALUES = {
    KITCHEN_MOTION: frozenset({MOTION_FIRED}),
    FRIDGE_DOOR: frozenset({DOOR_OPENED, DOOR_CLOSED}),
    **{sensor: frozenset({PLUG_USED}) for sensor in PLUG_SENSORS},
}

DEFAULT_GAP_THRESHOLD = timedelta(hours=24)
DEFAULT_MAX_OPEN_DURATION = timedelta(minutes=10)


class SchemaError(ValueError):
    """Raised when an event file does not carry the required header."""

    def __init__(self, column: str, message: str | None = None) -> None:
        super().__init__(message or f"missing required column: {column!r}")
        self.column = column


@dataclass(frozen=True, slots=True, order=True)
class SensorEvent:
    household_id: str
    timestamp: datetime
    sensor: str
    value: str

    def __post_init__(self) -> None:
        if self.sensor not in SENSORS:
            raise ValueError(f"unknown sensor label {self.sensor!r}")
        if self.value not in ALLOWED_VALUES[self.sensor]:
            raise ValueError(
                f"inconsistent sensor/value pair {self.sensor}/{self.value}"
            )
        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware")
        if self.timestamp.microsecond:
            raise ValueError("timestamp must have whole-second granularity")

    def to_row(self) -> list[str]:
        return [self.household_id, format_timestamp(self.timestamp), self.sensor, self.value]


@dataclass(frozen=True, slots=True)
class Reject:
    line: int
    reason: str


@dataclass(frozen=True, slots=True)
class EventFormatConfig:
    """How strictly timestamps are read.

    ``truncate_subseconds`` drops fractional seconds instead of rejecting
    the row; either way a log never mixes sub-second and whole-second
    instants.
    """

    truncate_subseconds: bool = False


@dataclass(frozen=True)
class ValidatedEventLog:
    household_id: str
    events: tuple[SensorEvent, ...]
    gaps: tuple[tuple[datetime, datetime], ...] = ()
    duplicates: int = 0
    fridge_collapsed: bool = False

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True, slots=True)
class CollapseStats:
    unmatched_open: int = 0
    unmatched_close: int = 0


@dataclass
class ParseResult:
    events: list[SensorEvent] = field(default_factory=list)
    rejects: list[Reject] = field(default_factory=list)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def parse_timestamp(text: str, truncate_subseconds: bool = False) -> datetime:
    """Parse an RFC 3339 UTC instant of the form ``YYYY-MM-DDTHH:MM:SS[.fff]Z``."""
    if not text.endswith("Z"):
        raise ValueError(f"timestamp {text!r} is not UTC ('Z' suffix required)")
    body = text[:-1]
    if "." in body:
        if not truncate_subseconds:
            raise ValueError(f"timestamp {text!r} has sub-second precision")
        body, frac = body.split(".", 1)
        if not frac.isdigit():
            raise ValueError(f"unparseable timestamp {text!r}")
    try:
        parsed = datetime.strptime(body, "%Y-%m-%dT%H:%M:%S")
    except ValueError:
        raise ValueError(f"unparseable timestamp {text!r}") from None
    return parsed.replace(tzinfo=timezone.utc)


def _check_header(header: Sequence[str] | None) -> dict[str, int]:
    if header is None:
        raise SchemaError(CSV_COLUMNS[0], "empty input: header line required")
    positions = {name.strip(): i for i, name in enumerate(header)}
    for column in CSV_COLUMNS:
        if column not in positions:
            raise SchemaError(column)
    return {column: positions[column] for column in CSV_COLUMNS}


def parse_event_log(
    source: Iterable[str] | str, fmt: EventFormatConfig | None = None
) -> ParseResult:
    """Read events from CSV text, collecting malformed rows as rejects.

    Raises SchemaError when a required column is missing from the header.
    Line numbers in rejects count the header as line 1.
    """
    fmt = fmt or EventFormatConfig()
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    positions = _check_header(next(reader, None))
    width = max(positions.values()) + 1
    result = ParseResult()
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < width:
            result.rejects.append(Reject(line, f"expected {width} fields, got {len(row)}"))
            continue
        household = row[positions["household_id"]].strip()
        sensor = row[positions["sensor"]].strip()
        value = row[positions["value"]].strip()
        if not household:
            result.rejects.append(Reject(line, "empty household_id"))
            continue
        try:
            ts = parse_timestamp(row[positions["timestamp"]].strip(), fmt.truncate_subseconds)
        except ValueError as exc:
            result.rejects.append(Reject(line, str(exc)))
            continue
        if sensor not in SENSORS:
            result.rejects.append(Reject(line, f"unknown sensor label {sensor!r}"))
            continue
        if value not in VALUES:
            result.rejects.append(Reject(line, f"unknown value {value!r}"))
            continue
        if value not in ALLOWED_VALUES[sensor]:
            result.rejects.append(
                Reject(line, f"inconsistent sensor/value pair {sensor}/{value}")
            )
            continue
        result.events.append(SensorEvent(household, ts, sensor, value))
    return result


def validate_events(
    events: Iterable[SensorEvent], gap_threshold: timedelta = DEFAULT_GAP_THRESHOLD
) -> dict[str, ValidatedEventLog]:
    """Partition by household, sort, drop exact duplicates and record silences."""
    by_household: dict[str, list[SensorEvent]] = defaultdict(list)
    for event in events:
        by_household[event.household_id].append(event)

    logs = {}
    for household in sorted(by_household):
        # sorted() is stable, so equal (timestamp, sensor) keys keep input order
        ordered = sorted(by_household[household], key=lambda e: (e.timestamp, e.sensor))
        seen: set[tuple[datetime, str, str]] = set()
        kept: list[SensorEvent] = []
        for event in ordered:
            key = (event.timestamp, event.sensor, event.value)
            if key in seen:
                continue
            seen.add(key)
            kept.append(event)
        gaps = tuple(
            (prev.timestamp, nxt.timestamp)
            for prev, nxt in zip(kept, kept[1:])
            if nxt.timestamp - prev.timestamp >= gap_threshold
        )
        logs[household] = ValidatedEventLog(
            household_id=household,
            events=tuple(kept),
            gaps=gaps,
            duplicates=len(ordered) - len(kept),
        )
    return logs


def collapse_fridge_events(
    log: ValidatedEventLog, max_open_duration: timedelta = DEFAULT_MAX_OPEN_DURATION
) -> tuple[ValidatedEventLog, CollapseStats]:
    """Replace each door open/close pair by one usage event at the opening instant.

    The usage event keeps the ``door_opened`` value; the returned log is
    marked ``fridge_collapsed`` so downstream code can tell the difference.
    """
    if log.fridge_collapsed:
        return log, CollapseStats()
    out: list[SensorEvent | None] = []
    pending: SensorEvent | None = None
    pending_slot = -1
    unmatched_open = unmatched_close = 0
    for event in log.events:
        if event.sensor != FRIDGE_DOOR:
            out.append(event)
            continue
        if event.value == DOOR_OPENED:
            if pending is not None:
                unmatched_open += 1
                out[pending_slot] = None
            pending = event
            pending_slot = len(out)
            out.append(event)
        elif pending is not None and event.timestamp - pending.timestamp <= max_open_duration:
            pending = None
        else:
            if pending is not None:
                unmatched_open += 1
                out[pending_slot] = None
                pending = None
            unmatched_close += 1
    if pending is not None:
        unmatched_open += 1
        out[pending_slot] = None
    collapsed = ValidatedEventLog(
        household_id=log.household_id,
        events=tuple(e for e in out if e is not None),
        gaps=log.gaps,
        duplicates=log.duplicates,
        fridge_collapsed=True,
    )
    return collapsed, CollapseStats(unmatched_open, unmatched_close)


def iter_event_rows(events: Iterable[SensorEvent]) -> Iterator[list[str]]:
    yield list(CSV_COLUMNS)
    for event in events:
        yield event.to_row()


def write_event_csv(events: Iterable[SensorEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(iter_event_rows(events))
    return buf.getvalue()


def write_rejects_csv(rejects: Iterable[Reject]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REJECT_COLUMNS)
    for reject in rejects:
        writer.writerow([reject.line, reject.reason])
    return buf.getvalue()
