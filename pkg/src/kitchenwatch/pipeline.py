"""Glue from a validated event log to a dissimilarity series."""

from __future__ import annotations

from datetime import date, timedelta
from typing import Mapping
from zoneinfo import ZoneInfo

from . import chain, ingest
from .windows import DissimilaritySeries, WindowConfig, sliding_scan


def prepare_sequence(
    log: ingest.ValidatedEventLog,
    max_open_duration: timedelta = ingest.DEFAULT_MAX_OPEN_DURATION,
    mapping: Mapping[str, chain.State] | None = None,
) -> tuple[chain.StateEventSequence, ingest.CollapseStats]:
    collapsed, stats = ingest.collapse_fridge_events(log, max_open_duration)
    return chain.map_to_states(collapsed, mapping), stats


def data_range(log: ingest.ValidatedEventLog, tz: str = "UTC") -> tuple[date, date] | None:
    """Local dates ``[first, last + 1)`` spanned by a log."""
    if not log.events:
        return None
    zone = ZoneInfo(tz)
    first = log.events[0].timestamp.astimezone(zone).date()
    last = log.events[-1].timestamp.astimezone(zone).date()
    return first, last + timedelta(days=1)


def scan_log(
    log: ingest.ValidatedEventLog,
    config: WindowConfig | None = None,
    start: date | None = None,
    end: date | None = None,
    max_open_duration: timedelta = ingest.DEFAULT_MAX_OPEN_DURATION,
    mapping: Mapping[str, chain.State] | None = None,
) -> DissimilaritySeries:
    config = config or WindowConfig()
    if start is None or end is None:
        span = data_range(log, config.timezone)
        if span is None:
            raise ValueError(f"household {log.household_id} has no events")
        start = span[0] if start is None else start
        end = span[1] if end is None else end
    seq, _ = prepare_sequence(log, max_open_duration, mapping)
    return sliding_scan(seq, config, start, end)
