"""Brute-force re-computation of the dissimilarity series.

Every step re-tallies both windows from the raw events with plain loops
and dictionaries. Nothing is shared with the vectorised scan in
``windows`` or the helpers in ``chain``; it exists to check them.
"""

from __future__ import annotations

import math
from datetime import date, timedelta
from zoneinfo import ZoneInfo

from .ingest import ValidatedEventLog
from .windows import DissimilaritySeries, Period, SeriesPoint, WindowConfig

_STATE_OF_SENSOR = {
    "kitchen_motion": "kitchen",
    "kettle_plug": "kettle",
    "fridge_door": "fridge",
    "oven_plug": "oven",
    "toaster_plug": "oven",
    "microwave_plug": "oven",
}
_ORDER = ["kitchen", "kettle", "fridge", "oven"]


def _state_items(log: ValidatedEventLog, max_open: timedelta) -> list[tuple]:
    items = []
    open_at = None
    for event in log.events:
        if event.sensor == "fridge_door" and not log.fridge_collapsed:
            if event.value == "door_opened":
                open_at = event.timestamp
            elif open_at is not None and event.timestamp - open_at <= max_open:
                items.append((open_at, event.sensor, "fridge"))
                open_at = None
            else:
                open_at = None
            continue
        items.append((event.timestamp, event.sensor, _STATE_OF_SENSOR[event.sensor]))
    # same ordering rule as a validated log: time, then sensor label
    items.sort(key=lambda item: (item[0], item[1]))
    collapsed = []
    for ts, _, state in items:
        if state == "kitchen" and collapsed and collapsed[-1][1] == "kitchen":
            continue
        collapsed.append((ts, state))
    return collapsed


def _tally(pairs, events, lo: date, hi: date):
    """Per-slot transition counts and event counts for local days ``[lo, hi)``."""
    counts: dict[int, dict] = {}
    for (day_a, slot_a, a), (day_b, slot_b, b) in pairs:
        if day_a == day_b and slot_a == slot_b and lo <= day_a < hi:
            cell = counts.setdefault(slot_a, {})
            cell[(a, b)] = cell.get((a, b), 0) + 1
    n: dict[int, int] = {}
    for day, slot, _ in events:
        if lo <= day < hi:
            n[slot] = n.get(slot, 0) + 1
    return counts, n


def _probabilities(counts: dict) -> list[list[float]]:
    rows = []
    for a in _ORDER:
        total = sum(counts.get((a, b), 0) for b in _ORDER)
        rows.append([counts.get((a, b), 0) / total if total else 0.0 for b in _ORDER])
    return rows


def _distance(p: list[list[float]], q: list[list[float]], cap: float) -> float:
    total = 0.0
    for i in range(4):
        for j in range(4):
            total += (p[i][j] - q[i][j]) ** 2
    return min(cap, math.sqrt(total))


def oracle_scan(
    log: ValidatedEventLog,
    config: WindowConfig,
    start: date,
    end: date,
    max_open_duration: timedelta = timedelta(minutes=10),
) -> DissimilaritySeries:
    zone = ZoneInfo(config.timezone)
    bucketed = []
    for ts, state in _state_items(log, max_open_duration):
        local = ts.astimezone(zone)
        bucketed.append((local.date(), local.hour // config.resample_hours, state))
    pairs = list(zip(bucketed, bucketed[1:]))
    slots_per_period = 6 // config.resample_hours

    points = []
    n_days = (end - start).days
    offset = config.current_days + config.baseline_days
    while offset <= n_days:
        step = start + timedelta(days=offset)
        mid = step - timedelta(days=config.current_days)
        first = mid - timedelta(days=config.baseline_days)
        cur, n_cur = _tally(pairs, bucketed, mid, step)
        base, n_base = _tally(pairs, bucketed, first, mid)
        for period in Period:
            score = 0.0
            cur_events = base_events = 0
            for k in range(slots_per_period):
                slot = period * slots_per_period + k
                score += _distance(
                    _probabilities(cur.get(slot, {})),
                    _probabilities(base.get(slot, {})),
                    config.score_cap,
                )
                cur_events += n_cur.get(slot, 0)
                base_events += n_base.get(slot, 0)
            points.append(SeriesPoint(step, period, score, cur_events, base_events))
        offset += config.step_days
    return DissimilaritySeries(log.household_id, points)
