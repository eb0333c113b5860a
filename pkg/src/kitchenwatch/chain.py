"""Four-state kitchen Markov chain: state mapping and transition tallies."""

from __future__ import annotations

import csv
import io
from bisect import bisect_left
from dataclasses import dataclass
from datetime import datetime
from enum import IntEnum
from typing import Mapping

import numpy as np

from . import ingest


class State(IntEnum):
    KITCHEN = 0
    KETTLE = 1
    FRIDGE = 2
    OVEN = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "State":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown state label {label!r}") from None


N_STATES = len(State)
STATE_LABELS = tuple(s.label for s in State)

DEFAULT_MAPPING: dict[str, State] = {
    ingest.KITCHEN_MOTION: State.KITCHEN,
    ingest.KETTLE_PLUG: State.KETTLE,
    ingest.FRIDGE_DOOR: State.FRIDGE,
    ingest.OVEN_PLUG: State.OVEN,
    ingest.TOASTER_PLUG: State.OVEN,
    ingest.MICROWAVE_PLUG: State.OVEN,
}


class MappingError(ValueError):
    """A sensor present in the log has no state assigned."""


@dataclass(frozen=True)
class StateEventSequence:
    household_id: str
    items: tuple[tuple[datetime, State], ...]

    def __len__(self) -> int:
        return len(self.items)

    @property
    def times(self) -> list[datetime]:
        return [t for t, _ in self.items]


@dataclass(frozen=True)
class TransitionCounts:
    matrix: np.ndarray
    n_events: int = 0

    @classmethod
    def zeros(cls) -> "TransitionCounts":
        return cls(np.zeros((N_STATES, N_STATES), dtype=np.int64), 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransitionCounts):
            return NotImplemented
        return self.n_events == other.n_events and np.array_equal(self.matrix, other.matrix)


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray

    @classmethod
    def zeros(cls) -> "TransitionMatrix":
        return cls(np.zeros((N_STATES, N_STATES)))

    def row(self, state: State) -> np.ndarray:
        return self.matrix[int(state)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)


def map_to_states(
    log: ingest.ValidatedEventLog, mapping: Mapping[str, State] | None = None
) -> StateEventSequence:
    """Translate sensor events into states, collapsing runs of kitchen motion."""
    mapping = DEFAULT_MAPPING if mapping is None else mapping
    has_fridge = any(e.sensor == ingest.FRIDGE_DOOR for e in log.events)
    if has_fridge and not log.fridge_collapsed:
        raise ValueError("fridge door events must be collapsed before state mapping")
    items: list[tuple[datetime, State]] = []
    for event in log.events:
        try:
            state = State(mapping[event.sensor])
        except KeyError:
            raise MappingError(f"no state mapping for sensor {event.sensor!r}") from None
        if state is State.KITCHEN and items and items[-1][1] is State.KITCHEN:
            continue
        items.append((event.timestamp, state))
    return StateEventSequence(log.household_id, tuple(items))


def count_transitions(
    seq: StateEventSequence, start: datetime, end: datetime
) -> TransitionCounts:
    """Tally transitions whose source and target both fall in ``[start, end)``."""
    times = seq.times
    lo = bisect_left(times, start)
    hi = bisect_left(times, end)
    matrix = np.zeros((N_STATES, N_STATES), dtype=np.int64)
    for (_, src), (_, dst) in zip(seq.items[lo:hi], seq.items[lo + 1 : hi]):
        matrix[src, dst] += 1
    return TransitionCounts(matrix, hi - lo)


def normalize(counts: TransitionCounts) -> TransitionMatrix:
    return TransitionMatrix(normalize_rows(counts.matrix))


def normalize_rows(counts: np.ndarray) -> np.ndarray:
    """Row-normalise count matrices of shape ``(..., 4, 4)``; empty rows stay zero."""
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=-1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def merge_counts(a: TransitionCounts, b: TransitionCounts) -> TransitionCounts:
    return TransitionCounts(a.matrix + b.matrix, a.n_events + b.n_events)


def write_matrix_csv(matrix: TransitionMatrix | np.ndarray) -> str:
    values = matrix.matrix if isinstance(matrix, TransitionMatrix) else np.asarray(matrix)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["from", *STATE_LABELS])
    for state, row in zip(STATE_LABELS, values):
        writer.writerow([state, *(repr(float(x)) for x in row)])
    return buf.getvalue()


def read_matrix_csv(text: str) -> TransitionMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != ("from", *STATE_LABELS):
        raise ValueError("matrix block must start with header 'from," + ",".join(STATE_LABELS) + "'")
    body = rows[1:]
    if [r[0] for r in body] != list(STATE_LABELS):
        raise ValueError("matrix rows must follow state order " + ",".join(STATE_LABELS))
    return TransitionMatrix(np.array([[float(x) for x in r[1:]] for r in body]))
