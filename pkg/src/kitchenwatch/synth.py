"""Synthetic households driven by per-hour Markov chains, with injected changes."""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta, timezone
from itertools import accumulate
from zoneinfo import ZoneInfo

import numpy as np

from . import ingest
from .chain import N_STATES, State

SUSTAINED = "sustained"
CUMULATIVE = "cumulative"
EPISODIC = "episodic"
ARCHETYPES = (SUSTAINED, CUMULATIVE, EPISODIC)

HOURS = 24
# events are placed on a 30 s grid, matching the sensors' refractory delay
GRID_SECONDS = 30
MAX_EVENTS_PER_HOUR = 3600 // GRID_SECONDS
FRIDGE_CLOSE_DELAY = timedelta(seconds=20)

STATE_SENSOR = {
    State.KITCHEN: (ingest.KITCHEN_MOTION, ingest.MOTION_FIRED),
    State.KETTLE: (ingest.KETTLE_PLUG, ingest.PLUG_USED),
    State.OVEN: (ingest.OVEN_PLUG, ingest.PLUG_USED),
}


class ScenarioError(ValueError):
    """A change scenario does not fit the profile or simulated range."""


def _check_matrices(matrices: np.ndarray) -> None:
    if matrices.shape != (HOURS, N_STATES, N_STATES):
        raise ValueError(f"expected matrices of shape (24, 4, 4), got {matrices.shape}")
    if (matrices < 0).any() or (matrices > 1).any():
        raise ValueError("transition probabilities must lie in [0, 1]")
    if (matrices[:, State.KITCHEN, State.KITCHEN] != 0).any():
        raise ValueError("kitchen->kitchen probability must be 0")
    sums = matrices.sum(axis=-1)
    ok = (np.abs(sums - 1) <= 1e-9) | (sums == 0)
    if not ok.all():
        raise ValueError("every row must sum to 1 or be all-zero")


@dataclass(frozen=True)
class HouseholdProfile:
    """Ground-truth behaviour of one synthetic household.

    ``matrices`` holds one transition matrix per clock hour and ``rates``
    the expected number of state events in that hour.
    """

    matrices: np.ndarray
    rates: np.ndarray
    household_id: str = "h001"
    timezone: str = "UTC"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrices", np.asarray(self.matrices, dtype=float))
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))
        _check_matrices(self.matrices)
        if self.rates.shape != (HOURS,):
            raise ValueError("rates must have one entry per hour")
        if (self.rates < 0).any():
            raise ValueError("rates must be non-negative")
        ZoneInfo(self.timezone)

    def to_dict(self) -> dict:
        return {
            "household_id": self.household_id,
            "timezone": self.timezone,
            "seed": self.seed,
            "rates": self.rates.tolist(),
            "matrices": self.matrices.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HouseholdProfile":
        matrices = np.asarray(data["matrices"], dtype=float)
        if matrices.shape == (N_STATES, N_STATES):
            matrices = np.broadcast_to(matrices, (HOURS, N_STATES, N_STATES)).copy()
        rates = np.asarray(data["rates"], dtype=float)
        if rates.ndim == 0:
            rates = np.full(HOURS, float(rates))
        return cls(
            matrices=matrices,
            rates=rates,
            household_id=str(data.get("household_id", "h001")),
            timezone=str(data.get("timezone", "UTC")),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class ScenarioPhase:
    onset: date
    matrices: np.ndarray | None = None
    rate_multiplier: float | np.ndarray = 1.0


@dataclass(frozen=True)
class ChangeScenario:
    """Ground truth for an injected change.

    Sustained and cumulative phases stay in force from their onset on, each
    replacing the previous regime. An episodic phase only lasts
    ``episodic_days``.
    """

    archetype: str
    phases: tuple[ScenarioPhase, ...]
    episodic_days: int = 0

    def __post_init__(self) -> None:
        if self.archetype not in ARCHETYPES:
            raise ScenarioError(f"unknown archetype {self.archetype!r}")
        if not self.phases:
            raise ScenarioError("scenario needs at least one phase")
        onsets = [p.onset for p in self.phases]
        if onsets != sorted(onsets) or len(set(onsets)) != len(onsets):
            raise ScenarioError("phase onsets must be strictly increasing")
        if self.archetype == EPISODIC and self.episodic_days < 1:
            raise ScenarioError("episodic scenario needs episodic_days >= 1")
        if self.archetype == CUMULATIVE and len(self.phases) < 2:
            raise ScenarioError("cumulative scenario needs at least two phases")
        for phase in self.phases:
            if phase.matrices is not None:
                _check_matrices(np.asarray(phase.matrices, dtype=float))

    @property
    def onsets(self) -> list[date]:
        return [p.onset for p in self.phases]

    def phase_on(self, day: date) -> ScenarioPhase | None:
        if self.archetype == EPISODIC:
            for phase in self.phases:
                if phase.onset <= day < phase.onset + timedelta(days=self.episodic_days):
                    return phase
            return None
        active = None
        for phase in self.phases:
            if phase.onset <= day:
                active = phase
        return active


def redistribute_row(
    matrix: np.ndarray, row: State, tv: float, target: State | None = None
) -> np.ndarray:
    """Move ``tv`` probability mass of one row onto a single target state.

    The mass is taken proportionally from the other cells, so the new row
    sits at total-variation distance exactly ``tv`` from the old one.
    Without an explicit target the least likely admissible state is used.
    """
    out = np.array(matrix, dtype=float, copy=True)
    old = out[row]
    allowed = [s for s in State if not (row is State.KITCHEN and s is State.KITCHEN)]
    if target is None:
        target = min(allowed, key=lambda s: (old[s], s))
    if target not in allowed:
        raise ValueError("kitchen->kitchen cannot receive mass")
    donors = 1.0 - old[target]
    if tv > donors + 1e-12:
        raise ValueError(f"cannot move {tv} mass: only {donors:.3f} available")
    new = old * (1.0 - tv / donors)
    new[target] = old[target] + tv
    out[row] = new
    return out


def _redistribute(matrices: np.ndarray, rows, tv: float, slots) -> np.ndarray:
    out = matrices.copy()
    for h in slots:
        for row in rows:
            out[h] = redistribute_row(out[h], row, tv)
    return out


def sustained_scenario(
    profile: HouseholdProfile,
    onset: date,
    rows: tuple[State, ...] = (State.KETTLE,),
    tv: float = 0.5,
    slots=range(HOURS),
) -> ChangeScenario:
    """A permanent redistribution of the given rows of the chain."""
    matrices = _redistribute(profile.matrices, rows, tv, slots)
    return ChangeScenario(SUSTAINED, (ScenarioPhase(onset, matrices),))


DEFAULT_CUMULATIVE_STAGES = (
    (State.KETTLE, State.FRIDGE),
    (State.OVEN, State.KITCHEN),
)


def cumulative_scenario(
    profile: HouseholdProfile,
    onsets: list[date],
    stages: tuple[tuple[State, ...], ...] = DEFAULT_CUMULATIVE_STAGES,
    tv: float = 0.5,
    slots=range(HOURS),
) -> ChangeScenario:
    """Successive permanent changes, each stacked on top of the previous one.

    Stage ``i`` redistributes the rows ``stages[i % len(stages)]``.
    """
    phases = []
    matrices = profile.matrices
    for i, onset in enumerate(onsets):
        matrices = _redistribute(matrices, stages[i % len(stages)], tv, slots)
        phases.append(ScenarioPhase(onset, matrices))
    return ChangeScenario(CUMULATIVE, tuple(phases))


def episodic_scenario(
    profile: HouseholdProfile,
    onset: date,
    days: int = 2,
    tv: float = 0.5,
    rate_multiplier: float = 2.0,
    slots=range(HOURS),
) -> ChangeScenario:
    """A short burst of disturbed routine: every row shifts and activity rises."""
    matrices = _redistribute(profile.matrices, tuple(State), tv, slots)
    multiplier = np.ones(HOURS)
    multiplier[list(slots)] = rate_multiplier
    return ChangeScenario(
        EPISODIC, (ScenarioPhase(onset, matrices, multiplier),), episodic_days=days
    )


def scenario_from_dict(data: dict, profile: HouseholdProfile) -> ChangeScenario:
    """Build a scenario from its config form.

    Each phase gives an ``onset`` plus either explicit ``matrices`` or a
    ``redistribute`` block (``row``, ``tv``, optional ``target`` and
    ``slots``) applied on top of the previous regime.
    """
    archetype = data["archetype"]
    phases = []
    matrices = profile.matrices.copy()
    for entry in data.get("phases", ()):
        onset = date.fromisoformat(entry["onset"])
        if archetype == EPISODIC:
            matrices = profile.matrices.copy()
        if "matrices" in entry:
            explicit = np.asarray(entry["matrices"], dtype=float)
            if explicit.shape == (N_STATES, N_STATES):
                explicit = np.broadcast_to(explicit, matrices.shape).copy()
            matrices = explicit
        else:
            matrices = matrices.copy()
            for change in entry.get("redistribute", ()):
                row = State.from_label(change["row"])
                target = State.from_label(change["target"]) if "target" in change else None
                for h in change.get("slots", range(HOURS)):
                    matrices[h] = redistribute_row(matrices[h], row, float(change["tv"]), target)
        multiplier = entry.get("rate_multiplier", 1.0)
        if isinstance(multiplier, list):
            multiplier = np.asarray(multiplier, dtype=float)
        phases.append(ScenarioPhase(onset, matrices, multiplier))
    return ChangeScenario(
        archetype,
        tuple(phases),
        episodic_days=int(data.get("episodic_days", 0)),
    )


def load_profile(path) -> HouseholdProfile:
    with open(path, encoding="utf-8") as fh:
        return HouseholdProfile.from_dict(json.load(fh))


def load_scenario(path, profile: HouseholdProfile) -> ChangeScenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh), profile)


# Expected state events per clock hour: quiet nights, breakfast and
# dinner peaks; roughly 150 events a day.
_DEFAULT_RATES = [
    0.8, 0.6, 0.5, 0.5, 0.6, 1.2,
    4.0, 10.0, 11.0, 9.0, 7.0, 8.0,
    11.0, 9.0, 6.0, 6.0, 8.0, 10.0,
    11.0, 9.0, 6.0, 5.0, 3.0, 1.5,
]

_PERIOD_MATRICES = {
    # rows: from kitchen, kettle, fridge, oven
    "night": [
        [0.0, 0.40, 0.45, 0.15],
        [0.55, 0.10, 0.25, 0.10],
        [0.60, 0.15, 0.10, 0.15],
        [0.60, 0.10, 0.20, 0.10],
    ],
    "morning": [
        [0.0, 0.50, 0.30, 0.20],
        [0.45, 0.15, 0.25, 0.15],
        [0.50, 0.20, 0.10, 0.20],
        [0.55, 0.15, 0.20, 0.10],
    ],
    "afternoon": [
        [0.0, 0.35, 0.35, 0.30],
        [0.50, 0.10, 0.25, 0.15],
        [0.45, 0.15, 0.10, 0.30],
        [0.50, 0.15, 0.25, 0.10],
    ],
    "evening": [
        [0.0, 0.30, 0.35, 0.35],
        [0.50, 0.10, 0.20, 0.20],
        [0.45, 0.15, 0.10, 0.30],
        [0.45, 0.15, 0.30, 0.10],
    ],
}


def default_profile(
    household_id: str = "h001", seed: int = 0, timezone: str = "UTC", rate_scale: float = 1.0
) -> HouseholdProfile:
    periods = ["night", "morning", "afternoon", "evening"]
    matrices = np.array([_PERIOD_MATRICES[periods[h // 6]] for h in range(HOURS)], dtype=float)
    return HouseholdProfile(
        matrices=matrices,
        rates=np.asarray(_DEFAULT_RATES) * rate_scale,
        household_id=household_id,
        timezone=timezone,
        seed=seed,
    )


@dataclass
class _Regime:
    cumulative: list[list[list[float]]]
    rates: np.ndarray
    entry: list[list[float]] = field(default_factory=list)


def _make_regime(matrices: np.ndarray, rates: np.ndarray) -> _Regime:
    cum = [[list(accumulate(row)) for row in m] for m in matrices]
    # a walk that reaches an all-zero row restarts from the slot's column mass
    entry = []
    for m in matrices:
        col = m.sum(axis=0)
        col = col / col.sum() if col.sum() > 0 else np.full(N_STATES, 1.0 / N_STATES)
        entry.append(list(accumulate(col)))
    return _Regime(cum, rates, entry)


def _draw(cum: list[float], u: float) -> int:
    return min(bisect_right(cum, u * cum[-1]), N_STATES - 1)


def generate(
    profile: HouseholdProfile,
    start: date,
    end: date,
    scenario: ChangeScenario | None = None,
    seed: int | None = None,
    fridge_fault_rate: float = 0.0,
) -> ingest.ValidatedEventLog:
    """Simulate sensor events for local days ``[start, end)``.

    Per day and clock hour a Poisson count of state events is placed on a
    30 s grid and the hour's chain is walked from the previous state.
    Fridge visits emit an open/close pair 20 s apart; ``fridge_fault_rate``
    drops the closing event with that probability. Random draws happen
    in a fixed order, so days before a scenario onset are identical with
    and without the scenario.
    """
    if (end - start).days < 1:
        raise ScenarioError("simulated range must cover at least one day")
    if scenario is not None:
        for onset in scenario.onsets:
            if not start <= onset < end:
                raise ScenarioError(f"onset {onset} outside simulated range [{start}, {end})")
    rng = np.random.default_rng(profile.seed if seed is None else seed)
    zone = ZoneInfo(profile.timezone)
    household = profile.household_id

    base = _make_regime(profile.matrices, profile.rates)
    regimes: dict[int, _Regime] = {}

    events: list[ingest.SensorEvent] = []
    state = int(State.KITCHEN)
    day = start
    while day < end:
        phase = scenario.phase_on(day) if scenario is not None else None
        if phase is None:
            regime = base
        else:
            key = id(phase)
            if key not in regimes:
                matrices = profile.matrices if phase.matrices is None else np.asarray(phase.matrices)
                regimes[key] = _make_regime(
                    matrices, profile.rates * np.asarray(phase.rate_multiplier, dtype=float)
                )
            regime = regimes[key]
        counts = np.minimum(rng.poisson(regime.rates), MAX_EVENTS_PER_HOUR)
        for hour in range(HOURS):
            n = int(counts[hour])
            if n == 0:
                continue
            offsets = np.sort(rng.choice(MAX_EVENTS_PER_HOUR, size=n, replace=False))
            draws = rng.random(n)
            faults = rng.random(n) if fridge_fault_rate > 0 else None
            hour_start = datetime.combine(day, time(hour), tzinfo=zone).astimezone(timezone.utc)
            rows = regime.cumulative[hour]
            for i in range(n):
                cum = rows[state]
                if cum[-1] <= 0:
                    cum = regime.entry[hour]
                state = _draw(cum, float(draws[i]))
                ts = hour_start + timedelta(seconds=int(offsets[i]) * GRID_SECONDS)
                if state == State.FRIDGE:
                    events.append(ingest.SensorEvent(household, ts, ingest.FRIDGE_DOOR, ingest.DOOR_OPENED))
                    if faults is None or faults[i] >= fridge_fault_rate:
                        events.append(
                            ingest.SensorEvent(
                                household, ts + FRIDGE_CLOSE_DELAY, ingest.FRIDGE_DOOR, ingest.DOOR_CLOSED
                            )
                        )
                else:
                    sensor, value = STATE_SENSOR[State(state)]
                    events.append(ingest.SensorEvent(household, ts, sensor, value))
        day += timedelta(days=1)

    logs = ingest.validate_events(events)
    if household in logs:
        return logs[household]
    return ingest.ValidatedEventLog(household_id=household, events=())


def with_household(profile: HouseholdProfile, household_id: str, seed: int) -> HouseholdProfile:
    return replace(profile, household_id=household_id, seed=seed)
