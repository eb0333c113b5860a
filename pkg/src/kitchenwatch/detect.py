"""Household-specific thresholds, alert runs and change archetypes."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta

import numpy as np

from .windows import DissimilaritySeries, Period, SeriesPoint

ALERT_COLUMNS = (
    "household_id",
    "period",
    "onset",
    "duration_days",
    "peak",
    "archetype",
    "threshold",
)

EPISODIC = "episodic"
SUSTAINED = "sustained"
CUMULATIVE = "cumulative"
UNCLASSIFIED = "unclassified"

# scales the MAD so it estimates a normal standard deviation
MAD_TO_SD = 1.4826


class CalibrationError(ValueError):
    """Not enough clean history to estimate a household's natural variation."""


@dataclass(frozen=True)
class DetectConfig:
    k: float = 3.0
    epsilon: float = 0.1
    mad_scale: float = MAD_TO_SD
    min_calibration_steps: int = 28
    min_support: int = 10
    merge_gap_days: int = 1
    current_days: int = 7
    baseline_days: int = 21
    sustain_ratio: float = 1.25
    cumulative_links: int = 2
    cumulative_min_days: int = 4

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.epsilon <= 0 or self.mad_scale <= 0:
            raise ValueError("epsilon and mad_scale must be positive")
        if self.merge_gap_days < 0:
            raise ValueError("merge_gap_days must be non-negative")


@dataclass(frozen=True)
class PeriodThreshold:
    center: float
    spread: float
    threshold: float
    n_points: int


@dataclass(frozen=True)
class ThresholdProfile:
    household_id: str
    periods: dict[Period, PeriodThreshold]
    start: date
    end: date
    k: float

    def threshold(self, period: Period) -> float:
        return self.periods[period].threshold


@dataclass(frozen=True)
class Alert:
    household_id: str
    period: Period
    onset: date
    end: date
    duration_days: int
    peak: float
    peak_date: date
    threshold: float
    archetype: str = UNCLASSIFIED

    def covers(self, day: date) -> bool:
        return self.onset <= day <= self.end


def _in_range(points: list[SeriesPoint], start: date | None, end: date | None) -> list[SeriesPoint]:
    return [
        p
        for p in points
        if (start is None or p.step_date >= start) and (end is None or p.step_date < end)
    ]


def calibrate(
    series: DissimilaritySeries,
    start: date | None = None,
    end: date | None = None,
    k: float | None = None,
    config: DetectConfig = DetectConfig(),
) -> ThresholdProfile:
    """Median/MAD threshold per period over the step dates in ``[start, end)``.

    Low-support points are left out. A zero spread falls back to
    ``center + k * epsilon``. A period without any supported point gets an
    infinite threshold.
    """
    k = config.k if k is None else k
    if k <= 0:
        raise ValueError("k must be positive")
    points = _in_range(series.points, start, end)
    dates = sorted({p.step_date for p in points})
    if len(dates) < config.min_calibration_steps:
        raise CalibrationError(
            f"calibration range holds {len(dates)} step dates; "
            f"at least {config.min_calibration_steps} required"
        )
    periods = {}
    for period in Period:
        scores = np.array(
            [
                p.score
                for p in points
                if p.period is period and not p.low_support(config.min_support)
            ]
        )
        if scores.size == 0:
            # nothing to calibrate on; the period can never alert
            periods[period] = PeriodThreshold(math.nan, math.nan, math.inf, 0)
            continue
        center = float(np.median(scores))
        spread = config.mad_scale * float(np.median(np.abs(scores - center)))
        threshold = center + k * (spread if spread > 0 else config.epsilon)
        periods[period] = PeriodThreshold(center, spread, threshold, int(scores.size))
    return ThresholdProfile(series.household_id, periods, dates[0], dates[-1] + timedelta(days=1), k)


def _runs(flags: list[bool], max_gap: int) -> list[tuple[int, int]]:
    """Index spans of True runs, bridging at most ``max_gap`` False entries."""
    runs: list[tuple[int, int]] = []
    for i, hit in enumerate(flags):
        if not hit:
            continue
        if runs and i - runs[-1][1] - 1 <= max_gap:
            runs[-1] = (runs[-1][0], i)
        else:
            runs.append((i, i))
    return runs


def flag(
    series: DissimilaritySeries,
    profile: ThresholdProfile,
    config: DetectConfig = DetectConfig(),
    start: date | None = None,
) -> list[Alert]:
    """Turn exceedances into alerts, one per maximal run and period.

    Low-support points never count as exceedances. Runs separated by
    ``merge_gap_days`` or fewer sub-threshold step dates are merged.
    """
    alerts = []
    for period in Period:
        threshold = profile.threshold(period)
        points = sorted(_in_range(series.for_period(period), start, None), key=lambda p: p.step_date)
        hits = [
            p.score > threshold and not p.low_support(config.min_support) for p in points
        ]
        for first, last in _runs(hits, config.merge_gap_days):
            span = points[first : last + 1]
            top = max(span, key=lambda p: p.score)
            alerts.append(
                Alert(
                    household_id=series.household_id,
                    period=period,
                    onset=span[0].step_date,
                    end=span[-1].step_date,
                    duration_days=(span[-1].step_date - span[0].step_date).days + 1,
                    peak=top.score,
                    peak_date=top.step_date,
                    threshold=threshold,
                )
            )
    alerts.sort(key=lambda a: (a.onset, a.period))
    return alerts


def _cumulative_members(alerts: list[Alert], config: DetectConfig) -> set[int]:
    """Indices of alerts in chains of closely successive onsets.

    Alerts shorter than ``cumulative_min_days`` neither join nor break a
    chain, so isolated noise blips cannot string a chain together.
    """
    members: set[int] = set()
    chain: list[int] = []
    for i, alert in enumerate(alerts):
        if alert.duration_days < config.cumulative_min_days:
            continue
        if chain and (alert.onset - alerts[chain[-1]].end).days <= config.baseline_days:
            chain.append(i)
        else:
            chain = [i]
        if len(chain) - 1 >= config.cumulative_links:
            members.update(chain)
    return members


def classify(
    alert: Alert,
    series: DissimilaritySeries,
    profile: ThresholdProfile,
    alerts: list[Alert] | None = None,
    config: DetectConfig = DetectConfig(),
) -> str:
    """Label an alert as episodic, sustained, cumulative or unclassified.

    * cumulative: part of a chain where a new alert starts within
      ``baseline_days`` of the previous one ending, at least
      ``cumulative_links`` times in a row (same period);
    * episodic: lasted at most ``current_days``, the score fell back below
      threshold and did not settle high;
    * sustained: lasted longer than ``current_days``, peaked before its
      end and decays afterwards, and settled high.

    "Settled high" means the median score over the ``baseline_days`` from
    the alert onset exceeds ``sustain_ratio`` times the median over the
    ``baseline_days`` before it, the span in which the baseline window
    absorbs the new behaviour.
    """
    same_period = sorted(
        (a for a in (alerts or [alert]) if a.period is alert.period), key=lambda a: a.onset
    )
    if alert not in same_period:
        same_period = sorted([*same_period, alert], key=lambda a: a.onset)
    index = same_period.index(alert)
    if index in _cumulative_members(same_period, config):
        return CUMULATIVE

    points = sorted(
        (p for p in series.for_period(alert.period) if not p.low_support(config.min_support)),
        key=lambda p: p.step_date,
    )
    window = timedelta(days=config.baseline_days)
    before = [p.score for p in points if alert.onset - window <= p.step_date < alert.onset]
    center = float(np.median(before)) if before else profile.periods[alert.period].center
    settling = [p.score for p in points if alert.onset <= p.step_date < alert.onset + window]
    after_peak = [p.score for p in points if alert.peak_date < p.step_date <= alert.end + window]
    if len(settling) < config.current_days or not after_peak:
        return UNCLASSIFIED
    returned = bool(points) and alert.end < points[-1].step_date
    settled_high = float(np.median(settling)) > config.sustain_ratio * center
    decays = alert.peak_date < alert.end and after_peak[-1] < alert.peak

    if alert.duration_days <= config.current_days and returned and not settled_high:
        return EPISODIC
    if alert.duration_days > config.current_days and decays and settled_high:
        return SUSTAINED
    return UNCLASSIFIED


def detect(
    series: DissimilaritySeries,
    profile: ThresholdProfile,
    config: DetectConfig = DetectConfig(),
    start: date | None = None,
) -> list[Alert]:
    """Flag alerts and attach an archetype to each."""
    alerts = flag(series, profile, config, start)
    return [
        replace(a, archetype=classify(a, series, profile, alerts, config)) for a in alerts
    ]


def alert_days(alerts: list[Alert]) -> int:
    return sum(a.duration_days for a in alerts)


def export_alerts(alerts: list[Alert]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ALERT_COLUMNS)
    for a in sorted(alerts, key=lambda a: (a.household_id, a.onset, a.period)):
        writer.writerow(
            [
                a.household_id,
                a.period.label,
                a.onset.isoformat(),
                a.duration_days,
                repr(a.peak),
                a.archetype,
                repr(a.threshold),
            ]
        )
    return buf.getvalue()
