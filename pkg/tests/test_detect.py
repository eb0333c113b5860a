from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kitchenwatch import detect, synth
from kitchenwatch.detect import DetectConfig
from kitchenwatch.pipeline import scan_log
from kitchenwatch.windows import DissimilaritySeries, Period, SeriesPoint

D0 = date(2021, 1, 1)


def series_from(scores, support=100, start=D0, periods=tuple(Period)):
    """One point per day per period, scores given per day (shared by periods)."""
    points = []
    for i, score in enumerate(scores):
        for period in periods:
            points.append(SeriesPoint(start + timedelta(days=i), period, float(score), support, support))
    return DissimilaritySeries("h001", points)


class TestCalibrate:
    def test_constant_zero(self):
        profile = detect.calibrate(series_from([0.0] * 30))
        for t in profile.periods.values():
            assert (t.center, t.spread) == (0.0, 0.0)
            assert t.threshold == pytest.approx(0.3)

    def test_mostly_ones(self):
        profile = detect.calibrate(series_from([1, 1, 1, 5] * 7))
        t = profile.periods[Period.MORNING]
        assert (t.center, t.spread) == (1.0, 0.0)
        assert t.threshold == pytest.approx(1.3)

    def test_scaled_mad(self):
        scores = list(range(28))
        t = detect.calibrate(series_from(scores)).periods[Period.NIGHT]
        assert t.center == 13.5
        assert t.spread == pytest.approx(1.4826 * 7.0)
        assert t.threshold == pytest.approx(13.5 + 3 * 1.4826 * 7.0)

    def test_too_few_steps(self):
        with pytest.raises(detect.CalibrationError, match="28"):
            detect.calibrate(series_from([0.0] * 27))

    def test_range_restricts(self):
        s = series_from([0.0] * 28 + [9.0] * 10)
        profile = detect.calibrate(s, D0, D0 + timedelta(days=28))
        assert profile.periods[Period.NIGHT].center == 0.0
        assert profile.end == D0 + timedelta(days=28)

    def test_low_support_excluded(self):
        s = series_from([1.0] * 28)
        noisy = DissimilaritySeries(
            "h001", s.points + [SeriesPoint(D0 + timedelta(days=40), Period.NIGHT, 20.0, 2, 50)] * 30
        )
        assert detect.calibrate(noisy).periods == detect.calibrate(s).periods

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            detect.calibrate(series_from([0.0] * 30), k=0)

    def test_threshold_not_below_center(self):
        rng = np.random.default_rng(1)
        profile = detect.calibrate(series_from(rng.random(40) * 5))
        assert all(t.threshold >= t.center and t.spread >= 0 for t in profile.periods.values())


def profile_at(threshold: float) -> detect.ThresholdProfile:
    t = detect.PeriodThreshold(0.0, 0.0, threshold, 28)
    return detect.ThresholdProfile("h001", {p: t for p in Period}, D0, D0, 3.0)


class TestFlag:
    def test_nothing_above(self):
        assert detect.flag(series_from([0.1] * 20), profile_at(1.0)) == []

    def test_three_day_run(self):
        scores = [0, 0, 2, 5, 3, 0, 0]
        alerts = detect.flag(series_from(scores, periods=(Period.MORNING,)), profile_at(1.0))
        assert len(alerts) == 1
        a = alerts[0]
        assert (a.onset, a.duration_days, a.peak, a.peak_date) == (D0 + timedelta(days=2), 3, 5.0, D0 + timedelta(days=3))

    def test_one_day_gap_merged(self):
        alerts = detect.flag(series_from([2, 2, 0, 2, 0, 0], periods=(Period.MORNING,)), profile_at(1.0))
        assert len(alerts) == 1 and alerts[0].duration_days == 4

    def test_two_day_gap_splits(self):
        alerts = detect.flag(series_from([2, 0, 0, 2], periods=(Period.MORNING,)), profile_at(1.0))
        assert [a.duration_days for a in alerts] == [1, 1]

    def test_low_support_never_flags(self):
        alerts = detect.flag(series_from([9] * 5, support=3), profile_at(1.0))
        assert alerts == []

    def test_start_cuts_scoring_range(self):
        alerts = detect.flag(series_from([2] * 5 + [0] * 5, periods=(Period.MORNING,)), profile_at(1.0), start=D0 + timedelta(days=5))
        assert alerts == []


class TestClassify:
    def test_short_spike_is_episodic(self):
        scores = [1.0] * 40 + [6.0, 6.0] + [1.0] * 30
        s = series_from(scores, periods=(Period.MORNING,))
        alerts = detect.detect(s, profile_at(2.0))
        assert [a.archetype for a in alerts] == [detect.EPISODIC]

    def test_step_change_is_sustained(self):
        # rise, peak, decay onto a new plateau well above the old center
        scores = [1.0] * 40 + [2, 4, 6, 8, 10, 9, 8, 7, 6, 5, 4, 3.5] + [3.0] * 30
        s = series_from(scores, periods=(Period.MORNING,))
        alerts = detect.detect(s, profile_at(2.0))
        assert [a.archetype for a in alerts] == [detect.SUSTAINED]

    def test_three_successive_changes_are_cumulative(self):
        bump = [5.0] * 6
        quiet = [1.0] * 10
        scores = [1.0] * 30 + bump + quiet + bump + quiet + bump + [1.0] * 30
        s = series_from(scores, periods=(Period.MORNING,))
        alerts = detect.detect(s, profile_at(2.0))
        assert len(alerts) == 3
        assert {a.archetype for a in alerts} == {detect.CUMULATIVE}

    def test_two_changes_are_not_cumulative(self):
        bump = [5.0] * 6
        scores = [1.0] * 30 + bump + [1.0] * 10 + bump + [1.0] * 30
        alerts = detect.detect(series_from(scores, periods=(Period.MORNING,)), profile_at(2.0))
        assert detect.CUMULATIVE not in {a.archetype for a in alerts}

    def test_alert_at_series_end_is_unclassified(self):
        scores = [1.0] * 40 + [6.0] * 3
        alerts = detect.detect(series_from(scores, periods=(Period.MORNING,)), profile_at(2.0))
        assert [a.archetype for a in alerts] == [detect.UNCLASSIFIED]


def test_export_alerts_layout():
    alert = detect.Alert("h001", Period.EVENING, D0, D0 + timedelta(days=2), 3, 7.5, D0, 2.25, detect.EPISODIC)
    assert detect.export_alerts([alert]) == (
        "household_id,period,onset,duration_days,peak,archetype,threshold\n"
        "h001,evening,2021-01-01,3,7.5,episodic,2.25\n"
    )


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.floats(0, 24, allow_nan=False), min_size=1, max_size=60),
    st.floats(0.01, 10),
    st.floats(0.01, 10),
)
def test_flag_monotone_in_threshold(scores, t1, t2):
    low, high = sorted((t1, t2))
    s = series_from(scores)
    a_low = detect.alert_days(detect.flag(s, profile_at(low)))
    a_high = detect.alert_days(detect.flag(s, profile_at(high)))
    assert a_high <= a_low


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(0, 24, allow_nan=False), min_size=1, max_size=60), st.integers(0, 3))
def test_alerts_never_overlap(scores, gap):
    alerts = detect.flag(series_from(scores), profile_at(3.0), DetectConfig(merge_gap_days=gap))
    for period in Period:
        spans = sorted((a.onset, a.end) for a in alerts if a.period is period)
        assert all(prev[1] < nxt[0] for prev, nxt in zip(spans, spans[1:]))
        for a in alerts:
            assert a.duration_days >= 1 and a.peak > a.threshold


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 24, allow_nan=False), min_size=40, max_size=60), st.floats(1, 10))
def test_raising_k_never_adds_alert_days(scores, k_high):
    s = series_from(scores)
    cfg = DetectConfig()
    lo = detect.calibrate(s, k=1.0, config=cfg)
    hi = detect.calibrate(s, k=1.0 + k_high, config=cfg)
    assert detect.alert_days(detect.flag(s, hi, cfg)) <= detect.alert_days(detect.flag(s, lo, cfg))


def test_stationary_synthetic_alert_rate():
    """Few alert-days over 200 stationary synthetic households at k = 3."""
    days = flagged = 0
    for seed in range(200):
        profile = synth.default_profile(seed=seed)
        start = date(2021, 1, 1)
        ref = scan_log(synth.generate(profile, start, start + timedelta(days=90), seed=10_000 + seed))
        run = scan_log(synth.generate(profile, start, start + timedelta(days=90)))
        thresholds = detect.calibrate(ref)
        days += len(run.step_dates) * len(Period)
        flagged += detect.alert_days(detect.flag(run, thresholds))
    assert flagged / days <= 0.02


def test_silent_period_never_alerts():
    series = DissimilaritySeries(
        "h",
        [
            SeriesPoint(D0 + timedelta(days=i), period, 5.0 if period is Period.NIGHT else 0.0, 0 if period is Period.NIGHT else 50, 50)
            for i in range(40)
            for period in Period
        ],
    )
    profile = detect.calibrate(series)
    assert profile.periods[Period.NIGHT].threshold == float("inf")
    assert profile.periods[Period.NIGHT].n_points == 0
    assert detect.flag(series, profile) == []
