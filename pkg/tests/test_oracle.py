from datetime import date, timedelta

import pytest

from kitchenwatch import synth
from kitchenwatch.oracle import oracle_scan
from kitchenwatch.pipeline import scan_log
from kitchenwatch.windows import Period, WindowConfig
from conftest import routine_log

START = date(2021, 1, 1)


def test_stationary_all_zero():
    log = routine_log(START, 35)
    end = START + timedelta(days=35)
    slow = oracle_scan(log, WindowConfig(), START, end)
    fast = scan_log(log, WindowConfig(), START, end)
    assert all(p.score == 0.0 for p in slow.points)
    assert slow.points == fast.points


def test_seeded_log_frozen_values():
    """Values recorded from the oracle on a fixed seeded household."""
    end = START + timedelta(days=45)
    log = synth.generate(synth.default_profile(seed=3, rate_scale=55 / 150), START, end)
    assert len(log) == 2757
    slow = oracle_scan(log, WindowConfig(), START, end)
    fast = scan_log(log, WindowConfig(), START, end)
    assert len(slow.points) == len(fast.points) == 72
    first = {p.period: p for p in slow.points[:4]}
    assert first[Period.NIGHT].score == pytest.approx(4.224744871391589, abs=1e-12)
    assert first[Period.MORNING].score == pytest.approx(7.000913144991261, abs=1e-12)
    assert first[Period.AFTERNOON].score == pytest.approx(6.947132865483032, abs=1e-12)
    assert first[Period.EVENING].score == pytest.approx(7.815433436891874, abs=1e-12)
    assert (first[Period.MORNING].current_events, first[Period.MORNING].baseline_events) == (144, 349)
    for a, b in zip(slow.points, fast.points):
        assert (a.step_date, a.period, a.current_events, a.baseline_events) == (
            b.step_date,
            b.period,
            b.current_events,
            b.baseline_events,
        )
        assert abs(a.score - b.score) <= 1e-9


def test_sustained_change_same_peak():
    profile = synth.default_profile(seed=5)
    end = START + timedelta(days=75)
    onset = START + timedelta(days=40)
    log = synth.generate(profile, START, end, synth.sustained_scenario(profile, onset))
    slow = oracle_scan(log, WindowConfig(), START, end)
    fast = scan_log(log, WindowConfig(), START, end)
    for period in Period:
        top_slow = max(slow.for_period(period), key=lambda p: p.score)
        top_fast = max(fast.for_period(period), key=lambda p: p.score)
        assert top_slow.step_date == top_fast.step_date
    evening = max(slow.for_period(Period.EVENING), key=lambda p: p.score)
    assert evening.step_date == date(2021, 2, 18)
    assert evening.score == pytest.approx(6.901171467084111, abs=1e-12)


def test_uncollapsed_fridge_pairs_handled():
    end = START + timedelta(days=30)
    log = synth.generate(synth.default_profile(seed=1), START, end, fridge_fault_rate=0.2)
    slow = oracle_scan(log, WindowConfig(), START, end)
    fast = scan_log(log, WindowConfig(), START, end)
    assert max(abs(a.score - b.score) for a, b in zip(slow.points, fast.points)) <= 1e-9
