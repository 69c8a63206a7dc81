"""KPI arithmetic: exact rational availability and MTBF, confusion rates
scored against ground-truth plans, integer-cents ROI, and the replayed
production month."""

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoikit.boardspec import DefectType
from aoikit.inspector.engine import ComponentVerdict, InspectionRecord
from aoikit.metrics import (
    ConfusionReport,
    MetricsError,
    MetricsWindow,
    RoiInputs,
    availability_conventional_pct,
    availability_pct,
    confusion_rates,
    format_cents,
    mtbf_hours,
    replay_month,
    roi_report,
)
from aoikit.synthgen import DefectEntry, DefectPlan


# ---------------------------------------------------------------------------
# availability and MTBF

def test_availability_is_exact():
    w = MetricsWindow(uptime_min=1000, downtime_min=4, breakdown_count=2)
    assert availability_pct(w) == Fraction(996, 1000) * 100
    assert availability_pct(w) == Fraction(498, 5)
    assert float(availability_pct(w)) == 99.6


def test_availability_conventions_differ():
    w = MetricsWindow(uptime_min=1000, downtime_min=4, breakdown_count=2)
    primary = availability_pct(w)          # (uptime - downtime) / uptime
    conventional = availability_conventional_pct(w)  # uptime / (uptime + down)
    assert primary == Fraction(996, 10)
    assert conventional == Fraction(1000, 1004) * 100
    assert primary != conventional


def test_availability_boundaries():
    clean = MetricsWindow(uptime_min=480, downtime_min=0, breakdown_count=0)
    assert availability_pct(clean) == 100
    dead = MetricsWindow(uptime_min=480, downtime_min=480, breakdown_count=9)
    assert availability_pct(dead) == 0


def test_window_validation():
    with pytest.raises(MetricsError):
        MetricsWindow(uptime_min=0, downtime_min=0, breakdown_count=0)
    with pytest.raises(MetricsError):
        MetricsWindow(uptime_min=100, downtime_min=101, breakdown_count=0)
    with pytest.raises(MetricsError):
        MetricsWindow(uptime_min=100, downtime_min=0, breakdown_count=-1)


def test_mtbf_exact_and_none_when_no_breakdowns():
    assert mtbf_hours(1000, 4) == Fraction(250)
    assert mtbf_hours(Fraction(100, 3), 2) == Fraction(50, 3)
    assert mtbf_hours(1000, 0) is None


@given(st.integers(1, 10_000), st.integers(0, 10_000), st.integers(0, 50))
def test_availability_stays_rational_in_range(up, down, brk):
    if down > up:
        up, down = down, up
        if up == down:
            up += 1
    w = MetricsWindow(uptime_min=up, downtime_min=down, breakdown_count=brk)
    a = availability_pct(w)
    assert isinstance(a, Fraction)
    assert 0 <= a <= 100
    assert a == Fraction(up - down, up) * 100


# ---------------------------------------------------------------------------
# confusion rates

def _verdict(refdes, defect):
    scores = {defect or DefectType.SKEWED: 0.4}
    return ComponentVerdict(refdes=refdes, defect=defect, confidence=0.8,
                            scores=scores,
                            thresholds={k: 1.0 for k in scores},
                            matched_reference="primary")


def _record(serial, verdicts):
    return InspectionRecord(
        record_id=f"r-{serial}", serial=serial, design_id="d",
        work_order="", line_id="", timestamp="2026-05-01T00:00:00+00:00",
        model_version="m", status="ok", registration={},
        verdicts={v.refdes: v for v in verdicts})


def test_confusion_hand_built_fixture():
    # board A: R1 truly missing and caught; R2 clean but flagged (overkill);
    # R3 clean and passed.
    # board B: C1 truly skewed but passed (escape); C2 truly missing but
    # flagged as wrong component (type mismatch); C3 clean and passed.
    plans = {
        "A": DefectPlan("A", (DefectEntry("R1", DefectType.MISSING),)),
        "B": DefectPlan("B", (
            DefectEntry("C1", DefectType.SKEWED, {"angle_deg": 10.0}),
            DefectEntry("C2", DefectType.MISSING),
        )),
    }
    records = [
        _record("A", [_verdict("R1", DefectType.MISSING),
                      _verdict("R2", DefectType.SKEWED),
                      _verdict("R3", None)]),
        _record("B", [_verdict("C1", None),
                      _verdict("C2", DefectType.WRONG_COMPONENT),
                      _verdict("C3", None)]),
    ]
    report = confusion_rates(records, plans)
    assert report.total_components == 6
    assert report.clean_components == 3
    assert report.defective_components == 3
    assert report.overkill_count == 1
    assert report.escape_count == 1
    assert report.type_match_count == 1
    assert report.type_mismatch_count == 1
    assert report.overkill_rate == Fraction(1, 3)
    assert report.escape_rate == Fraction(1, 3)
    # correct = clean-and-passed (2) + defective-with-right-type (1)
    assert report.accuracy == Fraction(3, 6)
    d = report.to_dict()
    assert d["overkill_rate"] == pytest.approx(1 / 3)
    assert d["accuracy"] == pytest.approx(0.5)


def test_confusion_requires_ground_truth_for_every_serial():
    records = [_record("MISSING-PLAN", [_verdict("R1", None)])]
    with pytest.raises(MetricsError, match="MISSING-PLAN"):
        confusion_rates(records, {})


def test_confusion_rejects_empty_scoring():
    with pytest.raises(MetricsError):
        confusion_rates([], {})


def test_rates_on_empty_populations_are_zero():
    report = ConfusionReport(
        total_components=4, clean_components=4, defective_components=0,
        overkill_count=0, escape_count=0, type_match_count=0,
        type_mismatch_count=0)
    assert report.escape_rate == 0
    assert report.accuracy == 1


# ---------------------------------------------------------------------------
# ROI

def test_roi_hand_computed():
    inputs = RoiInputs(
        first_pieces_per_day=30,
        minutes_per_inspection=Fraction(15, 2),  # 7.5 minutes
        labor_rate_cents_per_hour=3900,          # $39.00/h
        working_days_per_year=251,
        cost_avoidance_cents_per_month=476900)   # $4,769.00
    report = roi_report(inputs)
    # 7.5 min * 30 pieces = 3.75 h/day; * $39 * 251 days = $36,708.75
    assert report.labor_savings_cents_per_year == 3670875
    assert report.cost_avoidance_cents_per_year == 476900 * 12
    assert report.total_cents_per_year == 3670875 + 5722800
    assert format_cents(report.total_cents_per_year) == "$93,936.75"


def test_roi_scales_linearly_in_each_input():
    base = RoiInputs(10, 6, 3000, 200, 100000)
    double_pieces = RoiInputs(20, 6, 3000, 200, 100000)
    assert roi_report(double_pieces).labor_savings_cents_per_year == \
        2 * roi_report(base).labor_savings_cents_per_year
    double_rate = RoiInputs(10, 6, 6000, 200, 100000)
    assert roi_report(double_rate).labor_savings_cents_per_year == \
        2 * roi_report(base).labor_savings_cents_per_year


def test_roi_validation():
    with pytest.raises(MetricsError):
        RoiInputs(-1, 6, 3000, 200, 0)
    with pytest.raises(MetricsError):
        RoiInputs(1, -1, 3000, 200, 0)


def test_format_cents():
    assert format_cents(0) == "$0.00"
    assert format_cents(5) == "$0.05"
    assert format_cents(123456789) == "$1,234,567.89"
    assert format_cents(-250) == "-$2.50"


# ---------------------------------------------------------------------------
# production-month replay

def test_replay_month_totals_are_exact():
    replay = replay_month()
    assert replay.total_boards == 23 * 388 + 294 == 9218
    assert replay.total_defective == 473
    assert replay.total_components == 9218 * 618
    assert len(replay.days) == 24
    assert len(replay.complete_days) == 23
    assert replay.avg_boards_per_complete_day == Fraction(388)
    assert replay.defect_rate == Fraction(473, 9218)


def test_replay_month_spreads_defects_evenly():
    replay = replay_month()
    counts = [d.defective_boards for d in replay.days]
    assert sum(counts) == 473
    # complete days stay within one board of each other
    complete = counts[:23]
    assert max(complete) - min(complete) <= 1
    # and no day is wildly off the proportional share
    for d in replay.days:
        share = Fraction(473 * d.boards, 9218)
        assert abs(d.defective_boards - share) <= 1


def test_replay_month_rejects_impossible_inputs():
    with pytest.raises(MetricsError):
        replay_month(complete_days=1, boards_per_day=10,
                     partial_day_boards=0, defective_total=11)
