"""Line KPIs and return-on-investment accounting.

All ratios are computed in exact rational arithmetic and only converted
to float at the reporting edge, so published figures never drift with
evaluation order. Currency is carried as integer cents.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .boardspec import DefectType
from .synthgen import DefectPlan


class MetricsError(ValueError):
    pass


# -- availability ----------------------------------------------------------


@dataclass(frozen=True)
class MetricsWindow:
    """One observation window of line time, in minutes."""

    uptime_min: int
    downtime_min: int
    breakdown_count: int
    label: str = ""

    def __post_init__(self):
        if self.uptime_min <= 0:
            raise MetricsError("uptime must be positive")
        if self.downtime_min < 0 or self.breakdown_count < 0:
            raise MetricsError("downtime and breakdowns must be >= 0")
        if self.downtime_min > self.uptime_min:
            raise MetricsError("downtime exceeds the window")


def availability_pct(window: MetricsWindow) -> Fraction:
    """Share of scheduled time the line was actually producing.

    Scheduled time is the full window; downtime is carved out of it, so
    a 1000 minute window with 4 minutes down is 99.6 percent available.
    """
    return Fraction(window.uptime_min - window.downtime_min,
                    window.uptime_min) * 100


def availability_conventional_pct(window: MetricsWindow) -> Fraction:
    """Alternative convention where uptime and downtime are disjoint
    measurements: uptime / (uptime + downtime)."""
    return Fraction(window.uptime_min,
                    window.uptime_min + window.downtime_min) * 100


def mtbf_hours(uptime_hours: int | Fraction,
               breakdown_count: int) -> Optional[Fraction]:
    """Mean operating time between failures. None when the window saw no
    breakdowns (the estimate is unbounded, not zero)."""
    if uptime_hours < 0 or breakdown_count < 0:
        raise MetricsError("negative inputs")
    if breakdown_count == 0:
        return None
    return Fraction(uptime_hours) / breakdown_count


# -- detection quality -----------------------------------------------------


@dataclass(frozen=True)
class ConfusionReport:
    total_components: int
    clean_components: int
    defective_components: int
    overkill_count: int       # clean components flagged
    escape_count: int         # defective components passed
    type_match_count: int     # defective flagged with the correct type
    type_mismatch_count: int  # defective flagged with the wrong type

    @property
    def overkill_rate(self) -> Fraction:
        if self.clean_components == 0:
            return Fraction(0)
        return Fraction(self.overkill_count, self.clean_components)

    @property
    def escape_rate(self) -> Fraction:
        if self.defective_components == 0:
            return Fraction(0)
        return Fraction(self.escape_count, self.defective_components)

    @property
    def accuracy(self) -> Fraction:
        """Component-level accuracy: clean parts passed plus defective
        parts flagged with the correct type, over all components."""
        correct = (self.clean_components - self.overkill_count
                   + self.type_match_count)
        return Fraction(correct, self.total_components)

    def to_dict(self) -> dict:
        return {
            "total_components": self.total_components,
            "clean_components": self.clean_components,
            "defective_components": self.defective_components,
            "overkill_count": self.overkill_count,
            "escape_count": self.escape_count,
            "type_match_count": self.type_match_count,
            "type_mismatch_count": self.type_mismatch_count,
            "overkill_rate": float(self.overkill_rate),
            "escape_rate": float(self.escape_rate),
            "accuracy": float(self.accuracy),
        }


def confusion_rates(records: Sequence, plans: Mapping[str, DefectPlan],
                    ) -> ConfusionReport:
    """Score inspection records against the ground-truth defect plans,
    keyed by board serial. Every record's serial must be present in the
    plan map; a stray serial is an error, not a skip."""
    total = clean = defective = overkill = escape = 0
    type_match = type_mismatch = 0
    for rec in records:
        plan = plans.get(rec.serial)
        if plan is None:
            raise MetricsError(f"no ground truth for serial {rec.serial}")
        truth: dict[str, DefectType] = {e.refdes: e.defect
                                        for e in plan.entries}
        for refdes, verdict in rec.verdicts.items():
            total += 1
            expected = truth.get(refdes)
            if expected is None:
                clean += 1
                if verdict.defect is not None:
                    overkill += 1
            else:
                defective += 1
                if verdict.defect is None:
                    escape += 1
                elif verdict.defect is expected:
                    type_match += 1
                else:
                    type_mismatch += 1
    if total == 0:
        raise MetricsError("no components scored")
    return ConfusionReport(
        total_components=total, clean_components=clean,
        defective_components=defective, overkill_count=overkill,
        escape_count=escape, type_match_count=type_match,
        type_mismatch_count=type_mismatch)


# -- ROI -------------------------------------------------------------------


@dataclass(frozen=True)
class RoiInputs:
    """Annualized savings model for replacing manual first-piece checks.

    Money is integer cents; time is exact rational minutes.
    """

    first_pieces_per_day: int
    minutes_per_inspection: Fraction | int
    labor_rate_cents_per_hour: int
    working_days_per_year: int
    cost_avoidance_cents_per_month: int

    def __post_init__(self):
        for name in ("first_pieces_per_day", "labor_rate_cents_per_hour",
                     "working_days_per_year", "cost_avoidance_cents_per_month"):
            if getattr(self, name) < 0:
                raise MetricsError(f"{name} must be >= 0")
        if Fraction(self.minutes_per_inspection) < 0:
            raise MetricsError("minutes_per_inspection must be >= 0")


@dataclass(frozen=True)
class RoiReport:
    labor_savings_cents_per_year: int
    cost_avoidance_cents_per_year: int

    @property
    def total_cents_per_year(self) -> int:
        return self.labor_savings_cents_per_year + self.cost_avoidance_cents_per_year

    def to_dict(self) -> dict:
        return {
            "labor_savings_cents_per_year": self.labor_savings_cents_per_year,
            "cost_avoidance_cents_per_year": self.cost_avoidance_cents_per_year,
            "total_cents_per_year": self.total_cents_per_year,
        }


def roi_report(inputs: RoiInputs) -> RoiReport:
    """Annual labor displaced by automation plus annualized scrap and
    rework avoided. Exact until the final rounding to whole cents."""
    hours_per_day = (Fraction(inputs.minutes_per_inspection)
                     * inputs.first_pieces_per_day / 60)
    labor = (hours_per_day * inputs.labor_rate_cents_per_hour
             * inputs.working_days_per_year)
    avoidance = inputs.cost_avoidance_cents_per_month * 12
    return RoiReport(
        labor_savings_cents_per_year=round(labor),
        cost_avoidance_cents_per_year=avoidance)


def format_cents(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}${cents // 100:,}.{cents % 100:02d}"


# -- production replay -----------------------------------------------------


@dataclass(frozen=True)
class ReplayDay:
    day: int
    boards: int
    defective_boards: int
    complete: bool


@dataclass(frozen=True)
class ReplaySummary:
    days: tuple[ReplayDay, ...]
    components_per_board: int

    @property
    def total_boards(self) -> int:
        return sum(d.boards for d in self.days)

    @property
    def total_defective(self) -> int:
        return sum(d.defective_boards for d in self.days)

    @property
    def total_components(self) -> int:
        return self.total_boards * self.components_per_board

    @property
    def complete_days(self) -> tuple[ReplayDay, ...]:
        return tuple(d for d in self.days if d.complete)

    @property
    def avg_boards_per_complete_day(self) -> Fraction:
        days = self.complete_days
        if not days:
            raise MetricsError("no complete days in replay")
        return Fraction(sum(d.boards for d in days), len(days))

    @property
    def defect_rate(self) -> Fraction:
        return Fraction(self.total_defective, self.total_boards)


def replay_month(complete_days: int = 23, boards_per_day: int = 388,
                 partial_day_boards: int = 294, defective_total: int = 473,
                 components_per_board: int = 618) -> ReplaySummary:
    """Deterministic one-month production trace used by the KPI demos:
    a run of identical complete days plus one short final day, with the
    defective boards spread evenly across the month."""
    total = complete_days * boards_per_day + partial_day_boards
    if defective_total > total:
        raise MetricsError("more defects than boards")
    counts = []
    acc = 0
    for day in range(complete_days + 1):
        boards = boards_per_day if day < complete_days else partial_day_boards
        # even spread: cumulative quota keeps per-day counts within 1
        quota = defective_total * (acc + boards) // total
        already = defective_total * acc // total
        counts.append(ReplayDay(day=day + 1, boards=boards,
                                defective_boards=quota - already,
                                complete=day < complete_days))
        acc += boards
    return ReplaySummary(days=tuple(counts),
                         components_per_board=components_per_board)
