"""Reporting artifacts: verdict overlays, delimited summaries, and
figures rendered to files next to them.

Everything here is write-only presentation; nothing feeds back into
inspection, so the formats can evolve without touching verdict logic.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import cv2
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .boardspec import DefectType, GoldenProfile
from .inspector import InspectionRecord
from .lineio import _CYCLE_POINTS, cycle_time_s
from .metrics import ConfusionReport

_PASS_COLOR = (40, 200, 80)     # RGB
_FAIL_COLOR = (230, 60, 50)
_REVIEW_COLOR = (240, 180, 40)


def draw_overlay(image: np.ndarray, record: InspectionRecord,
                 profile: GoldenProfile) -> np.ndarray:
    """Golden-frame verdict overlay: one box per component, green for
    pass, red with the defect label for flags. The caller supplies the
    registered (golden-frame) image, typically the one just inspected."""
    out = image.copy()
    for refdes, verdict in record.verdicts.items():
        prof = profile.profiles.get(refdes)
        if prof is None:
            continue
        x, y, w, h = prof.bbox_px
        color = _PASS_COLOR if verdict.defect is None else _FAIL_COLOR
        cv2.rectangle(out, (x, y), (x + w, y + h), color, 2)
        if verdict.defect is not None:
            label = f"{refdes}:{verdict.defect.value}"
            cv2.putText(out, label, (x, max(12, y - 4)),
                        cv2.FONT_HERSHEY_SIMPLEX, 0.45, color, 1, cv2.LINE_AA)
    if record.status != "ok":
        cv2.putText(out, record.status, (8, 24), cv2.FONT_HERSHEY_SIMPLEX,
                    0.8, _REVIEW_COLOR, 2, cv2.LINE_AA)
    return out


# -- delimited output --------------------------------------------------------


def write_board_csv(path: str | Path,
                    records: Sequence[InspectionRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["serial", "timestamp", "status", "defective",
                    "defect_count", "defects", "cycle_ms", "model_version"])
        for r in records:
            defects = ";".join(f"{refdes}={v.defect.value}"
                               for refdes, v in sorted(r.verdicts.items())
                               if v.defect is not None)
            w.writerow([r.serial, r.timestamp, r.status, int(r.defective),
                        r.defect_count, defects, f"{r.cycle_ms:.1f}",
                        r.model_version])
    return path


def write_confusion_csv(path: str | Path, report: ConfusionReport) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for key, value in report.to_dict().items():
            w.writerow([key, value])
    return path


# -- figures -----------------------------------------------------------------


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def fig_score_distributions(path: str | Path,
                            records: Sequence[InspectionRecord]) -> Path:
    """Histogram of head scores per task, flagged components drawn over
    the clean population so threshold placement is visible."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for ax, task in zip(axes.flat, DefectType):
        clean, flagged = [], []
        for r in records:
            for v in r.verdicts.values():
                score = v.scores.get(task)
                if score is None:
                    continue
                (flagged if v.defect is task else clean).append(score)
        bins = 40
        if clean:
            ax.hist(clean, bins=bins, alpha=0.6, label="pass", color="#4a8")
        if flagged:
            ax.hist(flagged, bins=bins, alpha=0.7, label="flagged",
                    color="#d33")
        ax.set_title(task.value, fontsize=10)
        ax.set_yscale("log")
        ax.legend(fontsize=8)
    fig.suptitle("Head score distributions")
    fig.tight_layout()
    return _save(fig, Path(path))


def fig_defect_counts(path: str | Path,
                      records: Sequence[InspectionRecord]) -> Path:
    counts = {t: 0 for t in DefectType}
    for r in records:
        for v in r.verdicts.values():
            if v.defect is not None:
                counts[v.defect] += 1
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [t.value for t in counts]
    ax.bar(names, [counts[t] for t in DefectType], color="#d33")
    ax.set_ylabel("flagged components")
    ax.set_title("Flags by defect type")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    return _save(fig, Path(path))


def fig_quality_bars(path: str | Path, report: ConfusionReport) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    names = ["accuracy", "overkill", "escape"]
    values = [float(report.accuracy) * 100,
              float(report.overkill_rate) * 100,
              float(report.escape_rate) * 100]
    colors = ["#4a8", "#fa3", "#d33"]
    bars = ax.bar(names, values, color=colors)
    for bar, v in zip(bars, values):
        ax.annotate(f"{v:.2f}%", (bar.get_x() + bar.get_width() / 2, v),
                    ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("percent")
    ax.set_title("Detection quality (component level)")
    fig.tight_layout()
    return _save(fig, Path(path))


def fig_cycle_curve(path: str | Path, highlight_area: Optional[float] = None
                    ) -> Path:
    """Model cycle time against board area with the bench points it was
    fitted to; optionally marks one board size on the curve."""
    areas = np.linspace(20, 450, 200)
    times = [cycle_time_s(a, 1.0) for a in areas]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(areas, times, color="#36c", label="model")
    bench = np.array(_CYCLE_POINTS)
    ax.scatter(bench[:, 0], bench[:, 1], color="#d33", zorder=3,
               label="bench measurements")
    if highlight_area is not None:
        t = cycle_time_s(highlight_area, 1.0)
        ax.scatter([highlight_area], [t], color="#4a8", zorder=4,
                   label=f"this board ({t:.1f}s)")
    ax.set_xlabel("board area (in$^2$)")
    ax.set_ylabel("cycle time (s)")
    ax.set_title("Cycle time vs board area")
    ax.legend(fontsize=9)
    fig.tight_layout()
    return _save(fig, Path(path))


def render_report(out_dir: str | Path, records: Sequence[InspectionRecord],
                  confusion: Optional[ConfusionReport] = None,
                  board_area_in2: Optional[float] = None) -> list[Path]:
    """Write the full artifact set for a batch: delimited summaries plus
    figures, all under one directory. Returns every path written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_board_csv(out / "boards.csv", records)]
    if records:
        paths.append(fig_score_distributions(out / "scores.png", records))
        paths.append(fig_defect_counts(out / "defects.png", records))
    if confusion is not None:
        paths.append(write_confusion_csv(out / "confusion.csv", confusion))
        paths.append(fig_quality_bars(out / "quality.png", confusion))
    paths.append(fig_cycle_curve(out / "cycle_curve.png", board_area_in2))
    return paths
