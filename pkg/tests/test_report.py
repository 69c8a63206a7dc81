"""Report artifacts: verdict overlays, CSV summaries, and figure files.
Presentation code is checked for faithful content (CSV fields match the
records bit for bit) and for actually producing pixels on disk."""

import csv

import numpy as np
import pytest

from aoikit.boardspec import DefectType
from aoikit.inspector import BoardMeta
from aoikit.metrics import ConfusionReport, confusion_rates
from aoikit.report import (
    draw_overlay,
    fig_cycle_curve,
    render_report,
    write_board_csv,
    write_confusion_csv,
)
from aoikit.synthgen import DefectEntry, DefectPlan, render_board
from conftest import PPI, make_board

# overlay palette, verified by exact pixel match below
PASS_RGB = (40, 200, 80)
FAIL_RGB = (230, 60, 50)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def small_batch(demo8_engine, demo8_design):
    """Six boards with ground truth, mixing clean and defective."""
    records, plans = [], {}
    for i in range(6):
        plan, image = make_board(demo8_design, rate=0.4, plan_seed=810 + i,
                                 render_seed=910 + i, serial=f"RP-{i:02d}")
        records.append(demo8_engine.inspect_board(image, BoardMeta(serial=f"RP-{i:02d}")))
        plans[f"RP-{i:02d}"] = plan
    return records, plans


@pytest.fixture(scope="module")
def defective_pair(demo8_engine, demo8_design):
    """One clean board and one with a single known missing part."""
    plan = DefectPlan("RP-BAD", (DefectEntry("R1", DefectType.MISSING),))
    bad = render_board(demo8_design, plan, PPI, seed=333).image
    clean = render_board(demo8_design, DefectPlan("RP-OK"), PPI, seed=334).image
    return (demo8_engine.inspect_board(clean, BoardMeta(serial="RP-OK")), clean,
            demo8_engine.inspect_board(bad, BoardMeta(serial="RP-BAD")), bad)


def _count_color(image, rgb):
    return int(np.all(image == np.array(rgb, dtype=np.uint8), axis=-1).sum())


# ---------------------------------------------------------------------------
# overlay

def test_overlay_draws_pass_boxes_without_touching_input(defective_pair,
                                                         demo8_profile):
    record, image, _, _ = defective_pair
    before = image.copy()
    out = draw_overlay(image, record, demo8_profile)
    assert np.array_equal(image, before)  # input untouched
    assert not np.array_equal(out, image)
    assert _count_color(out, PASS_RGB) > _count_color(image, PASS_RGB) + 100
    assert _count_color(out, FAIL_RGB) == _count_color(image, FAIL_RGB)


def test_overlay_marks_the_defective_component(defective_pair, demo8_profile):
    _, _, record, image = defective_pair
    assert record.verdicts["R1"].defect is DefectType.MISSING  # fixture sanity
    out = draw_overlay(image, record, demo8_profile)
    assert _count_color(out, FAIL_RGB) > _count_color(image, FAIL_RGB) + 100
    # the red pixels sit on the flagged component's box, not elsewhere
    x, y, w, h = demo8_profile.profiles["R1"].bbox_px
    # box outline plus the label text, which runs right of the box
    region = out[max(0, y - 30):y + h + 10, max(0, x - 10):x + w + 160]
    assert _count_color(region, FAIL_RGB) == _count_color(out, FAIL_RGB)


def test_overlay_flags_review_status(demo8_engine, demo8_profile):
    frame = np.zeros((400, 400, 3), dtype=np.uint8)
    record = demo8_engine.inspect_board(frame, BoardMeta(serial="RP-REVIEW"))
    assert record.status == "needs_review"
    out = draw_overlay(frame, record, demo8_profile)
    assert not np.array_equal(out, frame)  # status banner rendered


# ---------------------------------------------------------------------------
# delimited output

def test_board_csv_matches_records(tmp_path, small_batch):
    records, _ = small_batch
    path = write_board_csv(tmp_path / "boards.csv", records)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["serial", "timestamp", "status", "defective",
                       "defect_count", "defects", "cycle_ms", "model_version"]
    assert len(rows) == 1 + len(records)
    for row, rec in zip(rows[1:], records):
        assert row[0] == rec.serial
        assert row[1] == rec.timestamp
        assert row[2] == rec.status
        assert row[3] == str(int(rec.defective))
        assert row[4] == str(rec.defect_count)
        expected = ";".join(f"{r}={v.defect.value}"
                            for r, v in sorted(rec.verdicts.items())
                            if v.defect is not None)
        assert row[5] == expected
        assert float(row[6]) == pytest.approx(rec.cycle_ms, abs=0.05)
        assert row[7] == rec.model_version
    # the batch exercises both branches
    assert any(r.defective for r in records)
    assert any(not r.defective for r in records)


def test_confusion_csv_round_trips_values(tmp_path):
    report = ConfusionReport(total_components=10, clean_components=7,
                             defective_components=3, overkill_count=1,
                             escape_count=1, type_match_count=2,
                             type_mismatch_count=0)
    path = write_confusion_csv(tmp_path / "confusion.csv", report)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["metric", "value"]
    got = {k: v for k, v in rows[1:]}
    for key, value in report.to_dict().items():
        assert got[key] == str(value)


# ---------------------------------------------------------------------------
# figures and the full artifact set

def test_render_report_writes_every_artifact(tmp_path, small_batch):
    records, plans = small_batch
    confusion = confusion_rates(records, plans)
    paths = render_report(tmp_path / "out", records, confusion,
                          board_area_in2=64.0)
    names = {p.name for p in paths}
    assert names == {"boards.csv", "scores.png", "defects.png",
                     "confusion.csv", "quality.png", "cycle_curve.png"}
    for p in paths:
        assert p.exists()
        assert p.stat().st_size > 0
        if p.suffix == ".png":
            assert p.read_bytes()[:8] == PNG_MAGIC


def test_render_report_without_records_or_confusion(tmp_path):
    paths = render_report(tmp_path / "empty", [])
    names = {p.name for p in paths}
    assert names == {"boards.csv", "cycle_curve.png"}
    for p in paths:
        assert p.stat().st_size > 0


def test_cycle_curve_highlight_changes_the_figure(tmp_path):
    plain = fig_cycle_curve(tmp_path / "plain.png")
    marked = fig_cycle_curve(tmp_path / "marked.png", highlight_area=64.0)
    assert plain.read_bytes()[:8] == PNG_MAGIC
    assert marked.read_bytes()[:8] == PNG_MAGIC
    assert plain.read_bytes() != marked.read_bytes()
