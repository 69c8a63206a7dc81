"""Record store: append-only journal semantics, duplicate rejection,
worklist queries held to a brute-force oracle, dashboard feed cursor
behavior, and index rebuild on reopen."""

import itertools
import uuid

import numpy as np
import pytest

from aoikit.boardspec import DefectType
from aoikit.inspector.engine import ComponentVerdict, InspectionRecord
from aoikit.records import (
    DuplicateRecordError,
    RecordError,
    RecordStore,
    WorklistQuery,
)

_COUNTER = itertools.count()


def make_record(serial="SN-1", timestamp="2026-05-01T08:00:00+00:00",
                work_order="WO-A", line_id="line-1", model_version="m1",
                defects=(), status="ok"):
    verdicts = {}
    for i, (refdes, defect) in enumerate(defects):
        verdicts[refdes] = ComponentVerdict(
            refdes=refdes, defect=defect, confidence=0.9,
            scores={defect: 0.5}, thresholds={defect: 0.1},
            matched_reference="primary")
    verdicts.setdefault("R1", ComponentVerdict(
        refdes="R1", defect=None, confidence=0.1,
        scores={DefectType.SKEWED: 0.2},
        thresholds={DefectType.SKEWED: 1.0},
        matched_reference="primary"))
    return InspectionRecord(
        record_id=f"rec-{next(_COUNTER):06d}-{uuid.uuid4().hex[:6]}",
        serial=serial, design_id="demo-8x8", work_order=work_order,
        line_id=line_id, timestamp=timestamp, model_version=model_version,
        status=status, registration={"ncc": 0.99}, verdicts=verdicts,
        cycle_ms=1234.5, image_ref=f"images/{serial}.png")


def test_record_round_trips_through_store(tmp_path):
    store = RecordStore(tmp_path)
    rec = make_record(defects=(("C3", DefectType.REVERSED_POLARITY),))
    rid = store.put_record(rec)
    assert rid == rec.record_id
    back = store.get_record(rid)
    assert back.serial == rec.serial
    assert back.verdicts["C3"].defect is DefectType.REVERSED_POLARITY
    assert back.cycle_ms == rec.cycle_ms
    summary = store.get_summary(rid)
    assert summary["defective"] is True
    assert summary["defects"] == {"C3": "ReversedPolarity"}
    assert summary["image_ref"] == rec.image_ref


def test_duplicate_serial_timestamp_rejected(tmp_path):
    store = RecordStore(tmp_path)
    store.put_record(make_record(serial="SN-9"))
    with pytest.raises(DuplicateRecordError):
        store.put_record(make_record(serial="SN-9"))
    # same serial at a different time is a legitimate re-inspection
    store.put_record(make_record(serial="SN-9",
                                 timestamp="2026-05-01T09:00:00+00:00"))
    assert len(store) == 2


def test_unknown_record_id(tmp_path):
    store = RecordStore(tmp_path)
    with pytest.raises(RecordError):
        store.get_record("nope")
    with pytest.raises(RecordError):
        store.get_summary("nope")


def test_dashboard_feed_is_gap_free_and_monotone(tmp_path):
    store = RecordStore(tmp_path)
    for i in range(40):
        store.put_record(make_record(
            serial=f"SN-{i:03d}",
            timestamp=f"2026-05-01T08:{i:02d}:00+00:00"))
    events = store.dashboard_feed()
    assert [e.seq for e in events] == list(range(1, 41))
    assert store.latest_seq() == 40
    tail = store.dashboard_feed(since=35)
    assert [e.seq for e in tail] == [36, 37, 38, 39, 40]
    assert store.dashboard_feed(since=40) == []
    with pytest.raises(RecordError):
        store.dashboard_feed(since=-1)


def test_feed_events_carry_the_new_summary(tmp_path):
    store = RecordStore(tmp_path)
    rec = make_record(defects=(("U1", DefectType.MISSING),))
    store.put_record(rec)
    event = store.dashboard_feed()[-1]
    assert event.summary["record_id"] == rec.record_id
    assert event.summary["defects"] == {"U1": "Missing"}


def test_reopen_rebuilds_index_from_journal(tmp_path):
    store = RecordStore(tmp_path)
    ids = [store.put_record(make_record(
        serial=f"SN-{i}", timestamp=f"2026-05-01T08:{i:02d}:00+00:00",
        defects=(("R2", DefectType.SKEWED),) if i % 3 == 0 else ()))
        for i in range(12)]
    fresh = RecordStore(tmp_path)
    assert len(fresh) == 12
    assert fresh.latest_seq() == 12
    for rid in ids:
        assert fresh.get_record(rid).record_id == rid
    # duplicates still rejected after reopen
    with pytest.raises(DuplicateRecordError):
        fresh.put_record(make_record(serial="SN-3",
                                     timestamp="2026-05-01T08:03:00+00:00"))
    page = fresh.query_worklist(WorklistQuery(defective_only=True))
    assert page.total == 4


def test_export_preserves_insert_order(tmp_path):
    store = RecordStore(tmp_path)
    for i in range(5):
        store.put_record(make_record(
            serial=f"SN-{i}", timestamp=f"2026-05-01T08:0{i}:00+00:00"))
    serials = [rec["serial"] for rec in store.export()]
    assert serials == [f"SN-{i}" for i in range(5)]


def test_query_validation():
    with pytest.raises(RecordError, match="limit"):
        WorklistQuery(limit=0)
    with pytest.raises(RecordError, match="limit"):
        WorklistQuery(limit=501)
    with pytest.raises(RecordError, match="offset"):
        WorklistQuery(offset=-1)
    with pytest.raises(RecordError, match="malformed time range"):
        WorklistQuery(time_start="2026-05-02T00:00:00+00:00",
                      time_end="2026-05-01T00:00:00+00:00")


def test_serial_match_is_case_insensitive_substring(tmp_path):
    store = RecordStore(tmp_path)
    store.put_record(make_record(serial="ABC-Panel-7"))
    store.put_record(make_record(serial="xyz-99",
                                 timestamp="2026-05-01T09:00:00+00:00"))
    page = store.query_worklist(WorklistQuery(serial_substring="panel"))
    assert page.total == 1
    assert page.summaries[0]["serial"] == "ABC-Panel-7"


def test_newest_first_ordering_and_pagination(tmp_path):
    store = RecordStore(tmp_path)
    for i in range(25):
        store.put_record(make_record(
            serial=f"SN-{i:02d}", timestamp=f"2026-05-01T08:{i:02d}:00+00:00"))
    page1 = store.query_worklist(WorklistQuery(limit=10))
    page2 = store.query_worklist(WorklistQuery(limit=10, offset=10))
    page3 = store.query_worklist(WorklistQuery(limit=10, offset=20))
    assert page1.total == page2.total == page3.total == 25
    serials = [s["serial"] for page in (page1, page2, page3)
               for s in page.summaries]
    assert serials == [f"SN-{i:02d}" for i in reversed(range(25))]
    assert len(page3.summaries) == 5
    beyond = store.query_worklist(WorklistQuery(limit=10, offset=100))
    assert beyond.total == 25 and beyond.summaries == ()


def _brute_force(summaries, q):
    hits = [s for s in summaries if q.matches(s)]
    hits.sort(key=lambda s: (s["timestamp"], s["record_id"]), reverse=True)
    return hits


def test_random_queries_match_brute_force_oracle(tmp_path):
    rng = np.random.default_rng(7)
    store = RecordStore(tmp_path)
    serial_pool = ["PNL-A-%03d" % i for i in range(50)] + \
                  ["pnl-b-%03d" % i for i in range(50)]
    everything = []
    for i in range(800):
        rec = make_record(
            serial=str(rng.choice(serial_pool)),
            timestamp="2026-05-%02dT%02d:%02d:00+00:00" % (
                rng.integers(1, 29), rng.integers(0, 24), rng.integers(0, 60)),
            work_order=str(rng.choice(["WO-A", "WO-B", "WO-C"])),
            line_id=str(rng.choice(["line-1", "line-2"])),
            model_version=str(rng.choice(["m1", "m2"])),
            defects=(("R2", DefectType.MISSING),) if rng.uniform() < 0.3 else ())
        try:
            store.put_record(rec)
        except DuplicateRecordError:
            continue
        everything.append(rec.summary())

    day = lambda: "2026-05-%02dT00:00:00+00:00" % rng.integers(1, 29)
    for _ in range(200):
        start = day() if rng.uniform() < 0.5 else None
        end = day() if rng.uniform() < 0.5 else None
        if start is not None and end is not None and start > end:
            start, end = end, start
        q = WorklistQuery(
            serial_substring=str(rng.choice(["pnl-a", "PNL-B", "-00", "7"]))
            if rng.uniform() < 0.5 else None,
            work_order=str(rng.choice(["WO-A", "WO-B"]))
            if rng.uniform() < 0.3 else None,
            line_id=str(rng.choice(["line-1", "line-2"]))
            if rng.uniform() < 0.3 else None,
            model_version=str(rng.choice(["m1", "m2"]))
            if rng.uniform() < 0.3 else None,
            time_start=start, time_end=end,
            defective_only=bool(rng.uniform() < 0.4),
            offset=int(rng.integers(0, 30)),
            limit=int(rng.integers(1, 40)))
        expected = _brute_force(everything, q)
        page = store.query_worklist(q)
        assert page.total == len(expected)
        got_ids = [s["record_id"] for s in page.summaries]
        want_ids = [s["record_id"] for s in expected[q.offset:q.offset + q.limit]]
        assert got_ids == want_ids


def test_bulk_insert_stays_fast_and_ordered(tmp_path):
    import time

    store = RecordStore(tmp_path)
    t0 = time.perf_counter()
    for i in range(10_000):
        store.put_record(make_record(
            serial=f"SN-{i:05d}",
            timestamp="2026-05-01T%02d:%02d:%02d+00:00" % (
                i // 3600, (i // 60) % 60, i % 60)))
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    assert store.latest_seq() == 10_000
    seqs = [e.seq for e in store.dashboard_feed(since=9_990)]
    assert seqs == list(range(9_991, 10_001))
    fresh = RecordStore(tmp_path)
    assert len(fresh) == 10_000
