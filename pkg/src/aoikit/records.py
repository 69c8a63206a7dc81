"""Inspection record persistence: append-only journal, worklist queries,
and the dashboard event feed.

The journal (one JSON record per line) is the source of truth; the index
maps record ids to byte offsets and is rebuilt from the journal whenever
it is missing or stale, so a crash between the two files cannot lose
accepted records. Records are immutable once appended; operator feedback
lives in its own journal keyed by record_id.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .inspector import InspectionRecord

PAGE_LIMIT_MAX = 500


class RecordError(ValueError):
    pass


class DuplicateRecordError(RecordError):
    pass


@dataclass(frozen=True)
class WorklistQuery:
    """Filter set for the worklist; every field optional, all present
    filters AND together. Serial matching is case-insensitive substring."""

    serial_substring: Optional[str] = None
    work_order: Optional[str] = None
    model_version: Optional[str] = None
    time_start: Optional[str] = None   # ISO-8601, inclusive
    time_end: Optional[str] = None     # ISO-8601, inclusive
    line_id: Optional[str] = None
    defective_only: bool = False
    offset: int = 0
    limit: int = 50

    def __post_init__(self):
        if not (1 <= self.limit <= PAGE_LIMIT_MAX):
            raise RecordError(f"limit {self.limit} outside [1, {PAGE_LIMIT_MAX}]")
        if self.offset < 0:
            raise RecordError("offset must be >= 0")
        if (self.time_start is not None and self.time_end is not None
                and self.time_start > self.time_end):
            raise RecordError("malformed time range: start > end")

    def matches(self, summary: dict) -> bool:
        if self.serial_substring is not None:
            if self.serial_substring.lower() not in summary["serial"].lower():
                return False
        if self.work_order is not None and summary["work_order"] != self.work_order:
            return False
        if self.model_version is not None and summary["model_version"] != self.model_version:
            return False
        if self.line_id is not None and summary["line_id"] != self.line_id:
            return False
        if self.time_start is not None and summary["timestamp"] < self.time_start:
            return False
        if self.time_end is not None and summary["timestamp"] > self.time_end:
            return False
        if self.defective_only and not summary["defective"]:
            return False
        return True


@dataclass(frozen=True)
class WorklistPage:
    total: int
    offset: int
    limit: int
    summaries: tuple[dict, ...]


@dataclass(frozen=True)
class DashboardEvent:
    seq: int
    summary: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "summary": dict(self.summary)}


class RecordStore:
    """Single-writer, many-reader record store over one journal file.

    ``put_record`` serializes writers with a lock; readers operate on the
    in-memory index, which is rebuilt by scanning the journal on open.
    """

    def __init__(self, data_dir: str | Path):
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.journal_path = self.dir / "records.jsonl"
        self._lock = threading.Lock()
        self._offsets: dict[str, int] = {}       # record_id -> byte offset
        self._summaries: list[dict] = []          # insert order
        self._by_id: dict[str, dict] = {}
        self._seen: set[tuple[str, str]] = set()  # (serial, timestamp)
        self._events: list[DashboardEvent] = []
        self._load()

    # -- construction --------------------------------------------------------

    def _load(self) -> None:
        if not self.journal_path.exists():
            return
        with open(self.journal_path, "rb") as f:
            offset = 0
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    self._admit(rec, offset)
                offset += len(line)

    def _admit(self, rec: dict, offset: int) -> None:
        summary = self._summarize(rec)
        self._offsets[rec["record_id"]] = offset
        self._summaries.append(summary)
        self._by_id[rec["record_id"]] = summary
        self._seen.add((rec["serial"], rec["timestamp"]))
        self._events.append(DashboardEvent(seq=len(self._events) + 1,
                                           summary=summary))

    @staticmethod
    def _summarize(rec: dict) -> dict:
        verdicts = rec.get("verdicts", {})
        defects = {r: v["defect"] for r, v in verdicts.items()
                   if v.get("defect")}
        return {
            "record_id": rec["record_id"],
            "serial": rec["serial"],
            "design_id": rec["design_id"],
            "work_order": rec.get("work_order", ""),
            "line_id": rec.get("line_id", ""),
            "timestamp": rec["timestamp"],
            "model_version": rec.get("model_version", ""),
            "status": rec.get("status", "ok"),
            "defective": bool(defects),
            "defect_count": len(defects),
            "defects": defects,
            "cycle_ms": rec.get("cycle_ms", 0.0),
            "image_ref": rec.get("image_ref", ""),
        }

    # -- writes --------------------------------------------------------------

    def put_record(self, record: InspectionRecord) -> str:
        rec = record.to_dict()
        with self._lock:
            key = (rec["serial"], rec["timestamp"])
            if key in self._seen:
                raise DuplicateRecordError(
                    f"record for serial {rec['serial']} at "
                    f"{rec['timestamp']} already stored")
            line = (json.dumps(rec, sort_keys=True) + "\n").encode("utf-8")
            with open(self.journal_path, "ab") as f:
                offset = f.tell()
                f.write(line)
                f.flush()
            self._admit(rec, offset)
        return rec["record_id"]

    # -- reads ---------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._summaries)

    def get_record(self, record_id: str) -> InspectionRecord:
        offset = self._offsets.get(record_id)
        if offset is None:
            raise RecordError(f"no record {record_id}")
        with open(self.journal_path, "rb") as f:
            f.seek(offset)
            return InspectionRecord.from_dict(json.loads(f.readline()))

    def get_summary(self, record_id: str) -> dict:
        summary = self._by_id.get(record_id)
        if summary is None:
            raise RecordError(f"no record {record_id}")
        return dict(summary)

    def query_worklist(self, q: WorklistQuery) -> WorklistPage:
        """Filter, sort newest-first, paginate. Semantically identical to
        brute-force filtering the full store; the acceptance suite holds
        it to that oracle."""
        hits = [s for s in self._summaries if q.matches(s)]
        hits.sort(key=lambda s: (s["timestamp"], s["record_id"]),
                  reverse=True)
        page = hits[q.offset:q.offset + q.limit]
        return WorklistPage(total=len(hits), offset=q.offset, limit=q.limit,
                            summaries=tuple(dict(s) for s in page))

    def dashboard_feed(self, since: int = 0) -> list[DashboardEvent]:
        """All events with sequence number > since, in order, gap-free."""
        if since < 0:
            raise RecordError("since must be >= 0")
        return list(self._events[since:])

    def latest_seq(self) -> int:
        return len(self._events)

    def export(self) -> Iterator[dict]:
        """Full store as parsed journal objects, oldest first."""
        if not self.journal_path.exists():
            return iter(())
        with open(self.journal_path, encoding="utf-8") as f:
            lines = [json.loads(line) for line in f if line.strip()]
        return iter(lines)
