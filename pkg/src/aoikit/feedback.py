"""Operator feedback loop: judgments on verdicts, deterministic threshold
adaptation, and alternate-component registration.

Feedback never retrains anything. Each (component, task) pair carries a
sensitivity multiplier on its head threshold; FalseAlarm reports raise it
by 25% and MissedDefect reports lower it by 20%, so one of each cancels
exactly (1.25 * 0.8 = 1.0). Adaptation is batched, idempotent per batch
id, and every change is traceable to the feedback entries that caused it.
"""

from __future__ import annotations

import datetime
import json
import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .boardspec import (
    ALL_DEFECT_TYPES,
    AlternateReference,
    DefectType,
    DigitalProfile,
    GoldenProfile,
    clamp_sensitivity,
)
from .config import DEFAULT_CONFIG, EngineConfig
from .inspector import InspectionRecord
from .inspector import features

FALSE_ALARM_STEP = 1.25
MISSED_DEFECT_STEP = 0.8
DUPLICATE_ALTERNATE_FLOOR = 0.01


class FeedbackError(ValueError):
    pass


class JudgmentKind(Enum):
    CONFIRM_DEFECT = "ConfirmDefect"
    FALSE_ALARM = "FalseAlarm"
    MISSED_DEFECT = "MissedDefect"


@dataclass(frozen=True)
class FeedbackEntry:
    """One operator judgment on one component verdict, immutable once
    recorded. ``task`` is the defect head the judgment applies to: the
    verdict's own type for ConfirmDefect/FalseAlarm, the reported type
    for MissedDefect."""

    entry_id: str
    record_id: str
    refdes: str
    judgment: JudgmentKind
    task: DefectType
    timestamp: str
    operator: str

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "record_id": self.record_id,
            "refdes": self.refdes,
            "judgment": self.judgment.value,
            "task": self.task.value,
            "timestamp": self.timestamp,
            "operator": self.operator,
        }

    @staticmethod
    def from_dict(d: dict) -> "FeedbackEntry":
        return FeedbackEntry(
            entry_id=d["entry_id"],
            record_id=d["record_id"],
            refdes=d["refdes"],
            judgment=JudgmentKind(d["judgment"]),
            task=DefectType(d["task"]),
            timestamp=d["timestamp"],
            operator=d["operator"],
        )


@dataclass(frozen=True)
class AdaptationEvent:
    """One sensitivity change, traceable to the feedback that caused it."""

    refdes: str
    task: DefectType
    old_sensitivity: float
    new_sensitivity: float
    entry_ids: tuple[str, ...]
    batch_id: str

    def to_dict(self) -> dict:
        return {
            "refdes": self.refdes,
            "task": self.task.value,
            "old_sensitivity": self.old_sensitivity,
            "new_sensitivity": self.new_sensitivity,
            "entry_ids": list(self.entry_ids),
            "batch_id": self.batch_id,
        }

    @staticmethod
    def from_dict(d: dict) -> "AdaptationEvent":
        return AdaptationEvent(
            refdes=d["refdes"],
            task=DefectType(d["task"]),
            old_sensitivity=float(d["old_sensitivity"]),
            new_sensitivity=float(d["new_sensitivity"]),
            entry_ids=tuple(d["entry_ids"]),
            batch_id=d["batch_id"],
        )


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(
        timespec="milliseconds")


def record_feedback(record: InspectionRecord, refdes: str,
                    judgment: JudgmentKind,
                    missed_type: Optional[DefectType] = None,
                    operator: str = "operator",
                    timestamp: Optional[str] = None) -> FeedbackEntry:
    """Validate a judgment against the stored verdict and mint the entry.

    ConfirmDefect and FalseAlarm apply only to defect verdicts;
    MissedDefect applies only to clean verdicts and names the defect type
    the operator saw.
    """
    verdict = record.verdicts.get(refdes)
    if verdict is None:
        raise FeedbackError(
            f"record {record.record_id} has no component {refdes}")
    if judgment is JudgmentKind.MISSED_DEFECT:
        if missed_type is None:
            raise FeedbackError("MissedDefect requires the missed type")
        if verdict.defect is not None:
            raise FeedbackError(
                f"{refdes}: MissedDefect only applies to clean verdicts "
                f"(stored verdict is {verdict.defect.value})")
        task = missed_type
    else:
        if missed_type is not None:
            raise FeedbackError(
                f"{judgment.value} does not take a missed type")
        if verdict.defect is None:
            raise FeedbackError(
                f"{refdes}: {judgment.value} only applies to defect "
                f"verdicts (stored verdict is clean)")
        task = verdict.defect
    return FeedbackEntry(
        entry_id=str(uuid.uuid4()),
        record_id=record.record_id,
        refdes=refdes,
        judgment=judgment,
        task=task,
        timestamp=timestamp or _utc_now(),
        operator=operator,
    )


@dataclass(frozen=True)
class FeedbackBatch:
    batch_id: str
    entries: tuple[FeedbackEntry, ...]


def make_batch(entries: Iterable[FeedbackEntry],
               batch_id: Optional[str] = None) -> FeedbackBatch:
    return FeedbackBatch(batch_id=batch_id or str(uuid.uuid4()),
                         entries=tuple(entries))


def adapt_thresholds(profile: GoldenProfile, batch: FeedbackBatch
                     ) -> tuple[GoldenProfile, list[AdaptationEvent]]:
    """Apply one feedback batch to the per-component sensitivities.

    Per (refdes, task): sensitivity scales by 1.25 per FalseAlarm and 0.8
    per MissedDefect in the batch, clamped to [0.25, 4.0]. Counting makes
    the result order-independent within the batch. A batch id that was
    already applied is a no-op, so replays are safe.
    """
    if batch.batch_id in profile.applied_batches:
        return profile, []

    tallies: dict[tuple[str, DefectType], dict] = {}
    for e in batch.entries:
        if e.refdes not in profile.profiles:
            raise FeedbackError(f"unknown refdes {e.refdes} in batch")
        if e.judgment is JudgmentKind.CONFIRM_DEFECT:
            continue  # confirmations affirm the threshold as-is
        t = tallies.setdefault((e.refdes, e.task),
                               {"fa": 0, "md": 0, "ids": []})
        if e.judgment is JudgmentKind.FALSE_ALARM:
            t["fa"] += 1
        else:
            t["md"] += 1
        t["ids"].append(e.entry_id)

    events: list[AdaptationEvent] = []
    profiles = dict(profile.profiles)
    for (refdes, task), t in sorted(tallies.items(),
                                    key=lambda kv: (kv[0][0], kv[0][1].value)):
        p = profiles[refdes]
        old = p.sensitivity[task]
        new = clamp_sensitivity(
            old * FALSE_ALARM_STEP ** t["fa"] * MISSED_DEFECT_STEP ** t["md"])
        if new != old:
            profiles[refdes] = p.with_sensitivity(task, new)
            events.append(AdaptationEvent(
                refdes=refdes, task=task,
                old_sensitivity=old, new_sensitivity=new,
                entry_ids=tuple(t["ids"]), batch_id=batch.batch_id))
    updated = profile.with_profiles(
        profiles, applied_batches=(*profile.applied_batches, batch.batch_id))
    return updated, events


def replay_sensitivity(events: Sequence[AdaptationEvent], refdes: str,
                       task: DefectType) -> float:
    """Reproduce a component's final sensitivity from its audit trail.

    Each event's stored new_sensitivity must follow from the one before
    it; the returned value is the last event's result, or 1.0 if nothing
    ever touched the pair.
    """
    value = 1.0
    for e in events:
        if e.refdes != refdes or e.task is not task:
            continue
        if abs(e.old_sensitivity - value) > 1e-9:
            raise FeedbackError(
                f"audit gap for {refdes}/{task.value}: event expects "
                f"{e.old_sensitivity}, replay has {value}")
        value = e.new_sensitivity
    return value


def add_alternate(profile: GoldenProfile, refdes: str, crop: np.ndarray,
                  config: EngineConfig = DEFAULT_CONFIG
                  ) -> tuple[GoldenProfile, str]:
    """Register a functionally-equivalent part appearance for one site.

    Returns (profile, notice); the notice is empty on success and explains
    the rejection when the crop duplicates an already-accepted appearance
    (embedding distance < 0.01 to the reference or an existing alternate).
    """
    p = profile.profiles.get(refdes)
    if p is None:
        raise FeedbackError(f"unknown refdes {refdes}")
    crop = np.asarray(crop)
    if crop.ndim != 3 or crop.shape[0] < 2 or crop.shape[1] < 2:
        raise FeedbackError(f"{refdes}: degenerate alternate crop")
    emb = features.embed(crop, config.embedding)
    accepted = [np.asarray(p.reference_embedding)]
    accepted.extend(np.asarray(a.embedding) for a in p.alternates)
    nearest = min(features.distance(emb, a) for a in accepted)
    if nearest < DUPLICATE_ALTERNATE_FLOOR:
        return profile, (f"{refdes}: crop duplicates an accepted appearance "
                         f"(distance {nearest:.4f}); profile unchanged")
    updated_p = p.with_alternates(
        (*p.alternates, AlternateReference(crop=crop, embedding=emb)))
    profiles = dict(profile.profiles)
    profiles[refdes] = updated_p
    return profile.with_profiles(profiles), ""


class FeedbackJournal:
    """Append-only structured-text journal of feedback and adaptation.

    One JSON object per line, kind-tagged. The journal is the audit
    export; it is never rewritten.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append_entry(self, entry: FeedbackEntry) -> None:
        self._append({"kind": "feedback", **entry.to_dict()})

    def append_events(self, events: Iterable[AdaptationEvent]) -> None:
        for ev in events:
            self._append({"kind": "adaptation", **ev.to_dict()})

    def _append(self, obj: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(obj, sort_keys=True) + "\n")
            f.flush()

    def entries(self) -> list[FeedbackEntry]:
        return [FeedbackEntry.from_dict(o) for o in self._load()
                if o["kind"] == "feedback"]

    def events(self) -> list[AdaptationEvent]:
        return [AdaptationEvent.from_dict(o) for o in self._load()
                if o["kind"] == "adaptation"]

    def entries_for_record(self, record_id: str) -> list[FeedbackEntry]:
        return [e for e in self.entries() if e.record_id == record_id]

    def _load(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
