"""HTTP service exposing the inspection workflow.

Stateless handlers over a directory-backed service state: designs and
learned profiles live under ``designs/``, inspection records in an
append-only journal under ``records/``, uploaded images and overlays
under ``images/``, and operator feedback under ``feedback/``.

Image uploads are raw PNG request bodies with metadata in query
parameters, so any HTTP client can drive the service without multipart
encoding. The event feed is server-sent events with a resumable ``since``
cursor; a client that reconnects with its last seen id never misses or
repeats a record.
"""

from __future__ import annotations

import asyncio
import json
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, StreamingResponse

from . import feedback as fb
from .boardspec import (
    BoardDesign,
    DefectType,
    SchemaError,
    board_design_from_dict,
    board_design_to_dict,
    load_board_design,
    save_board_design,
)
from .config import DEFAULT_CONFIG
from .goldenlearn import (
    LearnError,
    assign_refdes,
    learn_golden,
    load_profile,
    save_profile,
)
from .imageio import decode_png, save_png
from .inspector import BoardMeta, InspectionEngine
from .lineio import LineBoard, LineMode, run_line
from .metrics import (
    MetricsWindow,
    availability_pct,
    mtbf_hours,
    replay_month,
)
from .records import (
    DuplicateRecordError,
    RecordError,
    RecordStore,
    WorklistQuery,
)
from .report import draw_overlay
from .synthgen import STANDARD_NUISANCE, inject_defects, render_board


class ServiceState:
    """Everything the handlers share. Profile mutations take the lock;
    record writes are serialized inside the store itself."""

    def __init__(self, data_dir: str | Path):
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "designs").mkdir(exist_ok=True)
        (self.dir / "images").mkdir(exist_ok=True)
        self.records = RecordStore(self.dir / "records")
        self.journal = fb.FeedbackJournal(self.dir / "feedback" / "journal.jsonl")
        self.lock = threading.Lock()
        self._engines: dict[str, InspectionEngine] = {}
        self.last_line_run: Optional[dict] = None

    # -- designs ------------------------------------------------------------

    def design_dir(self, design_id: str) -> Path:
        return self.dir / "designs" / design_id

    def design_path(self, design_id: str) -> Path:
        return self.design_dir(design_id) / "design.json"

    def profile_dir(self, design_id: str) -> Path:
        return self.design_dir(design_id) / "profile"

    def load_design(self, design_id: str) -> BoardDesign:
        path = self.design_path(design_id)
        if not path.exists():
            raise HTTPException(404, f"no design {design_id}")
        return load_board_design(path)

    def engine(self, design_id: str) -> InspectionEngine:
        eng = self._engines.get(design_id)
        if eng is not None:
            return eng
        pdir = self.profile_dir(design_id)
        if not pdir.exists():
            raise HTTPException(404, f"design {design_id} has no learned profile")
        profile, golden = load_profile(pdir)
        eng = InspectionEngine(profile, golden, DEFAULT_CONFIG)
        self._engines[design_id] = eng
        return eng

    def invalidate(self, design_id: str) -> None:
        self._engines.pop(design_id, None)

    def applied_path(self, design_id: str) -> Path:
        return self.design_dir(design_id) / "applied_entries.json"

    def applied_entries(self, design_id: str) -> set[str]:
        path = self.applied_path(design_id)
        if not path.exists():
            return set()
        return set(json.loads(path.read_text()))

    def mark_applied(self, design_id: str, entry_ids: set[str]) -> None:
        path = self.applied_path(design_id)
        self.applied_path(design_id).write_text(
            json.dumps(sorted(self.applied_entries(design_id) | entry_ids)))


def _bad_request(exc: Exception) -> HTTPException:
    return HTTPException(400, str(exc))


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="aoikit", version="0.1.0", docs_url=None, redoc_url=None)
    state = ServiceState(data_dir)
    app.state.service = state

    # -- designs -------------------------------------------------------------

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": DEFAULT_CONFIG.version_string()}

    @app.post("/designs")
    def post_design(doc: dict = Body(...)) -> dict:
        try:
            design = board_design_from_dict(doc)
        except (SchemaError, ValueError) as exc:
            raise _bad_request(exc)
        ddir = state.design_dir(design.design_id)
        ddir.mkdir(parents=True, exist_ok=True)
        save_board_design(design, state.design_path(design.design_id))
        return {"design_id": design.design_id,
                "components": len(design.components)}

    @app.get("/designs")
    def list_designs() -> dict:
        out = []
        for path in sorted(state.dir.glob("designs/*/design.json")):
            design = load_board_design(path)
            out.append({
                "design_id": design.design_id,
                "name": design.name,
                "width_in": design.width_in,
                "height_in": design.height_in,
                "components": len(design.components),
                "profile_learned": state.profile_dir(design.design_id).exists(),
            })
        return {"designs": out}

    @app.get("/designs/{design_id}")
    def get_design(design_id: str) -> dict:
        return board_design_to_dict(state.load_design(design_id))

    @app.post("/designs/{design_id}/golden")
    async def post_golden(design_id: str, request: Request,
                          width_in: Optional[float] = None,
                          height_in: Optional[float] = None) -> dict:
        design = state.load_design(design_id)
        body = await request.body()
        try:
            image = decode_png(body)
        except ValueError as exc:
            raise _bad_request(exc)
        w = width_in if width_in is not None else design.width_in
        h = height_in if height_in is not None else design.height_in
        with state.lock:
            try:
                profile = learn_golden(image, w, h, design_id, DEFAULT_CONFIG)
                profile = assign_refdes(profile, design)
            except (LearnError, ValueError) as exc:
                raise _bad_request(exc)
            save_profile(profile, image, state.profile_dir(design_id))
            state.invalidate(design_id)
        return {
            "design_id": design_id,
            "components": len(profile.profiles),
            "learn_ms": profile.learn_ms,
        }

    @app.get("/designs/{design_id}/profile")
    def get_profile(design_id: str) -> dict:
        pdir = state.profile_dir(design_id)
        if not pdir.exists():
            raise HTTPException(404, f"design {design_id} has no learned profile")
        profile, _ = load_profile(pdir)
        return {
            "design_id": design_id,
            "created_at": profile.created_at,
            "applied_batches": list(profile.applied_batches),
            "components": [
                {
                    "refdes": p.refdes,
                    "class_label": p.class_label,
                    "bbox_px": list(p.bbox_px),
                    "reference_angle_deg": p.reference_angle_deg,
                    "alternates": len(p.alternates),
                    "sensitivity": {t.value: s
                                    for t, s in p.sensitivity.items()},
                }
                for p in profile.ordered_profiles()
            ],
        }

    # -- inspections ---------------------------------------------------------

    @app.post("/inspections")
    async def post_inspection(design_id: str, serial: str, request: Request,
                              work_order: str = "", line_id: str = "") -> dict:
        if not serial:
            raise HTTPException(400, "serial is required")
        engine = state.engine(design_id)
        try:
            image = decode_png(await request.body())
        except ValueError as exc:
            raise _bad_request(exc)
        name = uuid.uuid4().hex
        image_ref = f"images/{name}.png"
        meta = BoardMeta(serial=serial, design_id=design_id,
                         work_order=work_order, line_id=line_id)
        record = engine.inspect_board(image, meta, image_ref=image_ref)
        save_png(state.dir / image_ref, image)
        overlay = draw_overlay(engine.golden, record, engine.profile)
        save_png(state.dir / "images" / f"{name}.overlay.png", overlay)
        try:
            state.records.put_record(record)
        except DuplicateRecordError as exc:
            raise HTTPException(409, str(exc))
        return {"record": record.to_dict(), "seq": state.records.latest_seq()}

    @app.get("/inspections")
    def list_inspections(serial_substring: Optional[str] = None,
                         work_order: Optional[str] = None,
                         model_version: Optional[str] = None,
                         time_start: Optional[str] = None,
                         time_end: Optional[str] = None,
                         line_id: Optional[str] = None,
                         defective_only: bool = False,
                         offset: int = 0, limit: int = 50) -> dict:
        try:
            q = WorklistQuery(
                serial_substring=serial_substring, work_order=work_order,
                model_version=model_version, time_start=time_start,
                time_end=time_end, line_id=line_id,
                defective_only=defective_only, offset=offset, limit=limit)
        except RecordError as exc:
            raise _bad_request(exc)
        page = state.records.query_worklist(q)
        return {"total": page.total, "offset": page.offset,
                "limit": page.limit, "records": list(page.summaries)}

    @app.get("/inspections/{record_id}")
    def get_inspection(record_id: str) -> dict:
        try:
            return state.records.get_record(record_id).to_dict()
        except RecordError as exc:
            raise HTTPException(404, str(exc))

    @app.get("/inspections/{record_id}/overlay.png")
    def get_overlay(record_id: str):
        try:
            record = state.records.get_record(record_id)
        except RecordError as exc:
            raise HTTPException(404, str(exc))
        if not record.image_ref:
            raise HTTPException(404, "record has no stored image")
        path = (state.dir / record.image_ref).with_suffix("")
        path = path.parent / (path.name + ".overlay.png")
        if not path.exists():
            raise HTTPException(404, "overlay not found")
        return FileResponse(path, media_type="image/png")

    # -- feedback and adaptation ----------------------------------------------

    @app.post("/inspections/{record_id}/components/{refdes}/feedback")
    def post_feedback(record_id: str, refdes: str,
                      doc: dict = Body(...)) -> dict:
        try:
            record = state.records.get_record(record_id)
        except RecordError as exc:
            raise HTTPException(404, str(exc))
        try:
            judgment = fb.JudgmentKind(doc.get("judgment", ""))
            missed = doc.get("missed_type")
            missed_type = DefectType(missed) if missed else None
            entry = fb.record_feedback(
                record, refdes, judgment, missed_type=missed_type,
                operator=doc.get("operator", "operator"))
        except (fb.FeedbackError, ValueError) as exc:
            raise _bad_request(exc)
        state.journal.append_entry(entry)
        return entry.to_dict()

    @app.post("/designs/{design_id}/adapt")
    def post_adapt(design_id: str) -> dict:
        pdir = state.profile_dir(design_id)
        if not pdir.exists():
            raise HTTPException(404, f"design {design_id} has no learned profile")
        with state.lock:
            applied = state.applied_entries(design_id)
            pending = []
            for entry in state.journal.entries():
                if entry.entry_id in applied:
                    continue
                try:
                    summary = state.records.get_summary(entry.record_id)
                except RecordError:
                    continue
                if summary["design_id"] == design_id:
                    pending.append(entry)
            profile, golden = load_profile(pdir)
            if not pending:
                return {"batch_id": None, "applied_entries": 0, "events": []}
            batch = fb.make_batch(pending)
            try:
                new_profile, events = fb.adapt_thresholds(profile, batch)
            except fb.FeedbackError as exc:
                raise _bad_request(exc)
            save_profile(new_profile, golden, pdir)
            state.journal.append_events(events)
            state.mark_applied(design_id, {e.entry_id for e in pending})
            state.invalidate(design_id)
        return {
            "batch_id": batch.batch_id,
            "applied_entries": len(pending),
            "events": [e.to_dict() for e in events],
        }

    @app.patch("/designs/{design_id}/components/{refdes}")
    def patch_component(design_id: str, refdes: str,
                        doc: dict = Body(...)) -> dict:
        pdir = state.profile_dir(design_id)
        if not pdir.exists():
            raise HTTPException(404, f"design {design_id} has no learned profile")
        try:
            task = DefectType(doc["task"])
            value = float(doc["sensitivity"])
        except (KeyError, ValueError) as exc:
            raise _bad_request(exc)
        with state.lock:
            profile, golden = load_profile(pdir)
            prof = profile.profiles.get(refdes)
            if prof is None:
                raise HTTPException(404, f"no component {refdes}")
            updated = prof.with_sensitivity(task, value)
            profiles = dict(profile.profiles)
            profiles[refdes] = updated
            save_profile(profile.with_profiles(profiles), golden, pdir)
            state.invalidate(design_id)
        return {"refdes": refdes,
                "sensitivity": {t.value: s
                                for t, s in updated.sensitivity.items()}}

    @app.post("/designs/{design_id}/components/{refdes}/alternates")
    async def post_alternate(design_id: str, refdes: str,
                             request: Request) -> dict:
        pdir = state.profile_dir(design_id)
        if not pdir.exists():
            raise HTTPException(404, f"design {design_id} has no learned profile")
        try:
            crop = decode_png(await request.body())
        except ValueError as exc:
            raise _bad_request(exc)
        with state.lock:
            profile, golden = load_profile(pdir)
            if refdes not in profile.profiles:
                raise HTTPException(404, f"no component {refdes}")
            try:
                new_profile, notice = fb.add_alternate(
                    profile, refdes, crop, DEFAULT_CONFIG)
            except fb.FeedbackError as exc:
                raise _bad_request(exc)
            added = new_profile is not profile
            if added:
                save_profile(new_profile, golden, pdir)
                state.invalidate(design_id)
            count = len(new_profile.profiles[refdes].alternates)
        return {"refdes": refdes, "added": added, "notice": notice,
                "alternates": count}

    # -- metrics and line ------------------------------------------------------

    @app.get("/metrics")
    def get_metrics(uptime_min: Optional[int] = None,
                    downtime_min: int = 0, breakdowns: int = 0) -> dict:
        summaries = state.records.dashboard_feed(0)
        boards = len(summaries)
        defective = sum(1 for e in summaries if e.summary["defective"])
        review = sum(1 for e in summaries
                     if e.summary["status"] == "needs_review")
        out: dict = {
            "boards": boards,
            "defective_boards": defective,
            "needs_review": review,
            "defect_rate": (defective / boards) if boards else 0.0,
            "mean_cycle_ms": (sum(e.summary["cycle_ms"] for e in summaries)
                              / boards) if boards else 0.0,
        }
        if uptime_min is not None:
            try:
                window = MetricsWindow(uptime_min=uptime_min,
                                       downtime_min=downtime_min,
                                       breakdown_count=breakdowns)
            except ValueError as exc:
                raise _bad_request(exc)
            out["availability_pct"] = float(availability_pct(window))
            mtbf = mtbf_hours(uptime_min // 60, breakdowns)
            out["mtbf_hours"] = None if mtbf is None else float(mtbf)
        replay = replay_month()
        out["replay_month"] = {
            "boards": replay.total_boards,
            "defective": replay.total_defective,
            "components": replay.total_components,
            "avg_boards_per_complete_day":
                float(replay.avg_boards_per_complete_day),
        }
        return out

    @app.get("/line/status")
    def line_status() -> dict:
        if state.last_line_run is None:
            return {"state": "Idle", "runs": 0}
        return state.last_line_run

    @app.post("/line/control")
    def line_control(doc: dict = Body(...)) -> dict:
        design_id = doc.get("design_id", "")
        design = state.load_design(design_id)
        engine = state.engine(design_id)
        n_boards = int(doc.get("boards", 5))
        if not (1 <= n_boards <= 50):
            raise HTTPException(400, "boards must be in [1, 50]")
        rate = float(doc.get("defect_rate", 0.1))
        seed = int(doc.get("seed", 1))
        try:
            mode = LineMode(doc.get("mode", "inline"))
        except ValueError as exc:
            raise _bad_request(exc)
        ppi = engine.profile.pixels_per_inch
        boards = []
        for i in range(n_boards):
            serial = f"SIM-{seed}-{i:04d}"
            plan = inject_defects(design, rate, seed * 1000 + i, serial)
            img = render_board(design, plan, ppi, seed=seed * 2000 + i,
                               nuisance=STANDARD_NUISANCE).image
            boards.append(LineBoard(serial=serial, image=img))

        def store(record):
            try:
                state.records.put_record(record)
            except DuplicateRecordError:
                pass  # same sim rerun; records are immutable anyway

        report = run_line(engine, boards, design.width_in, design.height_in,
                          mode=mode, on_record=store)
        summary = report.summary()
        summary["runs"] = (state.last_line_run or {}).get("runs", 0) + 1
        summary["state"] = report.final_state.state.value
        state.last_line_run = summary
        return summary

    # -- event feed -------------------------------------------------------------

    @app.get("/events")
    async def events(since: int = 0, wait: float = 25.0) -> StreamingResponse:
        if since < 0:
            raise HTTPException(400, "since must be >= 0")

        async def gen():
            yield "retry: 2000\n\n"
            cursor = since
            loop = asyncio.get_running_loop()
            deadline = loop.time() + max(0.0, wait)
            while True:
                for ev in state.records.dashboard_feed(cursor):
                    cursor = ev.seq
                    payload = json.dumps(ev.summary, sort_keys=True)
                    yield f"id: {ev.seq}\ndata: {payload}\n\n"
                if loop.time() >= deadline:
                    return
                await asyncio.sleep(0.2)

        return StreamingResponse(gen(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    return app
