"""HTTP backend for human orientation labeling.

Serves unlabeled instances to annotation sessions (each instance assigned to
at most one active session at a time), accepts 5-degree-step labels, persists
them to an append-only JSONL store with last-write-wins per labeler and
instance, and serves reference examples that share a bin with the current
selection.
"""

from __future__ import annotations

import threading
import time
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from uuid import uuid4

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .data import DatasetManifest, LabelRecord, read_labels, recover_label_lines
from .geometry import N_BINS, OrientationLabel

STEP_DEG = 5.0


class LabelStore:
    """Append-only JSONL label log; reads recover the longest valid prefix.

    A resubmission by the same labeler for the same instance appends a new
    line; the latest line wins on read.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._latest: OrderedDict[tuple[str, str], LabelRecord] = OrderedDict()
        if self.path.exists():
            lines, dropped = recover_label_lines(self.path)
            for d in lines:
                record = LabelRecord.from_json_dict(d)
                self._apply(record)
            if dropped:
                # Truncate the corrupt tail so future appends stay parseable.
                with open(self.path, "rb+") as f:
                    f.seek(-dropped, 2)
                    f.truncate()
        self._file = open(self.path, "a")

    def _apply(self, record: LabelRecord) -> None:
        key = (record.instance_id, record.labeler_id)
        self._latest.pop(key, None)
        self._latest[key] = record

    def append(self, record: LabelRecord) -> None:
        import json

        with self._lock:
            self._file.write(json.dumps(record.to_json_dict()) + "\n")
            self._file.flush()
            self._apply(record)

    def labeled_instances(self) -> set[str]:
        with self._lock:
            return {inst for inst, _ in self._latest}

    def examples_for_bin(self, bin_index: int, limit: int) -> list[LabelRecord]:
        with self._lock:
            records = [r for r in self._latest.values() if r.orientation.bin == bin_index]
        records.sort(key=lambda r: r.timestamp, reverse=True)
        return records[:limit]

    def count(self) -> int:
        with self._lock:
            return len(self._latest)

    def close(self) -> None:
        self._file.close()


@dataclass
class Session:
    session_id: str
    labeler_id: str
    last_seen: float
    assigned: set[str] = field(default_factory=set)
    served: int = 0
    labeled: int = 0


class AssignmentState:
    """Queue of unlabeled instances with exclusive assignment to sessions."""

    def __init__(self, instance_ids, ttl_seconds: float, clock=time.monotonic):
        self._lock = threading.Lock()
        self._queue = deque(instance_ids)
        self._queued = set(instance_ids)
        self._owner: dict[str, str] = {}  # instance -> session
        self._sessions: dict[str, Session] = {}
        self._done: set[str] = set()
        self.ttl = ttl_seconds
        self.clock = clock

    def create_session(self, labeler_id: str) -> Session:
        with self._lock:
            self._expire_locked()
            session = Session(session_id=uuid4().hex, labeler_id=labeler_id, last_seen=self.clock())
            self._sessions[session.session_id] = session
            return session

    def get_session(self, session_id: str) -> Session:
        with self._lock:
            self._expire_locked()
            session = self._sessions.get(session_id)
            if session is None:
                raise KeyError(session_id)
            session.last_seen = self.clock()
            return session

    def next_instance(self, session_id: str) -> str | None:
        with self._lock:
            self._expire_locked()
            session = self._sessions.get(session_id)
            if session is None:
                raise KeyError(session_id)
            session.last_seen = self.clock()
            while self._queue:
                instance = self._queue.popleft()
                if instance in self._queued:
                    self._queued.discard(instance)
                    self._owner[instance] = session_id
                    session.assigned.add(instance)
                    session.served += 1
                    return instance
            return None

    def complete(self, instance_id: str) -> None:
        with self._lock:
            self._done.add(instance_id)
            owner = self._owner.pop(instance_id, None)
            if owner and owner in self._sessions:
                self._sessions[owner].assigned.discard(instance_id)
                self._sessions[owner].labeled += 1
            self._queued.discard(instance_id)

    def _expire_locked(self) -> None:
        now = self.clock()
        expired = [s for s in self._sessions.values() if now - s.last_seen > self.ttl]
        for session in expired:
            for instance in session.assigned:
                if instance not in self._done:
                    self._owner.pop(instance, None)
                    self._queue.appendleft(instance)
                    self._queued.add(instance)
            del self._sessions[session.session_id]

    def counters(self) -> dict:
        with self._lock:
            return {
                "queued": len(self._queued),
                "assigned": len(self._owner),
                "done": len(self._done),
            }


class SessionRequest(BaseModel):
    labeler_id: str


class LabelSubmission(BaseModel):
    instance_id: str
    theta_deg: float
    labeler_id: str


def create_app(
    manifest: DatasetManifest | str | Path,
    images_dir: str | Path | None = None,
    labels_path: str | Path = "labels_out.jsonl",
    session_ttl_seconds: float = 300.0,
    clock=time.monotonic,
) -> FastAPI:
    if not isinstance(manifest, DatasetManifest):
        manifest = read_labels(manifest)
    by_instance = manifest.by_instance()
    store = LabelStore(labels_path)
    pending = [i for i in by_instance if i not in store.labeled_instances()]
    state = AssignmentState(pending, ttl_seconds=session_ttl_seconds, clock=clock)
    images = Path(images_dir) if images_dir is not None else None

    app = FastAPI(title="orientation annotation service")
    app.state.store = store
    app.state.assignments = state

    def descriptor(instance_id: str) -> dict:
        record = by_instance[instance_id]
        return {
            "instance_id": instance_id,
            "image_ref": record.image_ref,
            "image_url": f"/images/{record.image_ref}",
            "crop_url": f"/crops/{instance_id}",
            "bbox": list(record.bbox),
        }

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        session = state.create_session(req.labeler_id)
        return {"session_id": session.session_id, "remaining": state.counters()["queued"]}

    @app.get("/instances/next")
    def next_instance(session: str = Query(...)):
        try:
            instance = state.next_instance(session)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        if instance is None:
            return Response(status_code=204)
        return descriptor(instance)

    @app.post("/labels", status_code=201)
    def post_label(sub: LabelSubmission):
        if sub.instance_id not in by_instance:
            raise HTTPException(status_code=404, detail="unknown instance")
        theta = sub.theta_deg
        if not (0.0 <= theta <= 355.0) or theta % STEP_DEG != 0.0:
            raise HTTPException(
                status_code=422,
                detail=f"theta_deg must be a multiple of {STEP_DEG:g} in [0, 355]",
            )
        source = by_instance[sub.instance_id]
        record = LabelRecord(
            image_ref=source.image_ref,
            instance_id=sub.instance_id,
            bbox=source.bbox,
            orientation=OrientationLabel.from_theta(theta),
            labeler_id=sub.labeler_id,
            timestamp=datetime.now(timezone.utc),
            source="human",
        )
        store.append(record)
        state.complete(sub.instance_id)
        return {"instance_id": sub.instance_id, "theta_deg": theta, "bin": record.orientation.bin}

    @app.get("/examples")
    def examples(bin: int = Query(...), limit: int = Query(8, ge=1, le=50)):
        if not 0 <= bin < N_BINS:
            raise HTTPException(status_code=422, detail=f"bin must be in [0, {N_BINS})")
        records = store.examples_for_bin(bin, limit)
        return [
            {
                "instance_id": r.instance_id,
                "crop_url": f"/crops/{r.instance_id}",
                "theta_deg": r.orientation.theta_deg,
                "labeler_id": r.labeler_id,
                "timestamp": r.timestamp.isoformat(),
            }
            for r in records
        ]

    @app.get("/progress")
    def progress(session: str = Query(...)):
        try:
            s = state.get_session(session)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        counters = state.counters()
        counters.update({"served": s.served, "labeled": s.labeled})
        return counters

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "labels": store.count()}

    def _serve_file(base: Path | None, name: str):
        if base is None:
            raise HTTPException(status_code=404, detail="no images directory configured")
        path = (base / name).resolve()
        if base.resolve() not in path.parents and path != base.resolve():
            raise HTTPException(status_code=404, detail="not found")
        if not path.is_file():
            raise HTTPException(status_code=404, detail="not found")
        return FileResponse(path)

    @app.get("/crops/{instance_id}")
    def crop(instance_id: str):
        return _serve_file(images, f"{instance_id}.png")

    @app.get("/images/{image_ref}")
    def image(image_ref: str):
        return _serve_file(images, image_ref)

    @app.exception_handler(ValueError)
    def value_error_handler(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    return app
