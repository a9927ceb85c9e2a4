"""HTTP gateway: JSON-over-HTTP surface for the review UI and scripts.

Every response is an ApiEnvelope ({"status": "ok", "payload": ...} or
{"status": "error", "error": {code, message, details}}); error codes carry
the engine's exception class names verbatim. All state changes flow through
the session decision log; requests to one session are serialized.
"""

from __future__ import annotations

import json
import threading
from email.parser import BytesParser
from email.policy import default as default_policy

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from semtable import __version__
from semtable.errors import (
    ClassifyError,
    EmptyInputError,
    EncodingError,
    FinalizeBlockedError,
    InsufficientRowsError,
    IntegrityError,
    NotFoundError,
    ParseError,
    PhaseError,
    ReplayError,
    SemtableError,
    SnapshotError,
    SpecError,
    ValidationError,
)
from semtable.evolution import (
    ArtifactDescriptor,
    DEFAULT_NAMESPACE,
    classify_stage,
    export_semantic_doc,
    export_triples,
    integrate,
)
from semtable.session import Session, apply_decision, _cell_view, _column_view
from semtable.similarity import TrigramIndex
from semtable.tables import CsvConfig
from semtable.workspace import Workspace

_STATUS_OF = {
    ValidationError: 400,
    ParseError: 400,
    EncodingError: 400,
    EmptyInputError: 400,
    InsufficientRowsError: 400,
    ReplayError: 400,
    ClassifyError: 400,
    SpecError: 400,
    IntegrityError: 400,
    NotFoundError: 404,
    PhaseError: 409,
    FinalizeBlockedError: 409,
    SnapshotError: 500,
}


def _ok(payload, status_code: int = 200) -> JSONResponse:
    return JSONResponse({"status": "ok", "payload": payload}, status_code=status_code)


def _error(exc: SemtableError) -> JSONResponse:
    status = _STATUS_OF.get(type(exc), 500)
    return JSONResponse(
        {
            "status": "error",
            "error": {"code": exc.code, "message": str(exc), "details": exc.details()},
        },
        status_code=status,
    )


def parse_multipart(content_type: str, body: bytes) -> dict:
    """Parse multipart/form-data with the stdlib email machinery.

    Returns field name -> (filename or None, bytes).
    """
    msg = BytesParser(policy=default_policy).parsebytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
    )
    fields: dict = {}
    if msg.is_multipart():
        for part in msg.iter_parts():
            name = part.get_param("name", header="content-disposition")
            if name is None:
                continue
            payload = part.get_payload(decode=True) or b""
            fields[str(name)] = (part.get_filename(), payload)
    return fields


class _SessionRegistry:
    """Lazy-loading session cache with one lock per session."""

    def __init__(self, workspace: Workspace):
        self.workspace = workspace
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            cached = self._sessions.get(session_id)
        if cached is not None:
            return cached
        session = self.workspace.load_session(session_id)
        with self._registry_lock:
            return self._sessions.setdefault(session_id, session)

    def put(self, session: Session) -> None:
        with self._registry_lock:
            self._sessions[session.id] = session


def create_app(workspace: Workspace) -> FastAPI:
    app = FastAPI(title="semtable", version=__version__, docs_url=None, redoc_url=None)
    registry = _SessionRegistry(workspace)
    live_store = workspace.load_store()
    store_lock = threading.Lock()

    @app.exception_handler(SemtableError)
    async def semtable_error_handler(request: Request, exc: SemtableError):
        return _error(exc)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error(ValidationError(str(exc)))

    @app.exception_handler(Exception)
    async def internal_handler(request: Request, exc: Exception):
        return JSONResponse(
            {
                "status": "error",
                "error": {
                    "code": "InternalError",
                    "message": f"{type(exc).__name__}: {exc}",
                    "details": {},
                },
            },
            status_code=500,
        )

    @app.get("/healthz")
    def healthz():
        return _ok(
            {
                "service": "semtable",
                "version": __version__,
                "similarity_backend": TrigramIndex().backend,
            }
        )

    @app.post("/sessions")
    async def create_session(request: Request):
        content_type = request.headers.get("content-type", "")
        if not content_type.startswith("multipart/form-data"):
            raise ValidationError("POST /sessions expects multipart/form-data with a 'file' part")
        fields = parse_multipart(content_type, await request.body())
        if "file" not in fields:
            raise ValidationError("missing 'file' part")
        _, csv_bytes = fields["file"]

        def text_field(name: str, fallback: str) -> str:
            if name in fields:
                return fields[name][1].decode("utf-8")
            return fallback

        metadata = {}
        if "metadata" in fields:
            try:
                metadata = json.loads(fields["metadata"][1].decode("utf-8"))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"metadata field is not valid JSON: {exc}") from None
            if not isinstance(metadata, dict):
                raise ValidationError("metadata must be a JSON object")
        config = CsvConfig(
            delimiter=text_field("delimiter", ","),
            quote=text_field("quote", '"'),
            header=text_field("header", "auto"),
            source_id=text_field("source_id", fields["file"][0] or "upload"),
            metadata={str(k): str(v) for k, v in metadata.items()},
        )
        with store_lock:
            session = workspace.create_session(csv_bytes, config, live_store)
        registry.put(session)
        return _ok(session.to_view(), status_code=201)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _ok(registry.get(session_id).to_view())

    @app.post("/sessions/{session_id}/decisions")
    async def post_decision(session_id: str, request: Request):
        try:
            record = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"body is not valid JSON: {exc}") from None
        if not isinstance(record, dict):
            raise ValidationError("decision must be a JSON object")
        session = registry.get(session_id)
        with registry.lock(session_id):
            decision, delta = apply_decision(session, record)
            workspace.save_decisions(session)
            payload = {
                "decision": json.loads(decision.to_json()),
                "delta": {
                    "phase": delta["phase"],
                    "columns": [
                        _column_view(session.column_annotations[c]) for c in delta["columns"]
                    ],
                    "cells": [
                        _cell_view(session.cell_annotations[(r, c)])
                        for r, c in delta["cells"]
                        if (r, c) in session.cell_annotations
                    ],
                    "removed_cells": [
                        [r, c] for r, c in delta["cells"] if (r, c) not in session.cell_annotations
                    ],
                    "blockers": {
                        "flags": [list(f.key) for f in session.unresolved_flags()],
                        "unconfirmed": [list(u) for u in session.unconfirmed_values()],
                    },
                },
            }
        return _ok(payload)

    @app.get("/sessions/{session_id}/candidates")
    def get_candidates(session_id: str, row: int, col: int):
        session = registry.get(session_id)
        ca = session.cell_annotations.get((row, col))
        if ca is None:
            if not (0 <= row < session.table.n_rows and 0 <= col < session.table.n_columns):
                raise NotFoundError(f"cell ({row},{col}) does not exist")
            raise ValidationError(f"cell ({row},{col}) is not entity-annotatable (literal column)")
        return _ok(_cell_view(ca))

    @app.post("/sessions/{session_id}/finalize")
    def finalize_session(session_id: str):
        session = registry.get(session_id)
        with registry.lock(session_id):
            model = session.finalize()
            workspace.mark_finalized(session_id)
            report = classify_stage(
                ArtifactDescriptor("semantic_doc", model, metadata=model.metadata)
            )
            payload = {
                "phase": session.phase,
                "contributions": len(model.contributions),
                "stage_report": _report_view(report),
            }
        return _ok(payload)

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str, format: str, namespace: str = DEFAULT_NAMESPACE):
        session = registry.get(session_id)
        if session.phase != "finalized":
            raise PhaseError(f"session {session_id} is not finalized")
        model = session.finalize()
        if format == "ntriples":
            content = export_triples(model, session.store, namespace=namespace)
        elif format == "jsonld":
            content = export_semantic_doc(model, session.store, namespace=namespace)
        else:
            raise ValidationError(f"unknown export format {format!r}")
        return _ok({"format": format, "content": content.decode("utf-8")})

    @app.post("/sessions/{session_id}/integrate")
    def integrate_session(session_id: str):
        session = registry.get(session_id)
        if session.phase != "finalized":
            raise PhaseError(f"session {session_id} is not finalized")
        model = session.finalize()
        with store_lock:
            receipt = integrate(model, live_store)
            workspace.save_store(live_store)
        return _ok(
            {
                "entities_created": list(receipt.entities_created),
                "predicates_created": list(receipt.predicates_created),
                "statements_added": receipt.statements_added,
                "stage_report": _report_view(receipt.stage_report),
            }
        )

    @app.get("/store/search")
    def store_search(q: str, kind: str = "entity", limit: int = 10):
        with store_lock:
            candidates = live_store.lookup_candidates(q, kind, limit=limit)
        return _ok(
            {
                "candidates": [
                    {
                        "target": c.target,
                        "label": c.label,
                        "score": c.score,
                        "match_kind": c.match_kind,
                    }
                    for c in candidates
                ]
            }
        )

    return app


def _report_view(report) -> dict:
    return {
        "achieved_stage": report.achieved_stage,
        "criteria": [
            {
                "stage": c.stage,
                "criterion": c.criterion,
                "description": c.description,
                "passed": c.passed,
                "evidence": c.evidence,
            }
            for c in report.criteria
        ],
    }
