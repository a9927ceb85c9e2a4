"""Disk layout shared by the CLI and the HTTP service.

A session is persisted as (original CSV bytes + parse config + frozen store
snapshot + decision log); loading replays the log, which reuses the
engine's determinism instead of a second persistence format. The live store
lives at one snapshot path and is only written by `integrate`.
"""

from __future__ import annotations

import json
import uuid
from pathlib import Path

from semtable.errors import NotFoundError
from semtable.session import Session, load_log, open_session, replay, save_log
from semtable.store import KGStore
from semtable.tables import CsvConfig, parse_csv

DEFAULT_WORKDIR = ".semtable"


def _config_view(config: CsvConfig) -> dict:
    return {
        "delimiter": config.delimiter,
        "quote": config.quote,
        "header": config.header,
        "header_detect_threshold": config.header_detect_threshold,
        "line_ending": config.line_ending,
        "source_id": config.source_id,
        "metadata": dict(config.metadata),
    }


def _config_from_view(view: dict) -> CsvConfig:
    return CsvConfig(
        delimiter=view["delimiter"],
        quote=view["quote"],
        header=view["header"],
        header_detect_threshold=view["header_detect_threshold"],
        line_ending=view["line_ending"],
        source_id=view["source_id"],
        metadata=dict(view["metadata"]),
    )


class Workspace:
    def __init__(self, root: str | Path = DEFAULT_WORKDIR, store_path: str | Path | None = None):
        self.root = Path(root)
        self.sessions_root = self.root / "sessions"
        self.store_path = Path(store_path) if store_path else self.root / "store.snap"

    # -- store ----------------------------------------------------------------

    def load_store(self) -> KGStore:
        if self.store_path.exists():
            return KGStore.snapshot_load(self.store_path)
        return KGStore()

    def save_store(self, store: KGStore) -> None:
        self.store_path.parent.mkdir(parents=True, exist_ok=True)
        store.snapshot_save(self.store_path)

    # -- sessions ---------------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.sessions_root / session_id

    def create_session(self, csv_bytes: bytes, config: CsvConfig, store: KGStore) -> Session:
        """Parse, open, and persist a new session against a frozen copy of
        the given store."""
        table = parse_csv(csv_bytes, config)
        session_id = uuid.uuid4().hex[:10]
        session = open_session(table, store, session_id=session_id)
        sdir = self.session_dir(session_id)
        sdir.mkdir(parents=True, exist_ok=False)
        (sdir / "table.csv").write_bytes(csv_bytes)
        (sdir / "meta.json").write_text(
            json.dumps({"id": session_id, "csv": _config_view(config), "finalized": False}),
            encoding="utf-8",
        )
        store.snapshot_save(sdir / "store.snap")
        save_log(sdir / "decisions.jsonl", session.decision_log)
        return session

    def load_session(self, session_id: str) -> Session:
        sdir = self.session_dir(session_id)
        meta_path = sdir / "meta.json"
        if not meta_path.exists():
            raise NotFoundError(f"unknown session {session_id!r}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        config = _config_from_view(meta["csv"])
        table = parse_csv((sdir / "table.csv").read_bytes(), config)
        store = KGStore.snapshot_load(sdir / "store.snap")
        records = load_log(sdir / "decisions.jsonl")
        session = replay(table, store, records, session_id=session_id)
        if meta.get("finalized"):
            session.finalize()
        return session

    def save_decisions(self, session: Session) -> None:
        save_log(self.session_dir(session.id) / "decisions.jsonl", session.decision_log)

    def mark_finalized(self, session_id: str) -> None:
        meta_path = self.session_dir(session_id) / "meta.json"
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        meta["finalized"] = True
        meta_path.write_text(json.dumps(meta), encoding="utf-8")

    def list_sessions(self) -> list[str]:
        if not self.sessions_root.exists():
            return []
        return sorted(p.name for p in self.sessions_root.iterdir() if (p / "meta.json").exists())
