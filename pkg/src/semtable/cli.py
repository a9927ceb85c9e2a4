"""Command-line gateway: the full pipeline for scripts and headless use.

Subcommands: import, suggest, decide, stage, export, integrate, serve.
Plain line-oriented text by default; ``--json`` switches every subcommand
to machine-readable envelopes. Exit codes: 0 ok, 1 user error, 2 internal.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from semtable import __version__
from semtable.errors import PhaseError, SemtableError
from semtable.evolution import (
    ArtifactDescriptor,
    DEFAULT_NAMESPACE,
    classify_stage,
    export_semantic_doc,
    export_triples,
    integrate,
)
from semtable.session import Session, apply_decision, load_log
from semtable.store import SNAPSHOT_FORMAT
from semtable.tables import CsvConfig
from semtable.workspace import DEFAULT_WORKDIR, Workspace


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semtable",
        description="Hybrid semantic table annotation into an embedded knowledge graph.",
    )
    parser.add_argument("--version", action="version", version=f"semtable {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=DEFAULT_WORKDIR, help="state directory")
    common.add_argument("--store", default=None, help="store snapshot path")
    common.add_argument("--json", action="store_true", help="machine-readable envelope output")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", parents=[common], help="open a session from a CSV file")
    p.add_argument("csv", help="CSV file path")
    p.add_argument("--header", choices=("auto", "present", "absent"), default="auto")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--quote", default='"')
    p.add_argument("--source-id", default=None)
    p.add_argument("--meta-file", default=None, help="JSON file with table metadata")

    p = sub.add_parser("suggest", parents=[common], help="print pending suggestions")
    p.add_argument("session")

    p = sub.add_parser("decide", parents=[common], help="apply a batch of decisions")
    p.add_argument("session")
    p.add_argument("--apply", dest="log_file", default=None, help="decision-log file (JSONL)")
    p.add_argument("--finalize", action="store_true", help="finalize after applying")

    p = sub.add_parser("stage", parents=[common], help="classify an artifact's evolution stage")
    p.add_argument("artifact", help="artifact file path")
    p.add_argument("--meta-file", default=None, help="JSON file with artifact metadata")

    p = sub.add_parser("export", parents=[common], help="export a finalized session")
    p.add_argument("session")
    p.add_argument("--format", choices=("jsonld", "ntriples"), required=True)
    p.add_argument("--namespace", default=DEFAULT_NAMESPACE)

    p = sub.add_parser("integrate", parents=[common], help="commit a finalized session to the store")
    p.add_argument("session")
    p.add_argument("--namespace", default=DEFAULT_NAMESPACE)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)

    return parser


def _workspace(args) -> Workspace:
    return Workspace(args.workdir, store_path=args.store)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps({"status": "ok", "payload": payload}, ensure_ascii=False))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _read_metadata(meta_file: str | None) -> dict:
    if not meta_file:
        return {}
    data = json.loads(Path(meta_file).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise SemtableError("metadata file must contain a JSON object")
    return {str(k): str(v) for k, v in data.items()}


def _columns_text(session: Session) -> str:
    lines = ["col  label                 type      predicate                       flags"]
    view = session.snapshot_state()
    for col in view["columns"]:
        label = session.labels[col["column"]]
        if col["chosen_predicate"]:
            pred = f"{col['chosen_predicate']} (chosen)"
        elif session.pending_predicates.get(col["column"]):
            pred = f'new: "{session.pending_predicates[col["column"]]}"'
        elif col["candidates"]:
            best = col["candidates"][0]
            pred = f"? {len(col['candidates'])} candidate(s), top {best['label']!r} {best['score']:.2f}"
        elif col["create_proposal"]:
            pred = f'? create "{col["create_proposal"]}"'
        else:
            pred = "?"
        open_flags = sum(1 for f in col["flags"] if f["resolution"] == "unresolved")
        lines.append(
            f"{col['column']:<4} {label:<21} {col['effective_type']:<9} {pred:<31} {open_flags}"
        )
    return "\n".join(lines)


def cmd_import(args) -> int:
    ws = _workspace(args)
    csv_path = Path(args.csv)
    if not csv_path.exists():
        raise SemtableError(f"no such file: {csv_path}")
    metadata = _read_metadata(args.meta_file)
    sidecar = csv_path.parent / (csv_path.name + ".meta.json")
    if not metadata and sidecar.exists():
        metadata = _read_metadata(str(sidecar))
    config = CsvConfig(
        delimiter=args.delimiter,
        quote=args.quote,
        header=args.header,
        source_id=args.source_id or csv_path.stem,
        metadata=metadata,
    )
    store = ws.load_store()
    session = ws.create_session(csv_path.read_bytes(), config, store)
    text = (
        f"session: {session.id}\n"
        f"phase: {session.phase}\n"
        f"{_columns_text(session)}\n"
    )
    _emit(args, session.to_view(), text)
    return 0


def cmd_suggest(args) -> int:
    ws = _workspace(args)
    session = ws.load_session(args.session)
    lines = [f"session: {session.id}", f"phase: {session.phase}", _columns_text(session)]
    flags = session.unresolved_flags()
    if flags:
        lines.append("open flags:")
        for f in flags:
            lines.append(
                f"  row {f.row} col {f.column}: found {f.found_type.value}, "
                f"expected {f.expected_type.value}"
            )
    unconfirmed = session.unconfirmed_values()
    if unconfirmed:
        lines.append("unconfirmed values:")
        for row, col, idx in unconfirmed:
            va = session.cell_annotations[(row, col)].values[idx]
            tops = ", ".join(
                f"{c.label!r} {c.score:.2f}" for c in va.candidates[:3]
            ) or "no candidates"
            lines.append(f"  ({row},{col})[{idx}] {va.text!r}: {tops}")
    _emit(args, session.to_view(), "\n".join(lines) + "\n")
    return 0


def cmd_decide(args) -> int:
    ws = _workspace(args)
    session = ws.load_session(args.session)
    applied = 0
    if args.log_file:
        records = load_log(args.log_file)
        for record in records:
            apply_decision(session, record)
            applied += 1
    finalized = False
    if args.finalize:
        session.finalize()
        finalized = True
    ws.save_decisions(session)
    if finalized:
        ws.mark_finalized(session.id)
    blockers = {
        "flags": len(session.unresolved_flags()) if not finalized else 0,
        "unconfirmed": len(session.unconfirmed_values()) if not finalized else 0,
    }
    text = (
        f"applied: {applied} decision(s)\n"
        f"phase: {session.phase}\n"
        f"open flags: {blockers['flags']}, unconfirmed values: {blockers['unconfirmed']}\n"
    )
    _emit(
        args,
        {"applied": applied, "phase": session.phase, "blockers": blockers},
        text,
    )
    return 0


def _sniff_snapshot(path: Path) -> bool:
    try:
        with open(path, encoding="utf-8") as fh:
            head = json.loads(fh.readline())
        return isinstance(head, dict) and head.get("format") == SNAPSHOT_FORMAT
    except (OSError, json.JSONDecodeError, UnicodeDecodeError):
        return False


def describe_artifact(path: Path, metadata: dict | None = None) -> ArtifactDescriptor:
    """Build a stage-classifiable descriptor from a file path.

    Kind follows the file format; metadata comes from the given dict, a
    ``<name>.meta.json`` sidecar, or (for semantic documents) the document
    itself.
    """
    from semtable.errors import ClassifyError
    from semtable.store import KGStore

    if not path.exists():
        raise ClassifyError(f"no such artifact: {path}")
    meta = dict(metadata or {})
    sidecar = path.parent / (path.name + ".meta.json")
    if not meta and sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    suffix = path.suffix.lower()
    if _sniff_snapshot(path):
        return ArtifactDescriptor("kg_integrated", KGStore.snapshot_load(path), meta)
    if suffix == ".pdf":
        return ArtifactDescriptor("pdf_ref", str(path), meta)
    if suffix in (".xlsx", ".xls"):
        return ArtifactDescriptor("tabular_proprietary", str(path), meta)
    if suffix == ".csv":
        return ArtifactDescriptor("tabular_open", str(path), meta)
    if suffix in (".json", ".jsonld"):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ClassifyError(f"unreadable semantic document: {exc}") from None
        if not isinstance(doc, dict):
            raise ClassifyError("semantic document must be a JSON object")
        doc_meta = doc.get("metadata")
        if isinstance(doc_meta, dict):
            merged = dict(doc_meta)
            merged.update(meta)
            meta = merged
        return ArtifactDescriptor("semantic_doc", doc, meta)
    raise ClassifyError(f"cannot classify artifact of type {suffix!r}")


def _report_text(report) -> str:
    lines = [f"stage: {report.achieved_stage}"]
    for c in report.criteria:
        status = "pass" if c.passed else "fail"
        lines.append(f"  S{c.stage} {c.criterion}: {status} - {c.evidence}")
    return "\n".join(lines)


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


def cmd_stage(args) -> int:
    metadata = _read_metadata(args.meta_file)
    descriptor = describe_artifact(Path(args.artifact), metadata)
    report = classify_stage(descriptor)
    _emit(args, _report_view(report), _report_text(report) + "\n")
    return 0


def _finalized_session(ws: Workspace, session_id: str) -> Session:
    session = ws.load_session(session_id)
    if session.phase != "finalized":
        raise PhaseError(
            f"session {session_id} is not finalized; run `semtable decide {session_id} --finalize`"
        )
    return session


def cmd_export(args) -> int:
    ws = _workspace(args)
    session = _finalized_session(ws, args.session)
    model = session.finalize()
    if args.format == "ntriples":
        data = export_triples(model, session.store, namespace=args.namespace)
    else:
        data = export_semantic_doc(model, session.store, namespace=args.namespace)
    if args.json:
        print(
            json.dumps(
                {"status": "ok", "payload": {"format": args.format, "content": data.decode("utf-8")}},
                ensure_ascii=False,
            )
        )
    else:
        sys.stdout.write(data.decode("utf-8"))
    return 0


def cmd_integrate(args) -> int:
    ws = _workspace(args)
    session = _finalized_session(ws, args.session)
    model = session.finalize()
    store = ws.load_store()
    receipt = integrate(model, store)
    ws.save_store(store)
    payload = {
        "entities_created": list(receipt.entities_created),
        "predicates_created": list(receipt.predicates_created),
        "statements_added": receipt.statements_added,
        "stage_report": _report_view(receipt.stage_report),
    }
    text = (
        f"entities created: {len(receipt.entities_created)}\n"
        f"predicates created: {len(receipt.predicates_created)}\n"
        f"statements added: {receipt.statements_added}\n"
        f"{_report_text(receipt.stage_report)}\n"
    )
    _emit(args, payload, text)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from semtable.service import create_app

    app = create_app(_workspace(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "import": cmd_import,
    "suggest": cmd_suggest,
    "decide": cmd_decide,
    "stage": cmd_stage,
    "export": cmd_export,
    "integrate": cmd_integrate,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except SemtableError as exc:
        if getattr(args, "json", False):
            print(
                json.dumps(
                    {
                        "status": "error",
                        "error": {"code": exc.code, "message": str(exc), "details": exc.details()},
                    },
                    ensure_ascii=False,
                )
            )
        else:
            print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
