"""Embedded knowledge-graph store: entities, predicates, statements.

Lookup is label-driven: an exact-normalized match scores 1.0, everything
else is ranked by trigram similarity. Mutations are serialized through one
lock (single-writer, multi-reader); snapshots are versioned JSONL, one
record per line in a documented field order, diff- and append-friendly.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

from semtable.celltypes import CellType, lexeme_matches
from semtable.errors import IntegrityError, SnapshotError, ValidationError
from semtable.similarity import TrigramIndex, normalize_label

SNAPSHOT_FORMAT = "semtable-store"
SNAPSHOT_VERSION = 1
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ClassRef:
    label: str

    @property
    def normalized(self) -> str:
        return normalize_label(self.label)


@dataclass(frozen=True)
class Entity:
    id: str
    label: str
    class_ref: ClassRef | None
    created_by: str  # machine | human


@dataclass(frozen=True)
class Predicate:
    id: str
    label: str
    description: str | None = None


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: CellType

    def __post_init__(self):
        if not lexeme_matches(self.lexical, self.datatype):
            raise ValidationError(
                f"{self.lexical!r} is not a valid {self.datatype.value} lexeme"
            )


@dataclass(frozen=True)
class Statement:
    id: str
    subject: str
    predicate: str
    object: str | Literal  # entity id or literal


@dataclass(frozen=True)
class Candidate:
    target: str
    label: str
    score: float
    match_kind: str  # exact | normalized | fuzzy


def _object_key(obj: str | Literal):
    if isinstance(obj, Literal):
        return ("literal", obj.lexical, obj.datatype.value)
    return ("entity", obj)


@dataclass
class _LabelIndex:
    """Aligned (ids, labels) with a trigram index over normalized labels."""

    index: TrigramIndex = field(default_factory=TrigramIndex)
    ids: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    by_normalized: dict[str, list[int]] = field(default_factory=dict)

    def add(self, item_id: str, label: str) -> None:
        norm = normalize_label(label)
        pos = self.index.add(norm)
        self.ids.append(item_id)
        self.labels.append(label)
        self.by_normalized.setdefault(norm, []).append(pos)


class KGStore:
    """The annotation target: label-indexed entities, predicates, statements."""

    def __init__(self):
        self._lock = threading.RLock()
        self.entities: dict[str, Entity] = {}
        self.predicates: dict[str, Predicate] = {}
        self.statements: dict[str, Statement] = {}
        self._entity_index = _LabelIndex()
        self._predicate_index = _LabelIndex()
        self._entity_dedup: dict[tuple, str] = {}
        self._statement_dedup: dict[tuple, str] = {}
        self._counters = {"E": 0, "P": 0, "S": 0}

    # -- id generation -----------------------------------------------------

    def _next_id(self, kind: str) -> str:
        self._counters[kind] += 1
        return f"{kind}{self._counters[kind]}"

    # -- mutations ----------------------------------------------------------

    def upsert_entity(
        self, label: str, class_ref: ClassRef | None = None, origin: str = "human"
    ) -> str:
        """Return the id of the entity with this normalized label and class,
        creating it if absent."""
        label = label.strip()
        if not label:
            raise ValidationError("entity label must be non-empty")
        if origin not in ("machine", "human"):
            raise ValidationError(f"unknown origin {origin!r}")
        key = (normalize_label(label), class_ref.normalized if class_ref else None)
        with self._lock:
            existing = self._entity_dedup.get(key)
            if existing is not None:
                return existing
            eid = self._next_id("E")
            self.entities[eid] = Entity(eid, label, class_ref, origin)
            self._entity_dedup[key] = eid
            self._entity_index.add(eid, label)
            return eid

    def upsert_predicate(self, label: str, description: str | None = None) -> str:
        label = label.strip()
        if not label:
            raise ValidationError("predicate label must be non-empty")
        norm = normalize_label(label)
        with self._lock:
            positions = self._predicate_index.by_normalized.get(norm, [])
            if positions:
                return self._predicate_index.ids[positions[0]]
            pid = self._next_id("P")
            self.predicates[pid] = Predicate(pid, label, description)
            self._predicate_index.add(pid, label)
            return pid

    def add_statement(self, subject: str, predicate: str, obj: str | Literal) -> str:
        """Store (s, p, o); duplicates return the existing statement id."""
        with self._lock:
            if subject not in self.entities:
                raise IntegrityError(f"unknown subject entity {subject!r}")
            if predicate not in self.predicates:
                raise IntegrityError(f"unknown predicate {predicate!r}")
            if isinstance(obj, str) and obj not in self.entities:
                raise IntegrityError(f"unknown object entity {obj!r}")
            key = (subject, predicate, _object_key(obj))
            existing = self._statement_dedup.get(key)
            if existing is not None:
                return existing
            sid = self._next_id("S")
            self.statements[sid] = Statement(sid, subject, predicate, obj)
            self._statement_dedup[key] = sid
            return sid

    # -- lookup ---------------------------------------------------------------

    def find_entity(self, label: str, class_ref: ClassRef | None = None) -> str | None:
        key = (normalize_label(label), class_ref.normalized if class_ref else None)
        return self._entity_dedup.get(key)

    def lookup_candidates(
        self,
        query: str,
        kind: str,
        limit: int = 5,
        class_ref: ClassRef | None = None,
        threshold: float = DEFAULT_THRESHOLD,
    ) -> list[Candidate]:
        """Ranked candidates for ``query``: every item with similarity >=
        threshold, sorted by (score desc, label asc, id asc), at most ``limit``.
        """
        if not query.strip():
            raise ValidationError("lookup query must be non-empty")
        if limit < 1:
            raise ValidationError("limit must be positive")
        if kind == "entity":
            lab_index = self._entity_index
        elif kind == "predicate":
            lab_index = self._predicate_index
        else:
            raise ValidationError(f"unknown candidate kind {kind!r}")

        norm_query = normalize_label(query)
        scores = lab_index.index.scores(norm_query)
        out = []
        for pos, score in enumerate(scores):
            if score < threshold:
                continue
            item_id = lab_index.ids[pos]
            if class_ref is not None and kind == "entity":
                ent = self.entities[item_id]
                if ent.class_ref is None or ent.class_ref.normalized != class_ref.normalized:
                    continue
            label = lab_index.labels[pos]
            if label == query:
                match_kind = "exact"
            elif score == 1.0:
                match_kind = "normalized"
            else:
                match_kind = "fuzzy"
            out.append(Candidate(item_id, label, score, match_kind))
        out.sort(key=lambda c: (-c.score, c.label, c.target))
        return out[:limit]

    # -- snapshots -----------------------------------------------------------

    def snapshot_save(self, path) -> None:
        with self._lock, open(path, "w", encoding="utf-8") as fh:
            fh.write(
                json.dumps({"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION}) + "\n"
            )
            for ent in self.entities.values():
                fh.write(
                    json.dumps(
                        {
                            "kind": "entity",
                            "id": ent.id,
                            "label": ent.label,
                            "class": ent.class_ref.label if ent.class_ref else None,
                            "origin": ent.created_by,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            for pred in self.predicates.values():
                fh.write(
                    json.dumps(
                        {
                            "kind": "predicate",
                            "id": pred.id,
                            "label": pred.label,
                            "description": pred.description,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            for st in self.statements.values():
                if isinstance(st.object, Literal):
                    obj = {"lexical": st.object.lexical, "datatype": st.object.datatype.value}
                else:
                    obj = {"entity": st.object}
                fh.write(
                    json.dumps(
                        {
                            "kind": "statement",
                            "id": st.id,
                            "s": st.subject,
                            "p": st.predicate,
                            "o": obj,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    @classmethod
    def snapshot_load(cls, path) -> "KGStore":
        store = cls()
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise SnapshotError(f"cannot read snapshot: {exc}") from None
        if not lines:
            raise SnapshotError("empty snapshot file")
        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError:
            raise SnapshotError("corrupt snapshot header") from None
        if not isinstance(head, dict) or head.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError("not a store snapshot")
        if head.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {head.get('version')!r}")
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["kind"]
                if kind == "entity":
                    cref = ClassRef(rec["class"]) if rec["class"] else None
                    ent = Entity(rec["id"], rec["label"], cref, rec["origin"])
                    store._register_entity(ent)
                elif kind == "predicate":
                    store._register_predicate(
                        Predicate(rec["id"], rec["label"], rec["description"])
                    )
                elif kind == "statement":
                    o = rec["o"]
                    if "entity" in o:
                        obj: str | Literal = o["entity"]
                    else:
                        obj = Literal(o["lexical"], CellType(o["datatype"]))
                    store._register_statement(Statement(rec["id"], rec["s"], rec["p"], obj))
                else:
                    raise SnapshotError(f"line {lineno}: unknown record kind {kind!r}")
            except SnapshotError:
                raise
            except (json.JSONDecodeError, KeyError, ValueError, ValidationError) as exc:
                raise SnapshotError(f"line {lineno}: corrupt record ({exc})") from None
        store._check_integrity()
        return store

    def _register_entity(self, ent: Entity) -> None:
        if ent.id in self.entities:
            raise SnapshotError(f"duplicate entity id {ent.id}")
        self.entities[ent.id] = ent
        key = (normalize_label(ent.label), ent.class_ref.normalized if ent.class_ref else None)
        self._entity_dedup.setdefault(key, ent.id)
        self._entity_index.add(ent.id, ent.label)
        self._bump_counter(ent.id)

    def _register_predicate(self, pred: Predicate) -> None:
        if pred.id in self.predicates:
            raise SnapshotError(f"duplicate predicate id {pred.id}")
        self.predicates[pred.id] = pred
        self._predicate_index.add(pred.id, pred.label)
        self._bump_counter(pred.id)

    def _register_statement(self, st: Statement) -> None:
        if st.id in self.statements:
            raise SnapshotError(f"duplicate statement id {st.id}")
        self.statements[st.id] = st
        self._statement_dedup.setdefault((st.subject, st.predicate, _object_key(st.object)), st.id)
        self._bump_counter(st.id)

    def _bump_counter(self, item_id: str) -> None:
        kind, digits = item_id[:1], item_id[1:]
        if kind in self._counters and digits.isdigit():
            self._counters[kind] = max(self._counters[kind], int(digits))

    def _check_integrity(self) -> None:
        """Referential integrity over the whole store; used after batch loads."""
        for st in self.statements.values():
            if st.subject not in self.entities:
                raise SnapshotError(f"statement {st.id} references missing subject {st.subject}")
            if st.predicate not in self.predicates:
                raise SnapshotError(f"statement {st.id} references missing predicate {st.predicate}")
            if isinstance(st.object, str) and st.object not in self.entities:
                raise SnapshotError(f"statement {st.id} references missing object {st.object}")

    # -- equality / inspection -------------------------------------------------

    def state_digest(self) -> dict:
        """Canonical, order-independent view for observational equality."""

        def obj_view(obj):
            if isinstance(obj, Literal):
                return {"lexical": obj.lexical, "datatype": obj.datatype.value}
            return {"entity": obj}

        return {
            "entities": sorted(
                (e.id, e.label, e.class_ref.label if e.class_ref else None, e.created_by)
                for e in self.entities.values()
            ),
            "predicates": sorted(
                (p.id, p.label, p.description) for p in self.predicates.values()
            ),
            "statements": sorted(
                (s.id, s.subject, s.predicate, json.dumps(obj_view(s.object), sort_keys=True))
                for s in self.statements.values()
            ),
        }
