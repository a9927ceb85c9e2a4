"""The hybrid protocol: machine proposes, human decides, everything logged.

A session's annotation state is a deterministic fold of (table, store
snapshot, decision log): opening a session computes and logs the machine's
CTA choices, every human decision is appended with a dense sequence number,
and dependent machine suggestions (flags, cell candidates) are recomputed
immediately after each decision. `replay` rebuilds a session from its log
and fails on the first record that does not fit.
"""

from __future__ import annotations

import json
import time
import uuid

from dataclasses import dataclass

from semtable.annotate import (
    CEA_TYPES,
    Alignment,
    CellAnnotation,
    ColumnAnnotation,
    InconsistencyFlag,
    annotate_table_cta,
    effective_property_labels,
    flag_cells,
    infer_column_type,
    realign,
    suggest_cell_entities,
)
from semtable.celltypes import CellType, infer_cell_type, lexeme_matches
from semtable.errors import (
    FinalizeBlockedError,
    IntegrityError,
    PhaseError,
    ReplayError,
    SpecError,
    ValidationError,
)
from semtable.store import KGStore
from semtable.structure import (
    Contribution,
    GroupSpec,
    HierarchySpec,
    LeafValue,
    SchemaNode,
    StructuredModel,
    apply_grouping,
    apply_hierarchy,
    flat_model,
    validate_hierarchy,
)
from semtable.tables import Cell, Table, split_cell

PHASES = ("imported", "cta", "cea", "structuring", "finalized")
_PHASE_RANK = {p: i for i, p in enumerate(PHASES)}

KIND_MIN_PHASE = {
    "accept_predicate": "cta",
    "set_predicate": "cta",
    "set_column_type": "cta",
    "resolve_flag": "cta",
    "accept_alignment": "cea",
    "set_alignment": "cea",
    "create_entity_and_align": "cea",
    "split_cell": "cea",
    "define_hierarchy": "structuring",
    "define_group": "structuring",
}

RESOLUTIONS = ("coerced", "type_changed", "value_edited")


@dataclass(frozen=True)
class Decision:
    seq: int
    actor: str  # human | machine
    kind: str
    payload: dict
    ts: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "actor": self.actor,
                "kind": self.kind,
                "payload": self.payload,
                "ts": self.ts,
            },
            ensure_ascii=False,
        )


def decision_from_json(line: str) -> dict:
    rec = json.loads(line)
    if not isinstance(rec, dict) or "kind" not in rec:
        raise ValidationError("decision record must be an object with a 'kind'")
    return rec


class Session:
    """One table under annotation against one frozen store snapshot."""

    def __init__(self, session_id: str, table: Table, store: KGStore, clock=time.time):
        self.id = session_id
        self.table = table
        self.store = store
        self.clock = clock
        self.phase = "imported"
        self.labels = effective_property_labels(table)
        self.column_annotations: list[ColumnAnnotation] = []
        self.cell_annotations: dict[tuple[int, int], CellAnnotation] = {}
        self.human_types: dict[int, CellType] = {}
        self.chosen_predicates: dict[int, str] = {}
        self.pending_predicates: dict[int, str] = {}
        self.cell_overrides: dict[tuple[int, int], Cell] = {}
        self.resolved_flags: dict[tuple, str] = {}
        self.hierarchy_specs: list[HierarchySpec] = []
        self.group_specs: list[GroupSpec] = []
        self.decision_log: list[Decision] = []
        self._human_alignments: dict[tuple[int, int, int], tuple[str, Alignment]] = {}
        self._final_model: StructuredModel | None = None

    # -- derived state -------------------------------------------------------

    def effective_cell(self, row: int, column: int) -> Cell:
        return self.cell_overrides.get((row, column), self.table.cell(row, column))

    def effective_type(self, column: int) -> CellType:
        return self.column_annotations[column].effective_type

    def annotation(self, column: int) -> ColumnAnnotation:
        if not 0 <= column < self.table.n_columns:
            raise IntegrityError(f"column {column} out of range")
        return self.column_annotations[column]

    def unresolved_flags(self) -> list[InconsistencyFlag]:
        return [
            f
            for ann in self.column_annotations
            for f in ann.flags
            if f.resolution == "unresolved"
        ]

    def unconfirmed_values(self) -> list[tuple[int, int, int]]:
        """String-typed cell values that are neither aligned nor confirmed."""
        out = []
        for (row, col), ca in sorted(self.cell_annotations.items()):
            if self.column_annotations[col].effective_type is not CellType.STRING:
                continue
            for i, va in enumerate(ca.values):
                if va.text.strip() and va.alignment is None:
                    out.append((row, col, i))
        return out

    # -- machine recomputation -------------------------------------------------

    def _recompute_column(self, column: int) -> dict:
        ann = self.column_annotations[column]
        texts = [self.effective_cell(r, column).raw_text for r in range(self.table.n_rows)]
        if texts:
            inferred, histogram, _ = infer_column_type(texts)
        else:
            inferred, histogram = CellType.STRING, {}
        effective = self.human_types.get(column, inferred)
        types = [infer_cell_type(t) for t in texts]
        flags = [
            InconsistencyFlag(
                row=i,
                column=column,
                found_type=t,
                expected_type=effective,
                resolution=self.resolved_flags.get(
                    (i, column, t.value, effective.value), "unresolved"
                ),
            )
            for i, t in flag_cells(types, effective)
        ]
        ann.inferred_type = inferred
        ann.effective_type = effective
        ann.vote_histogram = histogram
        ann.flags = flags

        changed_cells = []
        if effective in CEA_TYPES:
            for row in range(self.table.n_rows):
                self._recompute_cell(row, column)
                changed_cells.append([row, column])
        else:
            for row in range(self.table.n_rows):
                if self.cell_annotations.pop((row, column), None) is not None:
                    changed_cells.append([row, column])
        return {"columns": [column], "cells": changed_cells}

    def _recompute_cell(self, row: int, column: int) -> None:
        ann = self.column_annotations[column]
        ca = suggest_cell_entities(self.effective_cell(row, column), ann, self.store, row=row)
        values = []
        for i, va in enumerate(ca.values):
            override = self._human_alignments.get((row, column, i))
            if override is not None and override[0] == va.text:
                va = realign(va, override[1], "human")
            values.append(va)
        self.cell_annotations[(row, column)] = CellAnnotation(row, column, tuple(values))

    # -- decision application ---------------------------------------------------

    def apply(self, kind: str, payload: dict, actor: str = "human", ts: float | None = None):
        """Validate and apply one decision; returns (decision, recompute delta).

        A failed decision leaves the session unchanged (validation happens
        before any state mutation).
        """
        if self.phase == "finalized":
            raise PhaseError("session is finalized; no further decisions accepted")
        if kind not in KIND_MIN_PHASE:
            raise ValidationError(f"unknown decision kind {kind!r}")
        if actor not in ("human", "machine"):
            raise ValidationError(f"unknown actor {actor!r}")
        handler = getattr(self, "_do_" + kind)
        delta = handler(dict(payload))
        min_phase = KIND_MIN_PHASE[kind]
        if _PHASE_RANK[min_phase] > _PHASE_RANK[self.phase]:
            self.phase = min_phase
        decision = self._log(actor, kind, payload, ts)
        delta["phase"] = self.phase
        return decision, delta

    def _log(self, actor: str, kind: str, payload: dict, ts: float | None = None) -> Decision:
        decision = Decision(
            seq=len(self.decision_log) + 1,
            actor=actor,
            kind=kind,
            payload=json.loads(json.dumps(payload)),  # force JSON-plain payloads
            ts=self.clock() if ts is None else ts,
        )
        self.decision_log.append(decision)
        return decision

    # -- payload validation helpers -------------------------------------------

    def _col(self, payload: dict) -> int:
        col = payload.get("column")
        if not isinstance(col, int) or not 0 <= col < self.table.n_columns:
            raise IntegrityError(f"column {col!r} out of range")
        return col

    def _row(self, payload: dict) -> int:
        row = payload.get("row")
        if not isinstance(row, int) or not 0 <= row < self.table.n_rows:
            raise IntegrityError(f"row {row!r} out of range")
        return row

    def _celltype(self, raw, *, allow_empty: bool = False) -> CellType:
        try:
            t = CellType(raw)
        except ValueError:
            raise ValidationError(f"unknown cell type {raw!r}") from None
        if t is CellType.EMPTY and not allow_empty:
            raise ValidationError("a column cannot be typed 'empty'")
        return t

    def _value_annotation(self, payload: dict):
        row, col = self._row(payload), self._col(payload)
        ca = self.cell_annotations.get((row, col))
        if ca is None:
            raise IntegrityError(
                f"cell ({row},{col}) has no entity annotation (column is not string/url)"
            )
        idx = payload.get("value_index", 0)
        if not isinstance(idx, int) or not 0 <= idx < len(ca.values):
            raise IntegrityError(f"value index {idx!r} out of range for cell ({row},{col})")
        return row, col, idx, ca.values[idx]

    # -- handlers ---------------------------------------------------------------

    def _do_set_column_type(self, payload: dict) -> dict:
        col = self._col(payload)
        self.human_types[col] = self._celltype(payload.get("type"))
        return self._recompute_column(col)

    def _do_accept_predicate(self, payload: dict) -> dict:
        col = self._col(payload)
        ann = self.column_annotations[col]
        pid = payload.get("predicate")
        if pid not in {c.target for c in ann.predicate_candidates}:
            raise IntegrityError(f"predicate {pid!r} is not among column {col} candidates")
        self.chosen_predicates[col] = pid
        self.pending_predicates.pop(col, None)
        ann.chosen_predicate = pid
        return {"columns": [col], "cells": []}

    def _do_set_predicate(self, payload: dict) -> dict:
        col = self._col(payload)
        ann = self.column_annotations[col]
        pid = payload.get("predicate")
        label = payload.get("label")
        if pid is not None:
            if pid not in self.store.predicates:
                raise IntegrityError(f"unknown predicate {pid!r}")
            self.chosen_predicates[col] = pid
            self.pending_predicates.pop(col, None)
            ann.chosen_predicate = pid
        elif label is not None and str(label).strip():
            self.pending_predicates[col] = str(label).strip()
            self.chosen_predicates.pop(col, None)
            ann.chosen_predicate = None
        else:
            raise ValidationError("set_predicate needs a 'predicate' id or a new 'label'")
        return {"columns": [col], "cells": []}

    def _do_resolve_flag(self, payload: dict) -> dict:
        row, col = self._row(payload), self._col(payload)
        ann = self.column_annotations[col]
        flag = next(
            (f for f in ann.flags if f.row == row and f.resolution == "unresolved"), None
        )
        if flag is None:
            raise IntegrityError(f"no unresolved flag at ({row},{col})")
        resolution = payload.get("resolution")
        if resolution not in RESOLUTIONS:
            raise ValidationError(f"unknown flag resolution {resolution!r}")
        if resolution == "coerced":
            self.human_types[col] = flag.found_type
        elif resolution == "type_changed":
            self.human_types[col] = self._celltype(payload.get("type"))
        else:  # value_edited
            value = payload.get("value")
            if not isinstance(value, str):
                raise ValidationError("value_edited resolution needs a 'value' string")
            self.cell_overrides[(row, col)] = Cell.from_raw(value)
            self._drop_cell_alignments(row, col)
        self.resolved_flags[flag.key] = resolution
        return self._recompute_column(col)

    def _do_accept_alignment(self, payload: dict) -> dict:
        row, col, idx, va = self._value_annotation(payload)
        if not va.candidates:
            raise IntegrityError(f"value ({row},{col})[{idx}] has no candidates to accept")
        self._human_alignments[(row, col, idx)] = (
            va.text,
            Alignment.entity(va.candidates[0].target),
        )
        self._recompute_cell(row, col)
        return {"columns": [], "cells": [[row, col]]}

    def _do_set_alignment(self, payload: dict) -> dict:
        row, col, idx, va = self._value_annotation(payload)
        entity = payload.get("entity")
        if entity is not None:
            if entity not in {c.target for c in va.candidates}:
                raise IntegrityError(
                    f"entity {entity!r} is not a candidate for value ({row},{col})[{idx}]"
                )
            alignment = Alignment.entity(entity)
        elif payload.get("literal"):
            if not va.text.strip():
                raise IntegrityError("cannot confirm a blank value as literal")
            etype = self.column_annotations[col].effective_type
            datatype = etype if lexeme_matches(va.text, etype) else CellType.STRING
            alignment = Alignment.literal(va.text, datatype)
        else:
            raise ValidationError("set_alignment needs an 'entity' id or 'literal': true")
        self._human_alignments[(row, col, idx)] = (va.text, alignment)
        self._recompute_cell(row, col)
        return {"columns": [], "cells": [[row, col]]}

    def _do_create_entity_and_align(self, payload: dict) -> dict:
        row, col, idx, va = self._value_annotation(payload)
        label = str(payload.get("label") or va.text).strip()
        if not label:
            raise ValidationError("new entity label must be non-empty")
        class_label = payload.get("class")
        alignment = Alignment.new_entity(label, str(class_label) if class_label else None)
        self._human_alignments[(row, col, idx)] = (va.text, alignment)
        self._recompute_cell(row, col)
        return {"columns": [], "cells": [[row, col]]}

    def _do_split_cell(self, payload: dict) -> dict:
        row, col = self._row(payload), self._col(payload)
        if self.column_annotations[col].effective_type not in CEA_TYPES:
            raise IntegrityError(f"column {col} is not string/url typed; cannot split")
        delimiters = payload.get("delimiters")
        current = self.effective_cell(row, col)
        if delimiters is not None:
            if (
                not isinstance(delimiters, list)
                or not delimiters
                or not all(isinstance(d, str) and d for d in delimiters)
            ):
                raise ValidationError("delimiters must be a non-empty list of strings")
            new = split_cell(current, tuple(delimiters))
        else:
            new = split_cell(current)
        if new is not current:
            self.cell_overrides[(row, col)] = new
            self._drop_cell_alignments(row, col)
        self._recompute_cell(row, col)
        return {"columns": [], "cells": [[row, col]]}

    def _do_define_hierarchy(self, payload: dict) -> dict:
        edges = payload.get("edges")
        if not isinstance(edges, list) or not edges:
            raise ValidationError("define_hierarchy needs a non-empty 'edges' list")
        try:
            spec = HierarchySpec(tuple((str(p), str(c)) for p, c in edges))
        except (TypeError, ValueError):
            raise ValidationError("edges must be [parent, child] pairs") from None
        violations = validate_hierarchy(spec, self.labels)
        if violations:
            raise IntegrityError("invalid hierarchy spec", violations)
        self._dry_run_specs(extra_hierarchy=spec)
        self.hierarchy_specs.append(spec)
        return {"columns": [], "cells": []}

    def _do_define_group(self, payload: dict) -> dict:
        label = payload.get("label")
        members = payload.get("members")
        if not isinstance(label, str) or not isinstance(members, list):
            raise ValidationError("define_group needs 'label' and 'members'")
        spec = GroupSpec(label.strip(), tuple(str(m) for m in members))
        taken = {m for g in self.group_specs for m in g.members}
        overlap = taken.intersection(spec.members)
        if overlap:
            raise IntegrityError(f"members already grouped: {sorted(overlap)}")
        if any(g.group_label == spec.group_label for g in self.group_specs):
            raise IntegrityError(f"group label {spec.group_label!r} already used")
        self._dry_run_specs(extra_group=spec)
        self.group_specs.append(spec)
        return {"columns": [], "cells": []}

    def _drop_cell_alignments(self, row: int, col: int) -> None:
        for key in [k for k in self._human_alignments if k[0] == row and k[1] == col]:
            del self._human_alignments[key]

    def _dry_run_specs(self, extra_hierarchy=None, extra_group=None) -> None:
        """Apply all specs (plus a candidate) to the current model; a SpecError
        surfaces as IntegrityError before the spec is accepted."""
        model = self._build_model()
        hierarchies = self.hierarchy_specs + ([extra_hierarchy] if extra_hierarchy else [])
        groups = self.group_specs + ([extra_group] if extra_group else [])
        try:
            for spec in hierarchies:
                model = apply_hierarchy(spec, model)
            for gspec in groups:
                model = apply_grouping(gspec, model, self.store)
        except SpecError as exc:
            raise IntegrityError(str(exc), exc.violations) from None

    # -- finalization -----------------------------------------------------------

    def _contribution_label(self, row: int) -> str:
        base = self.table.metadata.get("title") or self.table.source_id or "table"
        return f"{base} - contribution {row + 1}"

    def _leaf_values(self, row: int, col: int) -> list[LeafValue]:
        etype = self.column_annotations[col].effective_type
        leaves = []
        if etype in CEA_TYPES:
            ca = self.cell_annotations[(row, col)]
            for va in ca.values:
                text = va.text.strip()
                if not text:
                    continue
                if va.alignment is not None:
                    leaves.append(LeafValue(text=text, target=va.alignment))
                else:
                    datatype = etype if lexeme_matches(text, etype) else CellType.STRING
                    leaves.append(LeafValue(text=text, target=Alignment.literal(text, datatype)))
        else:
            for text in self.effective_cell(row, col).values:
                text = text.strip()
                if not text:
                    continue
                datatype = etype if lexeme_matches(text, etype) else CellType.STRING
                leaves.append(LeafValue(text=text, target=Alignment.literal(text, datatype)))
        return leaves

    def _build_model(self) -> StructuredModel:
        columns = []
        for col in range(self.table.n_columns):
            ann = self.column_annotations[col]
            columns.append(
                SchemaNode(
                    label=self.labels[col],
                    kind="property",
                    column=col,
                    predicate_id=self.chosen_predicates.get(col),
                    pending_predicate=self.pending_predicates.get(col),
                    datatype=ann.effective_type,
                )
            )
        contributions = []
        for row in range(self.table.n_rows):
            values = {}
            for col in range(self.table.n_columns):
                leaves = self._leaf_values(row, col)
                if leaves:
                    values[self.labels[col]] = tuple(leaves)
            contributions.append(
                Contribution(row=row, label=self._contribution_label(row), values=values)
            )
        return flat_model(self.table.source_id, self.table.metadata, columns, contributions)

    def finalize(self) -> StructuredModel:
        """Emit the structured annotated model; blocked while flags are open
        or string values are neither aligned nor confirmed."""
        if self.phase == "finalized":
            return self._final_model
        open_flags = self.unresolved_flags()
        unconfirmed = self.unconfirmed_values()
        if open_flags or unconfirmed:
            raise FinalizeBlockedError(
                "finalization blocked: "
                f"{len(open_flags)} unresolved flag(s), "
                f"{len(unconfirmed)} unconfirmed value(s)",
                flags=[f.key for f in open_flags],
                unconfirmed=unconfirmed,
            )
        model = self._build_model()
        for spec in self.hierarchy_specs:
            model = apply_hierarchy(spec, model)
        for gspec in self.group_specs:
            model = apply_grouping(gspec, model, self.store)
        self._final_model = model
        self.phase = "finalized"
        return model

    # -- views -------------------------------------------------------------------

    def snapshot_state(self) -> dict:
        """Canonical state view; two equal sessions produce equal dicts."""
        return {
            "id": self.id,
            "phase": self.phase,
            "labels": list(self.labels),
            "columns": [_column_view(a) for a in self.column_annotations],
            "pending_predicates": {str(k): v for k, v in sorted(self.pending_predicates.items())},
            "cells": [
                _cell_view(ca) for _, ca in sorted(self.cell_annotations.items())
            ],
            "overrides": {
                f"{r},{c}": {"raw": cell.raw_text, "values": list(cell.values)}
                for (r, c), cell in sorted(self.cell_overrides.items())
            },
            "hierarchies": [list(map(list, s.edges)) for s in self.hierarchy_specs],
            "groups": [
                {"label": g.group_label, "members": list(g.members)} for g in self.group_specs
            ],
            "log": [
                {
                    "seq": d.seq,
                    "actor": d.actor,
                    "kind": d.kind,
                    "payload": d.payload,
                    "ts": d.ts,
                }
                for d in self.decision_log
            ],
        }

    def to_view(self) -> dict:
        """Full session resource, as served by the gateway."""
        view = self.snapshot_state()
        view.update(
            {
                "source_id": self.table.source_id,
                "metadata": dict(self.table.metadata),
                "header": [
                    {"index": h.index, "raw_label": h.raw_label, "label": self.labels[h.index]}
                    for h in self.table.header
                ],
                "n_rows": self.table.n_rows,
                "rows": [
                    [
                        {
                            "raw": self.effective_cell(r, c).raw_text,
                            "values": list(self.effective_cell(r, c).values),
                        }
                        for c in range(self.table.n_columns)
                    ]
                    for r in range(self.table.n_rows)
                ],
                "warnings": [
                    {"line": w.line, "message": w.message} for w in self.table.warnings
                ],
                "blockers": {
                    "flags": [list(f.key) for f in self.unresolved_flags()],
                    "unconfirmed": [list(u) for u in self.unconfirmed_values()],
                },
            }
        )
        return view


def _column_view(ann: ColumnAnnotation) -> dict:
    return {
        "column": ann.column,
        "inferred_type": ann.inferred_type.value,
        "effective_type": ann.effective_type.value,
        "votes": {t.value: n for t, n in sorted(ann.vote_histogram.items(), key=lambda kv: kv[0].value)},
        "candidates": [
            {"target": c.target, "label": c.label, "score": c.score, "match_kind": c.match_kind}
            for c in ann.predicate_candidates
        ],
        "chosen_predicate": ann.chosen_predicate,
        "create_proposal": ann.create_proposal,
        "flags": [
            {
                "row": f.row,
                "column": f.column,
                "found": f.found_type.value,
                "expected": f.expected_type.value,
                "resolution": f.resolution,
            }
            for f in ann.flags
        ],
    }


def _cell_view(ca: CellAnnotation) -> dict:
    def alignment_view(a: Alignment | None):
        if a is None:
            return None
        if a.kind == "entity":
            return {"kind": "entity", "entity": a.entity_id}
        if a.kind == "new_entity":
            return {"kind": "new_entity", "label": a.label, "class": a.class_label}
        return {"kind": "literal", "lexical": a.lexical, "datatype": a.datatype.value}

    return {
        "row": ca.row,
        "column": ca.column,
        "values": [
            {
                "text": va.text,
                "candidates": [
                    {
                        "target": c.target,
                        "label": c.label,
                        "score": c.score,
                        "match_kind": c.match_kind,
                    }
                    for c in va.candidates
                ],
                "alignment": alignment_view(va.alignment),
                "origin": va.alignment_origin,
            }
            for va in ca.values
        ],
    }


def open_session(
    table: Table, store: KGStore, session_id: str | None = None, clock=time.time
) -> Session:
    """Import a table: machine CTA runs immediately and its auto-chosen
    types and predicates are logged as machine decisions."""
    session = Session(session_id or uuid.uuid4().hex[:10], table, store, clock)
    session.column_annotations = annotate_table_cta(table, store)
    for ann in session.column_annotations:
        if ann.effective_type in CEA_TYPES:
            for row in range(table.n_rows):
                session._recompute_cell(row, ann.column)
    for ann in session.column_annotations:
        session._log(
            "machine",
            "set_column_type",
            {"column": ann.column, "type": ann.inferred_type.value},
        )
        if ann.chosen_predicate is not None:
            session.chosen_predicates[ann.column] = ann.chosen_predicate
            session._log(
                "machine",
                "accept_predicate",
                {"column": ann.column, "predicate": ann.chosen_predicate},
            )
    session.phase = "cta"
    return session


def apply_decision(session: Session, record: dict):
    """Apply one external decision record to a session.

    The record needs 'kind' and 'payload'; 'seq' (validated against the next
    sequence number), 'actor' and 'ts' are optional. Machine records are
    rejected — machine decisions are engine-generated only.
    """
    kind = record.get("kind")
    payload = record.get("payload", {})
    actor = record.get("actor", "human")
    if actor == "machine":
        raise ValidationError("machine decisions cannot be applied externally")
    seq = record.get("seq")
    if seq is not None and seq != len(session.decision_log) + 1:
        raise ReplayError(
            f"expected seq {len(session.decision_log) + 1}, got {seq}",
            seq=seq if isinstance(seq, int) else len(session.decision_log) + 1,
        )
    if not isinstance(payload, dict):
        raise ValidationError("decision payload must be an object")
    return session.apply(kind, payload, actor=actor, ts=record.get("ts"))


def replay(
    table: Table, store: KGStore, records: list, session_id: str | None = None
) -> Session:
    """Rebuild a session from its full decision log.

    The log must be dense from seq 1; its machine prefix must match what the
    engine regenerates for (table, store); every later record must apply
    cleanly. Violations raise ReplayError at the offending seq.
    """
    for i, rec in enumerate(records):
        if rec.get("seq") != i + 1:
            raise ReplayError(f"log is not dense at position {i}", seq=rec.get("seq") or i + 1)
    session = open_session(table, store, session_id)
    generated = session.decision_log
    k = len(generated)
    for i in range(min(k, len(records))):
        rec = records[i]
        gen = generated[i]
        if rec.get("actor") != "machine" or rec.get("kind") != gen.kind or rec.get("payload") != gen.payload:
            raise ReplayError(
                f"machine prefix mismatch: expected {gen.kind} {gen.payload}", seq=i + 1
            )
        if "ts" in rec:
            generated[i] = Decision(gen.seq, gen.actor, gen.kind, gen.payload, rec["ts"])
    for rec in records[k:]:
        seq = rec.get("seq")
        if rec.get("actor") == "machine":
            raise ReplayError("unexpected machine decision after the CTA prefix", seq=seq)
        try:
            session.apply(rec["kind"], rec.get("payload", {}), actor="human", ts=rec.get("ts"))
        except ReplayError:
            raise
        except Exception as exc:
            raise ReplayError(str(exc), seq=seq) from exc
    return session


def save_log(path, decisions: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(d.to_json() + "\n")


def load_log(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(decision_from_json(line))
    return records
