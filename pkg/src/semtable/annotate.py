"""Machine side of column and cell annotation.

Column types come from majority voting over per-cell lexing; disagreeing
cells are flagged for the human. Predicate and entity suggestions come from
store lookups, and the machine commits only exact-normalized (score 1.0)
matches — every fuzzy match is left as a candidate for the human to decide.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from semtable.celltypes import CellType, infer_cell_type
from semtable.errors import ValidationError
from semtable.similarity import normalize_label
from semtable.store import Candidate, KGStore
from semtable.tables import Cell, ColumnHeader, Table, split_cell

# tie-break: more general type wins a drawn vote
GENERALITY_ORDER = (
    CellType.STRING,
    CellType.DECIMAL,
    CellType.DATE,
    CellType.URL,
    CellType.INTEGER,
    CellType.BOOLEAN,
)

CANDIDATE_LIMIT = 5


@dataclass(frozen=True)
class InconsistencyFlag:
    row: int
    column: int
    found_type: CellType
    expected_type: CellType
    resolution: str = "unresolved"  # unresolved | coerced | type_changed | value_edited

    @property
    def key(self) -> tuple:
        return (self.row, self.column, self.found_type.value, self.expected_type.value)


@dataclass(frozen=True)
class Alignment:
    """Resolved target of one cell value."""

    kind: str  # entity | new_entity | literal
    entity_id: str | None = None
    label: str | None = None          # new_entity label
    class_label: str | None = None    # new_entity class
    lexical: str | None = None        # literal lexical form
    datatype: CellType | None = None  # literal datatype

    @classmethod
    def entity(cls, entity_id: str) -> "Alignment":
        return cls(kind="entity", entity_id=entity_id)

    @classmethod
    def new_entity(cls, label: str, class_label: str | None = None) -> "Alignment":
        return cls(kind="new_entity", label=label, class_label=class_label)

    @classmethod
    def literal(cls, lexical: str, datatype: CellType) -> "Alignment":
        return cls(kind="literal", lexical=lexical, datatype=datatype)


@dataclass(frozen=True)
class ValueAnnotation:
    text: str
    candidates: tuple[Candidate, ...]
    alignment: Alignment | None = None
    alignment_origin: str | None = None  # machine | human


@dataclass(frozen=True)
class CellAnnotation:
    row: int
    column: int
    values: tuple[ValueAnnotation, ...]


@dataclass
class ColumnAnnotation:
    """Machine view of one column plus the human's standing overrides.

    ``inferred_type`` is always the majority-vote result; ``effective_type``
    equals it unless the human has set the column type explicitly. Flags are
    computed against the effective type.
    """

    column: int
    inferred_type: CellType
    effective_type: CellType
    vote_histogram: dict
    predicate_candidates: tuple[Candidate, ...]
    chosen_predicate: str | None = None
    create_proposal: str | None = None
    flags: list = field(default_factory=list)


def infer_column_type(cells: list[str]) -> tuple[CellType, dict, list[tuple[int, CellType]]]:
    """Majority-vote a column type from cell texts.

    Empty cells are excluded from the vote; an all-empty column defaults to
    string. Ties go to the more general type. Flags list every non-empty
    cell disagreeing with the winner, except integers inside a
    decimal-winning column.
    """
    if not cells:
        raise ValidationError("cannot infer a type from zero cells")
    types = [infer_cell_type(c) for c in cells]
    histogram: dict = {}
    for t in types:
        if t is not CellType.EMPTY:
            histogram[t] = histogram.get(t, 0) + 1
    winner = vote_winner(histogram)
    flags = flag_cells(types, winner)
    return winner, histogram, flags


def vote_winner(histogram: dict) -> CellType:
    if not histogram:
        return CellType.STRING
    best = max(histogram.values())
    for t in GENERALITY_ORDER:
        if histogram.get(t, 0) == best:
            return t
    raise AssertionError("histogram contains an unknown cell type")


def flag_cells(types: list[CellType], expected: CellType) -> list[tuple[int, CellType]]:
    """Indices (and found types) of cells inconsistent with ``expected``."""
    out = []
    for i, t in enumerate(types):
        if t is CellType.EMPTY or t is expected:
            continue
        if t is CellType.INTEGER and expected is CellType.DECIMAL:
            continue  # integers embed in decimals
        out.append((i, t))
    return out


def effective_property_labels(table: Table) -> list[str]:
    """Normalized column labels made non-empty and unique.

    Empty labels fall back to ``column_<i+1>``; later duplicates get an
    index suffix. These labels are the property references used by
    structuring specs and exports.
    """
    labels = []
    seen = set()
    for h in table.header:
        label = h.normalized_label or f"column_{h.index + 1}"
        if label in seen:
            label = f"{label} ({h.index + 1})"
        seen.add(label)
        labels.append(label)
    return labels


def suggest_predicates(
    header: ColumnHeader, store: KGStore, query: str | None = None
) -> tuple[tuple[Candidate, ...], str | None]:
    """Candidates for a column's predicate, or a create-new proposal.

    Returns (ranked candidates, proposal); the proposal carries the
    normalized label and is set only when no candidate clears the threshold.
    """
    label = query if query is not None else header.normalized_label
    if not label:
        raise ValidationError("header label must be non-empty")
    candidates = tuple(store.lookup_candidates(label, "predicate", limit=CANDIDATE_LIMIT))
    if candidates:
        return candidates, None
    return (), normalize_label(label)


def annotate_table_cta(table: Table, store: KGStore) -> list[ColumnAnnotation]:
    """One annotation per column: voted type, predicate candidates, flags.

    Deterministic for identical inputs; only score-1.0 predicate candidates
    are auto-chosen.
    """
    labels = effective_property_labels(table)
    annotations = []
    for col in range(table.n_columns):
        cells = [c.raw_text for c in table.column_cells(col)]
        if cells:
            inferred, histogram, idx_flags = infer_column_type(cells)
        else:  # header-only table
            inferred, histogram, idx_flags = CellType.STRING, {}, []
        candidates, proposal = suggest_predicates(table.header[col], store, query=labels[col])
        chosen = None
        if candidates and candidates[0].score == 1.0:
            chosen = candidates[0].target
        annotations.append(
            ColumnAnnotation(
                column=col,
                inferred_type=inferred,
                effective_type=inferred,
                vote_histogram=histogram,
                predicate_candidates=candidates,
                chosen_predicate=chosen,
                create_proposal=proposal,
                flags=[
                    InconsistencyFlag(row=i, column=col, found_type=t, expected_type=inferred)
                    for i, t in idx_flags
                ],
            )
        )
    return annotations


CEA_TYPES = frozenset({CellType.STRING, CellType.URL})


def suggest_cell_entities(
    cell: Cell,
    column_annotation: ColumnAnnotation,
    store: KGStore,
    row: int = 0,
) -> CellAnnotation:
    """Entity candidates per cell value; multi-value cells are split first.

    Only applicable to string/url columns. The machine pre-aligns a value
    only when the top candidate is an exact-normalized match (score 1.0).
    """
    if column_annotation.effective_type not in CEA_TYPES:
        raise ValidationError(
            f"cell-entity suggestion needs a string or url column, "
            f"got {column_annotation.effective_type.value}"
        )
    cell = split_cell(cell)
    values = []
    for text in cell.values:
        if not text.strip():
            values.append(ValueAnnotation(text=text, candidates=()))
            continue
        candidates = tuple(store.lookup_candidates(text, "entity", limit=CANDIDATE_LIMIT))
        alignment = None
        origin = None
        if candidates and candidates[0].score == 1.0:
            alignment = Alignment.entity(candidates[0].target)
            origin = "machine"
        values.append(
            ValueAnnotation(
                text=text, candidates=candidates, alignment=alignment, alignment_origin=origin
            )
        )
    return CellAnnotation(row=row, column=column_annotation.column, values=tuple(values))


def realign(value: ValueAnnotation, alignment: Alignment | None, origin: str | None) -> ValueAnnotation:
    return replace(value, alignment=alignment, alignment_origin=origin)
