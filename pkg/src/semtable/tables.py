"""Canonical tabular model plus lossless CSV ingestion and emission.

Parsing is a small RFC-4180 state machine rather than stdlib ``csv``: the
contract requires 1-based line numbers on unterminated quotes, hard errors
on over-long rows, and recorded warnings for padded short rows, none of
which the stdlib reader reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from semtable.celltypes import CellType, infer_cell_type
from semtable.errors import (
    EmptyInputError,
    EncodingError,
    InsufficientRowsError,
    ParseError,
)
from semtable.similarity import normalize_label

DEFAULT_SPLIT_DELIMITERS = (";", ",", "|")

_NUMERIC_TYPES = frozenset({CellType.INTEGER, CellType.DECIMAL})
_TYPED_TYPES = frozenset({CellType.INTEGER, CellType.DECIMAL, CellType.BOOLEAN, CellType.DATE})


@dataclass(frozen=True)
class CsvConfig:
    delimiter: str = ","
    quote: str = '"'
    header: str = "auto"  # auto | present | absent
    header_detect_threshold: float = 0.5
    line_ending: str = "\n"
    source_id: str = ""
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ColumnHeader:
    index: int
    raw_label: str
    normalized_label: str

    @classmethod
    def from_raw(cls, index: int, raw_label: str) -> "ColumnHeader":
        return cls(index=index, raw_label=raw_label, normalized_label=normalize_label(raw_label))


@dataclass(frozen=True)
class Cell:
    """One table cell; ``values`` is the split view, ``raw_text`` the source.

    Unsplit non-empty cells carry themselves as their single value. The
    split delimiter is recorded so re-splitting is a no-op and rejoining
    ``values`` with ``delimiter + " "`` reproduces the whitespace-normalized
    raw text.
    """

    raw_text: str
    values: tuple[str, ...]
    delimiter: str | None = None

    @classmethod
    def from_raw(cls, raw_text: str) -> "Cell":
        return cls(raw_text=raw_text, values=(raw_text,) if raw_text else ())


@dataclass(frozen=True)
class ParseWarning:
    line: int
    message: str


@dataclass(frozen=True)
class HeaderVerdict:
    verdict: str  # present | absent
    confidence: float


@dataclass(frozen=True)
class Table:
    source_id: str
    header: tuple[ColumnHeader, ...]
    rows: tuple[tuple[Cell, ...], ...]
    metadata: dict = field(default_factory=dict)
    warnings: tuple[ParseWarning, ...] = ()
    synthetic_header: bool = False

    @property
    def n_columns(self) -> int:
        return len(self.header)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def cell(self, row: int, column: int) -> Cell:
        return self.rows[row][column]

    def column_cells(self, column: int) -> list[Cell]:
        return [r[column] for r in self.rows]


def _tokenize(text: str, delimiter: str, quote: str) -> list[tuple[int, list[str]]]:
    """Split CSV text into (start line, fields) records.

    Accepts LF and CRLF terminators; a lone CR is field content. Blank lines
    produce no record. Raises ParseError on an unterminated quoted field.
    """
    records: list[tuple[int, list[str]]] = []
    fields: list[str] = []
    buf: list[str] = []
    line = 1
    record_line = 1
    quote_line = 1
    in_quotes = False
    saw_content = False  # any char consumed for the current record
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == quote:
                if i + 1 < n and text[i + 1] == quote:
                    buf.append(quote)
                    i += 2
                    continue
                in_quotes = False
            else:
                if ch == "\n":
                    line += 1
                buf.append(ch)
            i += 1
            continue
        if ch == quote:
            in_quotes = True
            quote_line = line
            saw_content = True
            i += 1
            continue
        if ch == delimiter:
            fields.append("".join(buf))
            buf.clear()
            saw_content = True
            i += 1
            continue
        if ch == "\n" or (ch == "\r" and i + 1 < n and text[i + 1] == "\n"):
            fields.append("".join(buf))
            buf.clear()
            if saw_content or len(fields) > 1 or fields[0]:
                records.append((record_line, fields))
                fields = []
            else:
                fields = []
            line += 1
            record_line = line
            saw_content = False
            i += 2 if ch == "\r" else 1
            continue
        buf.append(ch)
        saw_content = True
        i += 1
    if in_quotes:
        raise ParseError("unterminated quoted field", line=quote_line)
    if buf or fields or saw_content:
        fields.append("".join(buf))
        if saw_content or len(fields) > 1 or fields[0]:
            records.append((record_line, fields))
    return records


def detect_header(rows: list, threshold: float = 0.5) -> HeaderVerdict:
    """Decide whether row 0 is a header row.

    Present when every row-0 cell is non-numeric and at least ``threshold``
    of all body cells lex as integer/decimal/boolean/date. Confidence is the
    fraction of columns supporting the verdict: a column supports `present`
    through a non-numeric row-0 cell, and `absent` when its header signal
    fails (numeric row-0 cell, or under-threshold typed body cells).
    """
    if len(rows) < 2:
        raise InsufficientRowsError(
            "header auto-detection needs at least 2 rows; set header mode explicitly"
        )
    first = list(rows[0])
    n_cols = len(first)
    if n_cols == 0:
        return HeaderVerdict("absent", 0.0)
    first_types = [infer_cell_type(c) for c in first]
    non_numeric = [t not in _NUMERIC_TYPES for t in first_types]

    body_total = 0
    body_typed = 0
    col_total = [0] * n_cols
    col_typed = [0] * n_cols
    for row in rows[1:]:
        for j, cell in enumerate(row):
            if j >= n_cols:
                continue
            t = infer_cell_type(cell)
            body_total += 1
            col_total[j] += 1
            if t in _TYPED_TYPES:
                body_typed += 1
                col_typed[j] += 1

    typed_fraction = body_typed / body_total if body_total else 0.0
    present = all(non_numeric) and typed_fraction >= threshold
    if present:
        support = sum(1 for nn in non_numeric if nn)
        return HeaderVerdict("present", support / n_cols)
    support = 0
    for j in range(n_cols):
        col_fraction = col_typed[j] / col_total[j] if col_total[j] else 0.0
        signal = non_numeric[j] and col_fraction >= threshold
        if not signal:
            support += 1
    return HeaderVerdict("absent", support / n_cols)


def synthetic_header(n_columns: int) -> tuple[ColumnHeader, ...]:
    return tuple(ColumnHeader.from_raw(j, f"column_{j + 1}") for j in range(n_columns))


def parse_csv(data: bytes, config: CsvConfig = CsvConfig()) -> Table:
    """Parse UTF-8 CSV bytes into a rectangular Table.

    A leading BOM is stripped. Short rows are padded to the header width and
    recorded as warnings; over-long rows raise ParseError.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"input is not UTF-8: {exc}") from None
    if text.startswith("﻿"):
        text = text[1:]

    records = _tokenize(text, config.delimiter, config.quote)
    if not records:
        raise EmptyInputError("input contains no columns")

    mode = config.header
    if mode == "auto":
        verdict = detect_header([f for _, f in records], config.header_detect_threshold)
        mode = verdict.verdict
    elif mode not in ("present", "absent"):
        raise ParseError(f"unknown header mode {mode!r}", line=1)

    width = len(records[0][1])
    warnings: list[ParseWarning] = []
    if mode == "present":
        header_fields = records[0][1]
        header = tuple(ColumnHeader.from_raw(j, lbl) for j, lbl in enumerate(header_fields))
        body = records[1:]
        synthetic = False
    else:
        header = synthetic_header(width)
        body = records
        synthetic = True

    rows: list[tuple[Cell, ...]] = []
    for line, fields in body:
        if len(fields) > width:
            raise ParseError(f"row has {len(fields)} cells, expected {width}", line=line)
        if len(fields) < width:
            warnings.append(
                ParseWarning(line, f"row padded from {len(fields)} to {width} cells")
            )
            fields = fields + [""] * (width - len(fields))
        rows.append(tuple(Cell.from_raw(f) for f in fields))

    return Table(
        source_id=config.source_id,
        header=header,
        rows=tuple(rows),
        metadata=dict(config.metadata),
        warnings=tuple(warnings),
        synthetic_header=synthetic,
    )


def _find_split_delimiter(raw: str, delimiters: tuple[str, ...], quote: str = '"') -> str | None:
    """First delimiter (in priority order) occurring outside quoted regions."""
    unquoted: list[str] = []
    in_quotes = False
    for ch in raw:
        if ch == quote:
            in_quotes = not in_quotes
        elif not in_quotes:
            unquoted.append(ch)
    hay = "".join(unquoted)
    for d in delimiters:
        if d in hay:
            return d
    return None


def split_cell(cell: Cell, delimiters: tuple[str, ...] = DEFAULT_SPLIT_DELIMITERS) -> Cell:
    """Split an enumeration cell on the first-priority delimiter present.

    Parts are trimmed, empty parts dropped, the raw text kept, and the
    chosen delimiter recorded. Idempotent: already-split cells and cells
    without any delimiter occurrence come back unchanged.
    """
    if not delimiters:
        raise ValueError("delimiters must be non-empty")
    if cell.delimiter is not None or not cell.raw_text:
        return cell
    chosen = _find_split_delimiter(cell.raw_text, tuple(delimiters))
    if chosen is None:
        return cell
    parts: list[str] = []
    buf: list[str] = []
    in_quotes = False
    i = 0
    raw = cell.raw_text
    while i < len(raw):
        ch = raw[i]
        if ch == '"':
            in_quotes = not in_quotes
            buf.append(ch)
            i += 1
        elif not in_quotes and raw.startswith(chosen, i):
            parts.append("".join(buf))
            buf = []
            i += len(chosen)
        else:
            buf.append(ch)
            i += 1
    parts.append("".join(buf))
    trimmed = tuple(p.strip() for p in parts if p.strip())
    if not trimmed:
        return cell
    return replace(cell, values=trimmed, delimiter=chosen)


def _needs_quoting(text: str, config: CsvConfig) -> bool:
    return (
        config.delimiter in text
        or config.quote in text
        or "\n" in text
        or "\r" in text
    )


def table_to_csv(table: Table, config: CsvConfig = CsvConfig()) -> bytes:
    """Emit RFC-4180 CSV; round-trips raw cell text and header labels.

    A record that would render as a completely blank line (single column,
    empty text) is emitted as a quoted empty field, since blank lines carry
    no record on input.
    """

    def render(text: str) -> str:
        if _needs_quoting(text, config):
            return config.quote + text.replace(config.quote, config.quote * 2) + config.quote
        return text

    def render_record(texts: list[str]) -> str:
        line = config.delimiter.join(render(t) for t in texts)
        if not line:
            return config.quote * 2
        return line

    lines = []
    if not table.synthetic_header:
        lines.append(render_record([h.raw_label for h in table.header]))
    for row in table.rows:
        lines.append(render_record([c.raw_text for c in row]))
    return (config.line_ending.join(lines) + config.line_ending).encode("utf-8")
