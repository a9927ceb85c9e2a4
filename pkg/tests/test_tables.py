"""Table model, CSV ingestion/emission, header detection, cell splitting."""

import csv
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semtable.errors import (
    EmptyInputError,
    EncodingError,
    InsufficientRowsError,
    ParseError,
)
from semtable.tables import (
    Cell,
    CsvConfig,
    detect_header,
    parse_csv,
    split_cell,
    table_to_csv,
)

PRESENT = CsvConfig(header="present")
ABSENT = CsvConfig(header="absent")


def rows_raw(table):
    return [[c.raw_text for c in row] for row in table.rows]


class TestParseCsv:
    def test_minimal(self):
        t = parse_csv(b"a,b\n1,2\n", PRESENT)
        assert [h.raw_label for h in t.header] == ["a", "b"]
        assert rows_raw(t) == [["1", "2"]]

    def test_rfc4180_quoting(self):
        t = parse_csv(b'a,b\n"x,y",2\n', PRESENT)
        assert t.rows[0][0].raw_text == "x,y"

    def test_quoted_quote_and_newline(self):
        t = parse_csv(b'a\n"he said ""hi""\nbye"\n', PRESENT)
        assert t.rows[0][0].raw_text == 'he said "hi"\nbye'

    def test_short_row_padded_with_warning(self):
        # reference reader: stdlib csv sees the ragged row as-is
        raw = "a,b,c\n1,2\n"
        reference = list(csv.reader(io.StringIO(raw)))
        assert len(reference[1]) == 2
        t = parse_csv(raw.encode(), PRESENT)
        assert rows_raw(t) == [reference[1] + [""]]
        assert len(t.warnings) == 1
        assert t.warnings[0].line == 2

    def test_over_long_row_is_error(self):
        with pytest.raises(ParseError) as err:
            parse_csv(b"a,b\n1,2,3\n", PRESENT)
        assert err.value.line == 2

    def test_unterminated_quote(self):
        with pytest.raises(ParseError) as err:
            parse_csv(b'a,b\n"oops,2\n', PRESENT)
        assert err.value.line == 2

    def test_not_utf8(self):
        with pytest.raises(EncodingError):
            parse_csv(b"a,b\n\xff\xfe,2\n", PRESENT)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            parse_csv(b"", PRESENT)
        with pytest.raises(EmptyInputError):
            parse_csv(b"\n\n", PRESENT)

    def test_bom_stripped(self):
        t = parse_csv("﻿a,b\n1,2\n".encode("utf-8"), PRESENT)
        assert t.header[0].raw_label == "a"

    def test_crlf(self):
        t = parse_csv(b"a,b\r\n1,2\r\n", PRESENT)
        assert rows_raw(t) == [["1", "2"]]

    def test_absent_mode_synthesizes_labels(self):
        t = parse_csv(b"1,2\n3,4\n", ABSENT)
        assert [h.raw_label for h in t.header] == ["column_1", "column_2"]
        assert t.synthetic_header
        assert len(t.rows) == 2

    def test_auto_mode_uses_detection(self):
        t = parse_csv(b"Name,Age\nAda,36\n", CsvConfig(header="auto"))
        assert [h.raw_label for h in t.header] == ["Name", "Age"]
        t = parse_csv(b"1,2\n3,4\n", CsvConfig(header="auto"))
        assert t.synthetic_header

    def test_auto_mode_single_row_needs_explicit_mode(self):
        with pytest.raises(InsufficientRowsError):
            parse_csv(b"Name,Age\n", CsvConfig(header="auto"))

    def test_custom_delimiter(self):
        t = parse_csv(b"a;b\n1;2\n", CsvConfig(delimiter=";", header="present"))
        assert rows_raw(t) == [["1", "2"]]

    def test_rectangular_after_parse(self):
        t = parse_csv(b"a,b,c\n1\n2,3\n4,5,6\n", PRESENT)
        assert all(len(r) == 3 for r in t.rows)


class TestDetectHeader:
    def test_textual_header_over_typed_body(self):
        v = detect_header([["Name", "Age"], ["Ada", "36"]])
        assert v.verdict == "present"
        assert v.confidence == 1.0

    def test_all_numeric_rows(self):
        v = detect_header([["1", "2"], ["3", "4"]])
        assert v.verdict == "absent"
        assert v.confidence == 1.0

    def test_single_row_raises(self):
        with pytest.raises(InsufficientRowsError):
            detect_header([["Name", "Age"]])

    def test_string_body_is_absent_verdict(self):
        v = detect_header([["Name"], ["Ada"], ["Bob"]])
        assert v.verdict == "absent"


class TestSplitCell:
    def test_semicolons(self):
        c = split_cell(Cell.from_raw("a; b; c"))
        assert c.values == ("a", "b", "c")
        assert c.delimiter == ";"
        assert c.raw_text == "a; b; c"

    def test_no_delimiter_unchanged(self):
        c = Cell.from_raw("x")
        assert split_cell(c) is c

    def test_priority_semicolon_beats_comma(self):
        c = split_cell(Cell.from_raw("p, q; r"))
        assert c.values == ("p, q", "r")
        assert c.delimiter == ";"

    def test_empty_parts_dropped(self):
        c = split_cell(Cell.from_raw("a;;b; "))
        assert c.values == ("a", "b")

    def test_quoted_delimiters_ignored(self):
        c = split_cell(Cell.from_raw('"a;b", c'))
        assert c.delimiter == ","
        assert c.values == ('"a;b"', "c")

    def test_idempotent(self):
        c1 = split_cell(Cell.from_raw("a; b"))
        assert split_cell(c1) is c1

    def test_rejoin_reproduces_normalized_raw(self):
        c = split_cell(Cell.from_raw("a ;  b ; c"))
        rejoined = (c.delimiter + " ").join(c.values)
        normalized_parts = (c.delimiter + " ").join(
            p.strip() for p in c.raw_text.split(c.delimiter)
        )
        assert rejoined == normalized_parts

    @given(st.text(alphabet="abc;,| ", max_size=20))
    def test_idempotence_property(self, raw):
        once = split_cell(Cell.from_raw(raw))
        assert split_cell(once) == once


cell_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\r\x00"),
    max_size=12,
)


class TestRoundTrip:
    def test_simple_emit(self):
        t = parse_csv(b"a\nx\n", PRESENT)
        assert table_to_csv(t, PRESENT) == b"a\nx\n"

    def test_comma_quoted(self):
        t = parse_csv(b'a\n"x,y"\n', PRESENT)
        assert table_to_csv(t, PRESENT) == b'a\n"x,y"\n'

    @settings(max_examples=200, deadline=None)
    @given(
        header=st.lists(cell_text, min_size=1, max_size=4),
        body=st.lists(st.lists(cell_text, min_size=1, max_size=4), max_size=4),
    )
    def test_round_trip_property(self, header, body):
        width = len(header)
        rows = [r[:width] + [""] * (width - len(r[:width])) for r in body]
        emitted = table_to_csv_from(header, rows)
        t = parse_csv(emitted, PRESENT)
        t2 = parse_csv(table_to_csv(t, PRESENT), PRESENT)
        assert [h.raw_label for h in t2.header] == [h.raw_label for h in t.header]
        assert rows_raw(t2) == rows_raw(t)

    def test_absent_header_round_trip(self):
        t = parse_csv(b"1,2\n3,4\n", ABSENT)
        again = parse_csv(table_to_csv(t, ABSENT), ABSENT)
        assert rows_raw(again) == rows_raw(t)
        assert [h.raw_label for h in again.header] == [h.raw_label for h in t.header]


def table_to_csv_from(header, rows) -> bytes:
    """Reference emitter built on the stdlib writer (test-side oracle).

    Applies the same blank-record disambiguation the engine documents: a
    record that would print as an empty line becomes a quoted empty field.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for record in [header] + rows:
        if len(record) == 1 and record[0] == "":
            buf.write('""\n')
        else:
            w.writerow(record)
    return buf.getvalue().encode("utf-8")
