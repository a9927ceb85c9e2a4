"""Cell-type lexers, majority voting, predicate and entity suggestion."""

import random

import pytest

from semtable.annotate import (
    GENERALITY_ORDER,
    annotate_table_cta,
    effective_property_labels,
    infer_column_type,
    suggest_cell_entities,
    suggest_predicates,
)
from semtable.celltypes import CellType, infer_cell_type, lexeme_matches
from semtable.errors import ValidationError
from semtable.store import KGStore
from semtable.tables import Cell, CsvConfig, parse_csv

PRESENT = CsvConfig(header="present")


class TestInferCellType:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("42", CellType.INTEGER),
            ("-7", CellType.INTEGER),
            ("3.14", CellType.DECIMAL),
            ("1e5", CellType.DECIMAL),
            ("-2.5e-3", CellType.DECIMAL),
            ("true", CellType.BOOLEAN),
            ("Yes", CellType.BOOLEAN),
            ("2021-05-03", CellType.DATE),
            ("2021-13-45", CellType.STRING),  # not a real date
            ("http://example.org/x", CellType.URL),
            ("https://example.org", CellType.URL),
            ("ftp://example.org", CellType.STRING),
            ("N/A", CellType.STRING),
            ("", CellType.EMPTY),
            ("   ", CellType.EMPTY),
            ("  7 ", CellType.INTEGER),
        ],
    )
    def test_examples(self, text, expected):
        assert infer_cell_type(text) is expected

    def test_year_form_is_integer(self):
        # regression pin: the integer lexer precedes the date lexer
        assert infer_cell_type("2021") is CellType.INTEGER

    def test_year_form_valid_date_lexeme(self):
        assert lexeme_matches("2021", CellType.DATE)
        assert lexeme_matches("2021-05-03", CellType.DATE)

    def test_total_and_single(self):
        for text in ["", "x", "1", "1.5", "true", "2020-01-01", "http://a.b", "?!"]:
            assert isinstance(infer_cell_type(text), CellType)

    def test_string_is_universal_fallback(self):
        for text in ["42", "true", "2021-05-03", "hello"]:
            assert lexeme_matches(text, CellType.STRING)
        assert not lexeme_matches("", CellType.STRING)


def oracle_column_type(cells):
    """Brute-force counter with the documented tie-break and flag rule."""
    types = [infer_cell_type(c) for c in cells]
    counts = {}
    for t in types:
        if t is not CellType.EMPTY:
            counts[t] = counts.get(t, 0) + 1
    if not counts:
        winner = CellType.STRING
    else:
        best = max(counts.values())
        winner = next(t for t in GENERALITY_ORDER if counts.get(t, 0) == best)
    flags = [
        (i, t)
        for i, t in enumerate(types)
        if t is not CellType.EMPTY
        and t is not winner
        and not (t is CellType.INTEGER and winner is CellType.DECIMAL)
    ]
    return winner, counts, flags


class TestInferColumnType:
    def test_majority_with_flag(self):
        winner, hist, flags = infer_column_type(["1", "2", "x"])
        assert winner is CellType.INTEGER
        assert hist == {CellType.INTEGER: 2, CellType.STRING: 1}
        assert flags == [(2, CellType.STRING)]

    def test_integer_beats_single_decimal(self):
        winner, hist, flags = infer_column_type(["1", "2.5", "3", "4"])
        assert winner is CellType.INTEGER
        assert flags == [(1, CellType.DECIMAL)]

    def test_tie_goes_to_more_general(self):
        winner, _, flags = infer_column_type(["1", "2.5"])
        assert winner is CellType.DECIMAL
        assert flags == []  # the integer is exempt inside a decimal column

    def test_all_empty_defaults_to_string(self):
        winner, hist, flags = infer_column_type(["", "", ""])
        assert winner is CellType.STRING
        assert hist == {}
        assert flags == []

    def test_zero_cells_rejected(self):
        with pytest.raises(ValidationError):
            infer_column_type([])

    def test_string_wins_ties_over_everything(self):
        winner, _, _ = infer_column_type(["x", "1"])
        assert winner is CellType.STRING

    def test_matches_oracle_on_random_columns(self):
        rng = random.Random(7)
        pools = ["1", "-3", "2.5", "1e3", "true", "no", "2020-01-02", "http://a.b/c", "word", "n/a", ""]
        for _ in range(300):
            cells = [rng.choice(pools) for _ in range(rng.randint(1, 30))]
            assert infer_column_type(cells) == oracle_column_type(cells)


class TestSuggestPredicates:
    def test_exact_match(self):
        store = KGStore()
        pid = store.upsert_predicate("study type")
        table = parse_csv(b"study type\nx\n", PRESENT)
        candidates, proposal = suggest_predicates(table.header[0], store)
        assert candidates[0].target == pid and candidates[0].score == 1.0
        assert proposal is None

    def test_fuzzy_not_score_one(self):
        store = KGStore()
        store.upsert_predicate("study type")
        table = parse_csv(b"Study Types\nx\n", PRESENT)
        candidates, _ = suggest_predicates(table.header[0], store)
        assert candidates and candidates[0].score < 1.0

    def test_empty_store_creates_proposal(self):
        store = KGStore()
        table = parse_csv(b"flux capacitance\nx\n", PRESENT)
        candidates, proposal = suggest_predicates(table.header[0], store)
        assert candidates == ()
        assert proposal == "flux capacitance"


class TestAnnotateTable:
    def test_shape_and_invariants(self):
        store = KGStore()
        store.upsert_predicate("name")
        table = parse_csv(b"name,age,score\nAda,36,1.5\nBob,37,2.5\n", PRESENT)
        anns = annotate_table_cta(table, store)
        assert len(anns) == 3
        for ann in anns:
            if ann.vote_histogram:
                best = max(ann.vote_histogram.values())
                assert ann.vote_histogram[ann.inferred_type] == best
            for f in ann.flags:
                assert f.found_type is not ann.inferred_type

    def test_auto_choice_only_at_score_one(self):
        store = KGStore()
        store.upsert_predicate("name")
        store.upsert_predicate("ages")  # fuzzy vs "age"
        table = parse_csv(b"name,age\nAda,36\n", PRESENT)
        anns = annotate_table_cta(table, store)
        assert anns[0].chosen_predicate is not None
        assert anns[1].chosen_predicate is None
        assert anns[1].predicate_candidates  # fuzzy candidate offered, not chosen

    def test_header_only_table(self):
        store = KGStore()
        table = parse_csv(b"a,b,c\n", PRESENT)
        anns = annotate_table_cta(table, store)
        assert [a.inferred_type for a in anns] == [CellType.STRING] * 3
        assert all(not a.flags for a in anns)

    def test_deterministic(self):
        store = KGStore()
        store.upsert_predicate("name")
        table = parse_csv(b"name,age\nAda,36\n", PRESENT)
        a = annotate_table_cta(table, store)
        b = annotate_table_cta(table, store)
        assert a == b

    def test_effective_labels_unique_and_nonempty(self):
        table = parse_csv(b"A,a,,A\n1,2,3,4\n", PRESENT)
        labels = effective_property_labels(table)
        assert len(set(labels)) == 4
        assert all(labels)


class TestSuggestCellEntities:
    def test_exact_match_pre_aligned(self):
        store = KGStore()
        eid = store.upsert_entity("Germany")
        table = parse_csv(b"country\nGermany\n", PRESENT)
        ann = annotate_table_cta(table, store)[0]
        ca = suggest_cell_entities(table.cell(0, 0), ann, store, row=0)
        va = ca.values[0]
        assert va.alignment.kind == "entity" and va.alignment.entity_id == eid
        assert va.alignment_origin == "machine"
        assert va.candidates[0].score == 1.0

    def test_multi_value_split_no_fuzzy_auto_alignment(self):
        store = KGStore()
        store.upsert_entity("deep learning")
        store.upsert_entity("machine learning")
        table = parse_csv(b"methods\nDL; ML\n", PRESENT)
        ann = annotate_table_cta(table, store)[0]
        ca = suggest_cell_entities(table.cell(0, 0), ann, store, row=0)
        assert len(ca.values) == 2
        assert all(v.alignment is None for v in ca.values)

    def test_fuzzy_candidates_offered_but_not_aligned(self):
        store = KGStore()
        store.upsert_entity("transformers")
        table = parse_csv(b"method\ntransformer\n", PRESENT)
        ann = annotate_table_cta(table, store)[0]
        ca = suggest_cell_entities(table.cell(0, 0), ann, store, row=0)
        va = ca.values[0]
        assert va.candidates and va.candidates[0].score < 1.0
        assert va.alignment is None

    def test_literal_column_rejected(self):
        store = KGStore()
        table = parse_csv(b"score\n42\n", PRESENT)
        ann = annotate_table_cta(table, store)[0]
        with pytest.raises(ValidationError):
            suggest_cell_entities(table.cell(0, 0), ann, store, row=0)

    def test_machine_never_aligns_below_one(self):
        rng = random.Random(99)
        store = KGStore()
        vocab = ["alpha", "beta", "gamma", "delta", "epsilon"]
        for w in vocab:
            store.upsert_entity(w)
        table = parse_csv(b"col\nx\n", PRESENT)
        ann = annotate_table_cta(table, store)[0]
        for _ in range(200):
            text = rng.choice(vocab) + rng.choice(["", "s", "x", " thing"])
            ca = suggest_cell_entities(Cell.from_raw(text), ann, store, row=0)
            for va in ca.values:
                if va.alignment_origin == "machine":
                    assert va.candidates[0].score == 1.0
