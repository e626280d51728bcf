from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from dataguard.errors import SchemaError
from dataguard.schema import Kind, RelationSchema, SchemaType, array, atomic, map_of, parse_type, relation, struct

from randgen import random_relation, random_type


class TestParseType:
    def test_nested_example(self):
        t = parse_type("MAP<VARCHAR, ARRAY<STRUCT<field41:VARCHAR, field42:BOOLEAN>>>")
        assert t.kind is Kind.MAP
        assert t.key == atomic("VARCHAR")
        assert t.value.kind is Kind.ARRAY
        assert t.value.element.field_names() == ["field41", "field42"]
        assert t.depth == 3

    def test_case_and_whitespace(self):
        assert parse_type("array< struct< a : bigint > >") == array(struct({"a": atomic("BIGINT")}))

    @pytest.mark.parametrize("text", ["", "FOO", "ARRAY<", "STRUCT<a:INT, a:INT>", "MAP<ARRAY<INT>, INT>", "INT INT"])
    def test_rejects(self, text):
        with pytest.raises(SchemaError):
            parse_type(text)

    @given(st.integers(0, 2**32))
    @settings(max_examples=200, deadline=None)
    def test_string_round_trip(self, seed):
        t = random_type(random.Random(seed), 5)
        assert parse_type(str(t)) == t

    @given(st.integers(0, 2**32))
    @settings(max_examples=200, deadline=None)
    def test_json_round_trip(self, seed):
        t = random_type(random.Random(seed), 5)
        assert SchemaType.from_json(t.to_json()) == t


class TestRelationSchema:
    def test_subject_column_must_be_integer(self):
        with pytest.raises(SchemaError):
            relation("R", {"id": "VARCHAR"}, subject_id_column="id")
        with pytest.raises(SchemaError):
            relation("R", {"id": "BIGINT"}, subject_id_column="other")

    def test_duplicate_column(self):
        with pytest.raises(SchemaError):
            RelationSchema("R", (("a", atomic("INT")), ("a", atomic("INT"))))

    def test_positions_and_row_type(self):
        r = relation("R", {"a": "INT", "b": "ARRAY<INT>"})
        assert r.column_names == ["a", "b"]
        assert r.position("b") == 1
        assert r.row_type() == struct({"a": atomic("INT"), "b": array(atomic("INT"))})

    def test_map_key_must_be_atomic(self):
        with pytest.raises(SchemaError):
            map_of(array(atomic("INT")), atomic("INT"))

    @given(st.integers(0, 2**32))
    @settings(max_examples=100, deadline=None)
    def test_json_round_trip(self, seed):
        r = random_relation(random.Random(seed))
        assert RelationSchema.from_json(r.to_json()) == r
