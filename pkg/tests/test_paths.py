from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from dataguard.conditions import AttrClass, Predicate, predicates
from dataguard.errors import ParseError, ResolutionError
from dataguard.paths import (
    ROOT,
    Deref,
    FieldPath,
    Filter,
    Unnest,
    UnnestKind,
    extract_field_paths,
    parse_field_path,
    parse_relative_path,
    render_field_path,
    resolve_path,
)
from dataguard.schema import SchemaType, atomic, parse_type

from randgen import random_filter, random_path_text, random_relation


class TestParse:
    def test_examples(self):
        p = parse_field_path("$.col3.[item].[?(@.field31='s1')]")
        assert p.operators == (
            ROOT,
            Deref("col3"),
            Unnest(UnnestKind.ITEM),
            Filter(Predicate("field31", "=", ("s1",), AttrClass.DATA)),
        )
        assert p.root_attribute == "col3"
        assert not p.is_row_level

    def test_row_selector(self):
        p = parse_field_path("$.[?(@.col1 = 'def')]")
        assert p.is_row_level
        assert p.row_selector == Predicate("col1", "=", ("def",), AttrClass.DATA)
        assert p.root_attribute is None

    def test_selector_then_column(self):
        p = parse_field_path("$.[?(@.col1='ghj')].col2")
        assert not p.is_row_level
        assert p.column_path() == parse_field_path("$.col2")
        assert p.cell_operators() == ()

    def test_relative(self):
        assert parse_relative_path("") == ()
        assert parse_relative_path("field21") == (Deref("field21"),)
        assert parse_relative_path("[value]") == (Unnest(UnnestKind.VALUE),)

    @pytest.mark.parametrize(
        "text, position",
        [("", 0), ("col1", 0), ("$.", 2), ("$.[foo]", 3), ("$.col1.$", 7), ("$.col1 col2", 7), ("$.[?(@.a=)]", 9)],
    )
    def test_error_positions(self, text, position):
        with pytest.raises(ParseError) as exc:
            parse_field_path(text)
        assert exc.value.position == position

    def test_root_only_first(self):
        with pytest.raises(ValueError):
            FieldPath((ROOT, ROOT))

    @given(st.integers(0, 2**32))
    @settings(max_examples=300, deadline=None)
    def test_round_trip(self, seed):
        rng = random.Random(seed)
        schema = random_relation(rng)
        text = random_path_text(rng, schema)
        path = parse_field_path(text)
        canonical = render_field_path(path)
        assert parse_field_path(canonical) == path
        assert render_field_path(parse_field_path(canonical)) == canonical


# ---------------------------------------------------------------------------
# Resolution against an independent walker over the JSON type encoding


def _walk(type_json: dict, ops: list, at_root: bool):
    """Returns the JSON type reached, or None when some operator does not fit."""
    prev = "root" if at_root else None
    cur = type_json
    for i, op in enumerate(ops):
        kind = cur["kind"]
        if isinstance(op, Deref):
            fields = {f["name"]: f["type"] for f in cur.get("fields", [])} if kind == "struct" else {}
            if op.name not in fields:
                return None
            cur, prev = fields[op.name], "deref"
        elif isinstance(op, Unnest):
            if op.kind is UnnestKind.ITEM and kind == "array":
                cur = cur["element"]
            elif op.kind is UnnestKind.KEY and kind == "map":
                if i != len(ops) - 1:
                    return None
                cur = cur["key"]
            elif op.kind is UnnestKind.VALUE and kind == "map":
                cur = cur["value"]
            else:
                return None
            prev = op.kind.value
        else:
            if prev not in ("root", "item", "value"):
                return None
            for p in _preds(op.condition):
                if p.attribute == "@":
                    if kind != "atomic":
                        return None
                else:
                    fields = {f["name"]: f["type"] for f in cur.get("fields", [])} if kind == "struct" else {}
                    if p.attribute not in fields or fields[p.attribute]["kind"] != "atomic":
                        return None
            prev = "filter"
    return cur


def _preds(cond):
    return list(predicates(cond))


def _random_ops(rng: random.Random, schema) -> list:
    """Operator soup: mostly plausible names, sometimes wrong kinds, filters anywhere."""
    names = ["col0", "col1", "f0", "f1", "f2", "nope"]
    ops = []
    for _ in range(rng.randint(0, 5)):
        r = rng.random()
        if r < 0.45:
            ops.append(Deref(rng.choice(names)))
        elif r < 0.8:
            ops.append(Unnest(rng.choice(list(UnnestKind))))
        else:
            flt = random_filter(rng, rng.choice([atomic("BIGINT"), parse_type("STRUCT<f0:VARCHAR, f1:BIGINT>")]))
            ops.append(Filter(parse_field_path(f"$.[?({flt})]").row_selector))
    return ops


class TestResolve:
    def test_examples(self, nested_schema):
        assert resolve_path(nested_schema, parse_field_path("$.col2.field21")).resolved_type == atomic("BIGINT")
        b = resolve_path(nested_schema, parse_field_path("$.col4.[value].[item].field42"))
        assert b.resolved_type == atomic("BOOLEAN")
        assert b.root_attribute == "col4"

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("$.col2.nope", "no field 'nope'"),
            ("$.col1.[item]", "[item] applies to arrays"),
            ("$.col4.[key].[item]", "[key] must be the last"),
            ("$.col2.[?(@.field21=1)]", "must follow the root"),
            ("$.col3.[item].[?(@.missing=1)]", "unknown attribute 'missing'"),
            ("$.col3.[?(@=1)]", "must follow the root"),
        ],
    )
    def test_errors_name_operator(self, nested_schema, text, fragment):
        with pytest.raises(ResolutionError) as exc:
            resolve_path(nested_schema, parse_field_path(text))
        assert fragment in str(exc.value)

    @given(st.integers(0, 2**32))
    @settings(max_examples=500, deadline=None)
    def test_matches_independent_walker(self, seed):
        rng = random.Random(seed)
        schema = random_relation(rng)
        ops = _random_ops(rng, schema) if rng.random() < 0.6 else list(parse_field_path(random_path_text(rng, schema)).tail)
        path = FieldPath((ROOT, *ops))
        expected = _walk(schema.row_type().to_json(), ops, at_root=True)
        if expected is None:
            with pytest.raises(ResolutionError):
                resolve_path(schema, path)
        else:
            assert resolve_path(schema, path).resolved_type == SchemaType.from_json(expected)

    @given(st.integers(0, 2**32))
    @settings(max_examples=100, deadline=None)
    def test_extracted_paths_resolve(self, seed):
        schema = random_relation(random.Random(seed))
        for path in extract_field_paths(schema):
            resolve_path(schema, path)

    def test_extract_nested(self, nested_schema):
        texts = {render_field_path(p) for p in extract_field_paths(nested_schema)}
        assert {"$.col1", "$.col2.field22", "$.col3.[item].field32", "$.col4.[key]", "$.col4.[value].[item].field41"} <= texts
