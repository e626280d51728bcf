from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from dataguard.compiler import (
    ChangeKind,
    MaskTarget,
    StepKind,
    ViewDefinition,
    assign_version,
    classify_change,
    compile_view,
    inputs_digest,
    mask_target,
    output_schema,
    parse_version,
)
from dataguard.conditions import AttrClass
from dataguard.errors import MissingSubjectId, UnsupportedCondition
from dataguard.fixtures import nested_relation, nested_relation_with_subject
from dataguard.paths import parse_field_path
from dataguard.planner import plan_pairs
from dataguard.policy import make_policy

GOLDEN = Path(__file__).parent / "golden"


def dedup_view(pairs, **kwargs):
    kept, dropped = plan_pairs(pairs)
    return compile_view(
        nested_relation_with_subject(), kept, "analytics", created_at="2026-01-01T00:00:00+00:00", dropped=dropped, **kwargs
    )


def squash(sql: str) -> str:
    return re.sub(r"\s+", "", sql)


class TestDedupView:
    def test_sql_golden(self, pairs):
        assert dedup_view(pairs).sql == (GOLDEN / "dedup_view.sql").read_text()

    def test_plan_golden(self, pairs):
        plan = [s.to_json() for s in dedup_view(pairs).plan]
        assert plan == json.loads((GOLDEN / "dedup_plan.json").read_text())

    def test_matches_published_listing(self, pairs):
        # the published listing writes the keep-condition without NOT and joins
        # consent names with '_'; map ours onto that form and compare
        ours = dedup_view(pairs).sql.replace("NOT ", "")
        ours = re.sub(r"HAS_USER_CONSENT\('([^']*)'", lambda m: f"HAS_USER_CONSENT('{m[1].replace(',', '_')}'", ours)
        assert squash(ours) == squash((GOLDEN / "published_listing.sql").read_text())

    def test_pruned_recorded(self, pairs):
        view = dedup_view(pairs)
        assert view.pruned == sorted(
            [("$.col2.field21", "p1"), ("$.col3.[item].[?(@.field31='s1')]", "p2"), ("$.col4.[value]", "p4")]
        )
        assert len(view.row_filters) == 1 and len(view.column_masks) == 2

    def test_null_subject_warning(self, pairs):
        assert dedup_view(pairs).warnings == ["rows with NULL col1 are treated as not consenting"]

    def test_json_round_trip(self, pairs):
        view = dedup_view(pairs, inputs_digest="abc")
        again = ViewDefinition.from_json(json.loads(json.dumps(view.to_json())))
        assert again == view

    def test_output_schema_unchanged(self, pairs):
        view = dedup_view(pairs)
        assert output_schema(view) == view.schema


class TestRendering:
    @pytest.fixture
    def schema(self):
        return nested_relation_with_subject()

    def compile(self, schema, path, cond, registry=None):
        policy = make_policy("q", "x", "L", cond, registry=registry)
        return compile_view(schema, [(parse_field_path(path), policy)], "x", created_at="t")

    def test_row_selector_filter(self, schema):
        sql = self.compile(schema, "$.[?(@.col1=3)]", "c1 OR NOT c2").sql
        assert sql.endswith(
            "WHERE (NOT (col1 = 3) OR HAS_USER_CONSENT('c1', col1, CURRENT_TIMESTAMP())"
            " OR NOT HAS_USER_CONSENT('c2', col1, CURRENT_TIMESTAMP()));\n"
        )

    def test_row_selector_on_cell(self, schema):
        sql = self.compile(schema, "$.[?(@.col1 IN (1, 2))].col2.field22", "NOT c1").sql
        assert (
            "MASK_FIELD_IF((col1 IN (1, 2)) AND HAS_USER_CONSENT('c1', col1, CURRENT_TIMESTAMP()), "
            "col2, '$.col2.field22') AS col2" in sql
        )
        assert "NOT NOT" not in sql

    def test_consents_grouped_and_sorted(self, schema):
        sql = self.compile(schema, "$.col2", "c9 AND c1 AND c5").sql
        assert "NOT HAS_USER_CONSENT('c1,c5,c9', col1, CURRENT_TIMESTAMP())" in sql

    def test_mixed_conjunction(self, schema):
        sql = self.compile(schema, "$.col2", "c1 AND (c2 OR c3) AND c4").sql
        assert "HAS_USER_CONSENT('c1,c4', col1, CURRENT_TIMESTAMP()) AND (" in sql

    def test_tautologies(self, schema):
        assert "MASK_FIELD_IF(NOT TRUE, col2, '$.col2')" in self.compile(schema, "$.col2", "TRUE").sql
        assert "MASK_FIELD_IF(NOT FALSE, col2, '$.col2')" in self.compile(schema, "$.col2", "FALSE").sql

    def test_boolean_in_list(self, schema):
        registry = {"c1": AttrClass.CONSENT}
        sql = self.compile(schema, "$.col2", "c1 IN (true, false)", registry).sql
        assert "MASK_FIELD_IF(NOT TRUE, col2, '$.col2')" in sql

    def test_unmasked_columns_pass_through(self, schema):
        sql = self.compile(schema, "$.col3.[item].field31", "c1").sql
        assert sql.startswith("SELECT col1,\n  col2,\n  MASK_FIELD_IF(")
        assert "WHERE" not in sql

    def test_stacked_masks_nest(self, schema):
        a = make_policy("a", "x", "L", "c1")
        b = make_policy("b", "x", "M", "c2")
        view = compile_view(
            schema, [(parse_field_path("$.col2.field22"), b), (parse_field_path("$.col2"), a)], "x", created_at="t"
        )
        # the container mask runs first, so it is the inner call
        line = next(l for l in view.sql.splitlines() if l.strip().startswith("MASK_FIELD_IF"))
        assert line.index("'$.col2.field22'") > line.index("'$.col2')")
        assert [s.policy_id for s in view.plan] == ["a", "b"]

    def test_string_literal_quoting(self, schema):
        sql = self.compile(schema, "$.col3.[item].[?(@.field31='it''s')]", "c1").sql
        assert "'$.col3.[item].[?(@.field31=''it''''s'')]'" in sql


class TestCompileErrors:
    def test_missing_subject_id(self):
        policy = make_policy("q", "x", "L", "c1")
        with pytest.raises(MissingSubjectId):
            compile_view(nested_relation(), [(parse_field_path("$.col2"), policy)], "x")

    def test_no_consents_needs_no_subject(self):
        policy = make_policy("q", "x", "L", "FALSE")
        view = compile_view(nested_relation(), [(parse_field_path("$.col2"), policy)], "x")
        assert view.warnings == []

    def test_accessor_attribute_rejected(self):
        registry = {"c1": AttrClass.CONSENT, "age": AttrClass.ACCESSOR}
        policy = make_policy("q", "x", "L", "c1 AND age>3", registry=registry)
        with pytest.raises(UnsupportedCondition):
            compile_view(nested_relation_with_subject(), [(parse_field_path("$.col2"), policy)], "x")

    def test_non_boolean_consent_test_rejected(self):
        registry = {"c1": AttrClass.CONSENT}
        policy = make_policy("q", "x", "L", "c1='yes'", registry=registry)
        with pytest.raises(UnsupportedCondition):
            compile_view(nested_relation_with_subject(), [(parse_field_path("$.col2"), policy)], "x")


class TestMaskTarget:
    @pytest.mark.parametrize(
        "path, target",
        [
            ("$", MaskTarget.DROP_ROW),
            ("$.[?(@.col1=1)]", MaskTarget.DROP_ROW),
            ("$.col2", MaskTarget.NULL),
            ("$.col2.field21", MaskTarget.NULL),
            ("$.col3.[item]", MaskTarget.REMOVE_ELEMENT),
            ("$.col3.[item].[?(@.field32>1.0)]", MaskTarget.REMOVE_ELEMENT),
            ("$.col3.[item].field31", MaskTarget.NULL),
            ("$.col4.[key]", MaskTarget.REMOVE_PAIR),
            ("$.col4.[value]", MaskTarget.NULL_VALUE),
            ("$.col4.[value].[item]", MaskTarget.REMOVE_ELEMENT),
        ],
    )
    def test_targets(self, path, target):
        assert mask_target(parse_field_path(path)) is target

    def test_step_kinds(self, pairs):
        view = dedup_view(pairs)
        assert [s.kind for s in view.plan] == [StepKind.ROW_FILTER, StepKind.COLUMN_MASK, StepKind.COLUMN_MASK]


class TestVersioning:
    @pytest.fixture
    def base(self, pairs):
        view = dedup_view(pairs)
        view.version = "1.2.3"
        return view

    def test_first_version(self, pairs):
        assert classify_change(None, dedup_view(pairs)) is ChangeKind.MAJOR
        assert assign_version(None, "d", ChangeKind.MAJOR) == "1.0.0"

    def test_identical_is_no_change(self, base, pairs):
        assert classify_change(base, dedup_view(pairs)) is None

    def test_plan_change_is_major(self, base, pairs):
        assert classify_change(base, dedup_view(pairs[1:])) is ChangeKind.MAJOR
        assert assign_version(base, "d", ChangeKind.MAJOR) == "2.0.0"

    def test_schema_change_is_minor(self, base, pairs):
        kept, _ = plan_pairs(pairs)
        schema = nested_relation_with_subject()
        wider = schema.with_columns(list(schema.columns) + [("col5", schema.columns[0][1])])
        new = compile_view(wider, kept, "analytics", created_at="t")
        assert classify_change(base, new) is ChangeKind.MINOR
        assert assign_version(base, "d", "minor") == "1.3.0"

    def test_sql_only_is_patch(self, base, pairs):
        new = dedup_view(pairs)
        new.sql = new.sql.replace("\n  ", "\n    ")
        assert classify_change(base, new) is ChangeKind.PATCH
        assert assign_version(base, "d", ChangeKind.PATCH) == "1.2.4"

    def test_parse_version(self):
        assert parse_version("10.0.7") == (10, 0, 7)
        for bad in ("1.0", "1.a.0", "v1.0.0"):
            with pytest.raises(ValueError):
                parse_version(bad)


class TestInputsDigest:
    def test_order_insensitive(self, dedup):
        catalog, assignments = dedup
        schema = nested_relation_with_subject()
        a = inputs_digest(schema, assignments, catalog.policies)
        b = inputs_digest(schema, list(reversed(assignments)), list(reversed(catalog.policies)))
        assert a == b and len(a) == 64

    def test_sensitive_to_inputs(self, dedup):
        catalog, assignments = dedup
        schema = nested_relation_with_subject()
        base = inputs_digest(schema, assignments, catalog.policies)
        assert inputs_digest(schema, assignments[:-1], catalog.policies) != base
        assert inputs_digest(schema, assignments, catalog.policies[:-1]) != base
        assert inputs_digest(nested_relation(), assignments, catalog.policies) != base

    def test_other_relations_ignored(self, dedup):
        from dataguard.policy import LabelAssignment

        catalog, assignments = dedup
        schema = nested_relation_with_subject()
        extra = assignments + [LabelAssignment("other", parse_field_path("$.x"), "label_p1")]
        assert inputs_digest(schema, extra, catalog.policies) == inputs_digest(schema, assignments, catalog.policies)
