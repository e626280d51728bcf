"""Compile pruned (path, policy) pairs into a data-masking view.

The same list of :class:`MaskStep` objects drives both outputs: the SQL text
(for engines) and the executable plan (for :mod:`dataguard.evaluator`).
Row-level paths become WHERE conjuncts; everything else becomes a
``MASK_FIELD_IF`` call on the path's root attribute. Masks on one column
nest, so they apply in plan order.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping

from .conditions import (
    AttrClass,
    And,
    Const,
    Condition,
    Not,
    Or,
    Predicate,
    consents as condition_consents,
    conjunctive_consents,
    is_positive_consent,
    parse_condition,
    parse_element_condition,
    predicates,
    render_condition,
    render_literal,
    render_predicate,
)
from .errors import MissingSubjectId, ResolutionError, SchemaError, UnsupportedCondition
from .paths import Deref, FieldPath, Filter, Unnest, UnnestKind, parse_field_path, render_field_path, resolve_operators, resolve_path
from .policy import LabelAssignment, Policy
from .schema import RelationSchema


class StepKind(str, enum.Enum):
    ROW_FILTER = "ROW_FILTER"
    COLUMN_MASK = "COLUMN_MASK"


class MaskTarget(str, enum.Enum):
    """What the masking function does to an addressed element."""

    DROP_ROW = "drop_row"
    NULL = "null"
    REMOVE_ELEMENT = "remove_element"
    REMOVE_PAIR = "remove_pair"
    NULL_VALUE = "null_value"


def mask_target(path: FieldPath) -> MaskTarget:
    if path.is_row_level:
        return MaskTarget.DROP_ROW
    for op in reversed(path.cell_operators()):
        if isinstance(op, Filter):
            continue
        if isinstance(op, Unnest):
            return {
                UnnestKind.ITEM: MaskTarget.REMOVE_ELEMENT,
                UnnestKind.KEY: MaskTarget.REMOVE_PAIR,
                UnnestKind.VALUE: MaskTarget.NULL_VALUE,
            }[op.kind]
        return MaskTarget.NULL
    return MaskTarget.NULL


@dataclass(frozen=True)
class MaskStep:
    """One masking action of a plan.

    ``condition`` is the keep-condition: the addressed data survives for a
    row exactly when it evaluates to true.
    """

    kind: StepKind
    policy_id: str
    path: FieldPath
    condition: Condition
    column: str | None = None
    target: MaskTarget = MaskTarget.NULL

    @property
    def selector(self) -> Condition | None:
        return self.path.row_selector

    @property
    def column_path(self) -> FieldPath:
        return self.path.column_path()

    @property
    def relative_ops(self) -> tuple:
        return self.path.cell_operators()

    @property
    def consents(self) -> frozenset[str]:
        return condition_consents(self.condition)

    def to_json(self) -> dict:
        sel = self.selector
        return {
            "kind": self.kind.value,
            "policy": self.policy_id,
            "path": render_field_path(self.path),
            "column": self.column,
            "selector": render_condition(sel) if sel is not None else None,
            "condition": render_condition(self.condition),
            "target": self.target.value,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> MaskStep:
        return cls(
            StepKind(obj["kind"]),
            str(obj["policy"]),
            parse_field_path(obj["path"]),
            parse_condition(obj["condition"]),
            obj.get("column"),
            MaskTarget(obj["target"]),
        )


def step_sort_key(step: MaskStep, schema: RelationSchema):
    """Row filters first, then column masks by (column position, path text, policy id).

    Sorting by path text keeps every path directly after its ancestors, so a
    mask on a sub-element never runs before the mask on its container.
    """
    if step.kind is StepKind.ROW_FILTER:
        return (0, 0, render_field_path(step.path), step.policy_id)
    return (1, schema.position(step.column), render_field_path(step.path), step.policy_id)


def make_step(schema: RelationSchema, path: FieldPath, policy: Policy) -> MaskStep:
    resolve_path(schema, path)
    kind = StepKind.ROW_FILTER if path.is_row_level else StepKind.COLUMN_MASK
    return MaskStep(kind, policy.id, path, policy.keep_condition, path.root_attribute, mask_target(path))


def canonical_order(schema: RelationSchema, pairs: Iterable[tuple[FieldPath, Policy]]) -> list[tuple[FieldPath, Policy]]:
    """Order (path, policy) pairs the same way compiled plans order their steps."""
    return [
        (p, pol)
        for _, p, pol in sorted(
            ((step_sort_key(make_step(schema, p, pol), schema), p, pol) for p, pol in pairs),
            key=lambda t: t[0],
        )
    ]


# ---------------------------------------------------------------------------
# SQL rendering


def _sql_string(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


class _SqlWriter:
    def __init__(self, subject_column: str | None):
        self.subject_column = subject_column

    def consent_call(self, names) -> str:
        joined = ",".join(sorted(names))
        return f"HAS_USER_CONSENT({_sql_string(joined)}, {self.subject_column}, CURRENT_TIMESTAMP())"

    def leaf(self, pred: Predicate) -> tuple[str, int]:
        # consent attributes are booleans looked up by the UDF; only boolean tests compile
        if pred.attr_class is not AttrClass.CONSENT:
            raise UnsupportedCondition(
                f"attribute {pred.attribute!r} is a {pred.attr_class.value} attribute; only consents compile to SQL"
            )
        call = self.consent_call([pred.attribute])
        if is_positive_consent(pred):
            return call, 4
        vals = pred.values
        if pred.op == "IS NULL":
            return "FALSE", 4
        if pred.op in ("=", "!=") and isinstance(vals[0], bool):
            return "NOT " + call, 3
        if pred.op == "IN" and all(isinstance(v, bool) for v in vals):
            has_t, has_f = True in vals, False in vals
            if has_t and has_f:
                return "TRUE", 4
            return (call, 4) if has_t else ("NOT " + call, 3)
        raise UnsupportedCondition(f"consent predicate {render_condition(pred)!r} is not a boolean test")

    def render(self, cond: Condition) -> tuple[str, int]:
        """SQL text plus its precedence (1 OR, 2 AND, 3 NOT, 4 atom)."""
        if isinstance(cond, Const):
            return ("TRUE" if cond.value else "FALSE"), 4
        if isinstance(cond, Predicate):
            return self.leaf(cond)
        cs = conjunctive_consents(cond)
        if cs:
            return self.consent_call(cs), 4
        if isinstance(cond, Not):
            text, prec = self.render(cond.item)
            return "NOT " + (text if prec >= 3 else f"({text})"), 3
        if isinstance(cond, And):
            grouped = [p.attribute for p in cond.items if isinstance(p, Predicate) and is_positive_consent(p)]
            parts = [self.consent_call(grouped)] if grouped else []
            for item in cond.items:
                if isinstance(item, Predicate) and is_positive_consent(item):
                    continue
                text, prec = self.render(item)
                parts.append(text if prec > 2 else f"({text})")
            return " AND ".join(parts), 2
        parts = []
        for item in cond.items:
            text, prec = self.render(item)
            parts.append(text if prec > 1 else f"({text})")
        return " OR ".join(parts), 1

    def negated(self, cond: Condition) -> str:
        text, prec = self.render(cond)
        if prec == 3 and text.startswith("NOT "):
            # NOT NOT x is x under three-valued logic as well
            return text[4:]
        return "NOT " + (text if prec >= 3 else f"({text})")


def _selector_sql(cond: Condition) -> str:
    return render_condition(cond, leaf=lambda p: render_predicate(p, p.attribute, spaced=True), spaced=True)


def render_sql(schema: RelationSchema, steps: list[MaskStep]) -> str:
    w = _SqlWriter(schema.subject_id_column)
    where = []
    column_exprs = {name: name for name in schema.column_names}
    for step in steps:
        if step.kind is StepKind.ROW_FILTER:
            keep = w.render(step.condition)[0]
            if step.selector is None:
                where.append(keep)
            else:
                where.append(f"(NOT ({_selector_sql(step.selector)}) OR {keep})")
            continue
        mask_cond = w.negated(step.condition)
        if step.selector is not None:
            mask_cond = f"({_selector_sql(step.selector)}) AND {mask_cond}"
        inner = column_exprs[step.column]
        column_exprs[step.column] = (
            f"MASK_FIELD_IF({mask_cond}, {inner}, {_sql_string(render_field_path(step.column_path))})"
        )
    items = [expr if expr == name else f"{expr} AS {name}" for name, expr in column_exprs.items()]
    sql = "SELECT " + ",\n  ".join(items) + f"\nFROM {schema.name}"
    if where:
        sql += "\nWHERE " + "\n  AND ".join(where)
    return sql + ";\n"


# ---------------------------------------------------------------------------
# View definitions


@dataclass
class ViewDefinition:
    relation: str
    purpose: str
    version: str
    sql: str
    plan: list[MaskStep]
    schema: RelationSchema
    created_at: str = ""
    inputs_digest: str = ""
    pruned: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def view_id(self) -> str:
        return f"{self.relation}:{self.purpose}:{self.version}"

    @property
    def row_filters(self) -> list[MaskStep]:
        return [s for s in self.plan if s.kind is StepKind.ROW_FILTER]

    @property
    def column_masks(self) -> list[MaskStep]:
        return [s for s in self.plan if s.kind is StepKind.COLUMN_MASK]

    def to_json(self) -> dict:
        return {
            "relation": self.relation,
            "purpose": self.purpose,
            "version": self.version,
            "sql": self.sql,
            "plan": [s.to_json() for s in self.plan],
            "created_at": self.created_at,
            "inputs_digest": self.inputs_digest,
            "schema": self.schema.to_json(),
            "pruned": [list(p) for p in self.pruned],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> ViewDefinition:
        return cls(
            obj["relation"],
            obj["purpose"],
            obj["version"],
            obj["sql"],
            [MaskStep.from_json(s) for s in obj["plan"]],
            RelationSchema.from_json(obj["schema"]),
            obj.get("created_at", ""),
            obj.get("inputs_digest", ""),
            [tuple(p) for p in obj.get("pruned", [])],
            list(obj.get("warnings", [])),
        )


def compile_view(
    relation: RelationSchema,
    pruned: Iterable[tuple[FieldPath, Policy]],
    purpose: str,
    *,
    version: str = "1.0.0",
    created_at: str | None = None,
    inputs_digest: str = "",
    dropped: Iterable[tuple[FieldPath, Policy]] = (),
) -> ViewDefinition:
    """Build SQL and plan for the retained pairs of one (relation, purpose).

    ``dropped`` lists the pairs the planner removed; they are recorded for
    reporting only.
    """
    steps = []
    for path, policy in pruned:
        for pred in predicates(policy.condition):
            if pred.attr_class is not AttrClass.CONSENT:
                raise UnsupportedCondition(
                    f"policy {policy.id!r} uses {pred.attr_class.value} attribute {pred.attribute!r}; "
                    "only consent conditions compile"
                )
        if policy.consents and relation.subject_id_column is None:
            raise MissingSubjectId(
                f"policy {policy.id!r} needs consents but relation {relation.name!r} has no subject id column"
            )
        steps.append(make_step(relation, path, policy))
    steps.sort(key=lambda s: step_sort_key(s, relation))
    warnings = []
    if any(s.consents for s in steps):
        warnings.append(
            f"rows with NULL {relation.subject_id_column} are treated as not consenting"
        )
    if created_at is None:
        created_at = datetime.now(timezone.utc).isoformat()
    return ViewDefinition(
        relation.name,
        purpose,
        version,
        render_sql(relation, steps),
        steps,
        relation,
        created_at,
        inputs_digest,
        sorted((render_field_path(p), pol.id) for p, pol in dropped),
        warnings,
    )


def output_schema(view: ViewDefinition) -> RelationSchema:
    """Schema produced by running ``view``'s plan; every step keeps its column type."""
    columns = dict(view.schema.columns)
    for step in view.plan:
        if step.kind is StepKind.ROW_FILTER:
            resolve_path(view.schema, step.path)
            continue
        typ = columns.get(step.column)
        if typ is None:
            raise SchemaError(f"plan masks unknown column {step.column!r}")
        try:
            resolve_operators(typ, step.relative_ops)
        except ResolutionError as exc:
            raise SchemaError(f"step {step.policy_id} on {step.column}: {exc}") from None
    return view.schema.with_columns(list(columns.items()))


# ---------------------------------------------------------------------------
# Versioning


class ChangeKind(str, enum.Enum):
    MAJOR = "major"
    MINOR = "minor"
    PATCH = "patch"


def classify_change(previous: ViewDefinition | None, new: ViewDefinition) -> ChangeKind | None:
    """How ``new`` differs from ``previous``; None when nothing observable changed.

    A different plan is a masking-semantics change (major). An unchanged
    plan over a changed schema is additive (minor). Only the SQL text
    differing is a patch.
    """
    if previous is None:
        return ChangeKind.MAJOR
    if [s.to_json() for s in previous.plan] != [s.to_json() for s in new.plan]:
        return ChangeKind.MAJOR
    if previous.schema != new.schema:
        return ChangeKind.MINOR
    if previous.sql != new.sql:
        return ChangeKind.PATCH
    return None


def parse_version(text: str) -> tuple[int, int, int]:
    parts = text.split(".")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise ValueError(f"not a semantic version: {text!r}")
    return int(parts[0]), int(parts[1]), int(parts[2])


def assign_version(previous: ViewDefinition | None, next_inputs_digest: str, change_kind: ChangeKind | str | None) -> str:
    if previous is None:
        return "1.0.0"
    major, minor, patch = parse_version(previous.version)
    kind = ChangeKind(change_kind) if change_kind is not None else ChangeKind.PATCH
    if kind is ChangeKind.MAJOR:
        return f"{major + 1}.0.0"
    if kind is ChangeKind.MINOR:
        return f"{major}.{minor + 1}.0"
    return f"{major}.{minor}.{patch + 1}"


def inputs_digest(
    schema: RelationSchema,
    assignments: Iterable[LabelAssignment],
    policies: Iterable[Policy],
) -> str:
    """Stable hash of everything a view's compilation depends on."""
    payload = {
        "schema": schema.to_json(),
        "assignments": sorted(
            (a.relation, render_field_path(a.path), a.label) for a in assignments if a.relation == schema.name
        ),
        "policies": sorted((p.id, p.purpose, p.label, render_condition(p.condition), p.action.value) for p in policies),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
