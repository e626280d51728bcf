"""In-memory execution of masking plans over nested relations.

Values are plain Python: ``None`` for NULL, scalars for atomic types, dicts
for structs and maps (maps keep insertion order), lists for arrays.

Truth values follow SQL's three-valued logic with ``None`` as unknown. The
places where a decision is made resolve unknown the fail-closed way:

* a keep-condition protects data only when it is true;
* a selector (row filter or element filter) leaves data out of scope only
  when it is false, so an unknown selector still addresses the data.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import numpy as np

from .compiler import MaskStep, StepKind, ViewDefinition
from .conditions import (
    SELF,
    AttrClass,
    And,
    Condition,
    Const,
    Not,
    Or,
    Predicate,
    conjunctive_consents,
)
from .consent import ConsentBinding, SnapshotStore
from .errors import EvaluationError, PathTypeMismatch, ResolutionError, SchemaMismatch, UnboundAttribute
from .paths import Deref, FieldPath, Filter, Unnest, UnnestKind, parse_field_path, parse_relative_path, resolve_operators
from .schema import FLOAT_TYPES, INTEGER_TYPES, STRING_TYPES, Kind, RelationSchema, SchemaType

# ---------------------------------------------------------------------------
# Values and relations


def conform(value: Any, typ: SchemaType, where: str = "value") -> Any:
    """Check ``value`` against ``typ`` and normalize it (maps from JSON, ints for doubles)."""
    if value is None:
        return None
    if typ.kind is Kind.ATOMIC:
        return _conform_atomic(value, typ.atomic_name, where)
    if typ.kind is Kind.STRUCT:
        if not isinstance(value, Mapping):
            raise SchemaMismatch(f"{where}: expected {typ}, got {type(value).__name__}")
        extra = set(value) - set(typ.field_names())
        if extra:
            raise SchemaMismatch(f"{where}: unexpected fields {sorted(extra)} for {typ}")
        return {name: conform(value.get(name), ftype, f"{where}.{name}") for name, ftype in typ.fields}
    if typ.kind is Kind.ARRAY:
        if not isinstance(value, (list, tuple)):
            raise SchemaMismatch(f"{where}: expected {typ}, got {type(value).__name__}")
        return [conform(v, typ.element, f"{where}[{i}]") for i, v in enumerate(value)]
    if isinstance(value, Mapping):
        pairs = list(value.items())
    elif isinstance(value, (list, tuple)) and all(isinstance(p, (list, tuple)) and len(p) == 2 for p in value):
        pairs = [tuple(p) for p in value]
    else:
        raise SchemaMismatch(f"{where}: expected {typ}, got {type(value).__name__}")
    out = {}
    for k, v in pairs:
        key = _conform_key(k, typ.key, where)
        if key in out:
            raise SchemaMismatch(f"{where}: duplicate map key {key!r}")
        out[key] = conform(v, typ.value, f"{where}[{key!r}]")
    return out


def _conform_key(key, typ: SchemaType, where: str):
    if key is None:
        raise SchemaMismatch(f"{where}: map keys cannot be NULL")
    if isinstance(key, str) and typ.atomic_name in INTEGER_TYPES:
        try:
            key = int(key)
        except ValueError:
            raise SchemaMismatch(f"{where}: map key {key!r} is not {typ}") from None
    elif isinstance(key, str) and typ.atomic_name in FLOAT_TYPES:
        try:
            key = float(key)
        except ValueError:
            raise SchemaMismatch(f"{where}: map key {key!r} is not {typ}") from None
    elif isinstance(key, str) and typ.atomic_name == "BOOLEAN" and key in ("true", "false"):
        key = key == "true"
    return _conform_atomic(key, typ.atomic_name, where)


def _conform_atomic(value, name: str, where: str):
    if name in INTEGER_TYPES:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise SchemaMismatch(f"{where}: expected {name}, got {value!r}")
        return int(value)
    if name in FLOAT_TYPES:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise SchemaMismatch(f"{where}: expected {name}, got {value!r}")
        return float(value)
    if name == "BOOLEAN":
        if not isinstance(value, (bool, np.bool_)):
            raise SchemaMismatch(f"{where}: expected BOOLEAN, got {value!r}")
        return bool(value)
    if name in STRING_TYPES or name == "BINARY":
        if not isinstance(value, str):
            raise SchemaMismatch(f"{where}: expected {name}, got {value!r}")
        return value
    # TIMESTAMP / DATE: ISO text or epoch numbers
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise SchemaMismatch(f"{where}: expected {name}, got {value!r}")
    return value


def encode_value(value: Any, typ: SchemaType) -> Any:
    """JSON-ready form; maps with non-string keys become lists of pairs."""
    if value is None or typ.kind is Kind.ATOMIC:
        return value
    if typ.kind is Kind.STRUCT:
        return {name: encode_value(value.get(name), ftype) for name, ftype in typ.fields}
    if typ.kind is Kind.ARRAY:
        return [encode_value(v, typ.element) for v in value]
    if typ.key.atomic_name in STRING_TYPES:
        return {k: encode_value(v, typ.value) for k, v in value.items()}
    return [[k, encode_value(v, typ.value)] for k, v in value.items()]


@dataclass
class Relation:
    """A schema plus rows; each row is a dict keyed by column name."""

    schema: RelationSchema
    rows: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_records(cls, schema: RelationSchema, records: Iterable[Mapping]) -> Relation:
        rows = []
        row_type = schema.row_type()
        for i, rec in enumerate(records):
            if not isinstance(rec, Mapping):
                raise SchemaMismatch(f"row {i}: expected an object, got {type(rec).__name__}")
            rows.append(conform(rec, row_type, f"row {i}"))
        return cls(schema, rows)

    def to_records(self) -> list[dict]:
        row_type = self.schema.row_type()
        return [encode_value(r, row_type) for r in self.rows]

    def validate(self) -> None:
        """Raise :class:`SchemaMismatch` unless every row conforms to the schema."""
        row_type = self.schema.row_type()
        for i, r in enumerate(self.rows):
            if list(r) != self.schema.column_names:
                raise SchemaMismatch(f"row {i}: columns {list(r)} do not match {self.schema.column_names}")
            conform(r, row_type, f"row {i}")

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def read_jsonl(path: str | Path, schema: RelationSchema) -> Relation:
    with open(path) as fh:
        return Relation.from_records(schema, (json.loads(line) for line in fh if line.strip()))


def write_jsonl(rel: Relation, path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in rel.to_records():
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# Conditions


def _like_regex(pattern: str) -> re.Pattern:
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out) + r"\Z", re.DOTALL)


_like_cache = lru_cache(maxsize=256)(_like_regex)


def _compare(op: str, a, b):
    if a is None or b is None:
        return None
    if isinstance(a, bool) != isinstance(b, bool) and op != "=" and op != "!=":
        raise EvaluationError(f"cannot compare {a!r} {op} {b!r}")
    try:
        if op == "=":
            return a == b
        if op == "!=":
            return a != b
        if op == "<":
            return a < b
        if op == ">":
            return a > b
        if op == "<=":
            return a <= b
        return a >= b
    except TypeError:
        raise EvaluationError(f"cannot compare {a!r} {op} {b!r}") from None


def eval_predicate(pred: Predicate, value):
    """Three-valued truth of one predicate given its attribute's value."""
    op = pred.op
    if op == "IS NULL":
        return value is None
    if op == "BETWEEN":
        lo = _compare(">=", value, pred.values[0])
        hi = _compare("<=", value, pred.values[1])
        return _and3([lo, hi])
    if op == "IN":
        if value is None:
            return None
        results = [_compare("=", value, v) for v in pred.values]
        return _or3(results)
    if op == "LIKE":
        if value is None:
            return None
        if not isinstance(value, str):
            raise EvaluationError(f"LIKE applies to strings, got {value!r}")
        return _like_cache(pred.values[0]).match(value) is not None
    return _compare(op, value, pred.values[0])


def _and3(results) -> bool | None:
    unknown = False
    for r in results:
        if r is False:
            return False
        if r is None:
            unknown = True
    return None if unknown else True


def _or3(results) -> bool | None:
    unknown = False
    for r in results:
        if r is True:
            return True
        if r is None:
            unknown = True
    return None if unknown else False


def eval3(cond: Condition, lookup: Callable[[Predicate], Any]) -> bool | None:
    """Evaluate with SQL three-valued logic; ``lookup`` returns a predicate's attribute value."""
    if isinstance(cond, Predicate):
        return eval_predicate(cond, lookup(cond))
    if isinstance(cond, Const):
        return cond.value
    if isinstance(cond, Not):
        r = eval3(cond.item, lookup)
        return None if r is None else not r
    if isinstance(cond, And):
        return _and3(eval3(c, lookup) for c in cond.items)
    if isinstance(cond, Or):
        return _or3(eval3(c, lookup) for c in cond.items)
    raise EvaluationError(f"not a condition: {cond!r}")


@dataclass
class SubjectConsents:
    """Consent lookups for one data subject against a query-bound snapshot set."""

    binding: ConsentBinding
    subject_id: Any

    def has(self, consent_name: str) -> bool:
        return self.binding.has_consent(consent_name, self.subject_id)


def make_lookup(bindings: Mapping[str, Any], consent_ctx: SubjectConsents | None = None):
    """Attribute resolver: consents from the context, everything else from ``bindings``."""

    def lookup(pred: Predicate):
        name = pred.attribute
        if pred.attr_class is AttrClass.CONSENT and consent_ctx is not None:
            return consent_ctx.has(name)
        if name in bindings:
            return bindings[name]
        raise UnboundAttribute(name)

    return lookup


def eval_condition(cond: Condition, bindings: Mapping[str, Any], consent_ctx: SubjectConsents | None = None) -> bool:
    """Truth of ``cond`` with unknown collapsed to false."""
    return eval3(cond, make_lookup(bindings, consent_ctx)) is True


def element_lookup(element):
    """Resolver for a filter's ``@`` references against one collection element."""

    def lookup(pred: Predicate):
        if pred.attribute == SELF:
            return element
        if element is None:
            return None
        return element.get(pred.attribute)

    return lookup


# ---------------------------------------------------------------------------
# MASK_FIELD_IF


def _compile_ops(ops: tuple, typ: SchemaType) -> Callable[[Any], Any]:
    if not ops:
        return lambda value: None
    op = ops[0]
    if isinstance(op, Deref):
        name = op.name
        sub = _compile_ops(ops[1:], typ.field_type(name))

        def deref(value):
            if value is None:
                return None
            out = dict(value)
            out[name] = sub(value.get(name))
            return out

        return deref
    if not isinstance(op, Unnest):
        raise PathTypeMismatch(f"unexpected operator {op.render()} in a cell path")
    rest = ops[1:]
    flt = None
    if rest and isinstance(rest[0], Filter):
        flt = rest[0].condition
        rest = rest[1:]
    if op.kind is UnnestKind.KEY:
        return lambda value: None if value is None else {}
    elem_type = typ.element if op.kind is UnnestKind.ITEM else typ.value
    sub = _compile_ops(rest, elem_type) if rest else None

    def addressed(el) -> bool:
        return flt is None or eval3(flt, element_lookup(el)) is not False

    if op.kind is UnnestKind.ITEM:

        def items(value):
            if value is None:
                return None
            out = []
            for el in value:
                if not addressed(el):
                    out.append(el)
                elif sub is not None:
                    out.append(sub(el))
            return out

        return items

    def values(value):
        if value is None:
            return None
        return {k: (v if not addressed(v) else (sub(v) if sub is not None else None)) for k, v in value.items()}

    return values


@lru_cache(maxsize=1024)
def _masker_for(path_text: str, attr_type: SchemaType) -> Callable[[Any], Any]:
    if path_text.lstrip().startswith("$"):
        fp = parse_field_path(path_text)
        if fp.row_selector is not None or fp.root_attribute is None:
            raise PathTypeMismatch(f"{path_text!r} is not a path inside an attribute")
        ops = fp.cell_operators()
    else:
        ops = parse_relative_path(path_text)
    return make_masker(ops, attr_type)


def make_masker(ops, attr_type: SchemaType) -> Callable[[Any], Any]:
    """Compile the rewrite that masks whatever ``ops`` addresses inside an attribute."""
    ops = tuple(ops)
    try:
        resolve_operators(attr_type, ops)
    except ResolutionError as exc:
        raise PathTypeMismatch(str(exc)) from None
    return _compile_ops(ops, attr_type)


def mask_field_if(cond, attr, path, attr_type: SchemaType):
    """Return ``attr`` with the data at ``path`` masked when ``cond`` holds.

    ``path`` is relative to the attribute (``"field21"``, ``"[item].[?(@.f='x')]"``)
    or a full path starting at the attribute (``"$.col3"``). A NULL ``cond``
    masks, matching the fail-closed reading of unknown conditions. The input
    is never modified.
    """
    if cond is False:
        return attr
    if isinstance(path, str):
        masker = _masker_for(path, attr_type)
    else:
        masker = make_masker(path, attr_type)
    return masker(attr)


def bind_mask_field_if(path, attr_type: SchemaType) -> Callable[[Any, Any], Any]:
    """``MASK_FIELD_IF`` with its path compiled once, the way an engine initializes a UDF per query."""
    masker = _masker_for(path, attr_type) if isinstance(path, str) else make_masker(path, attr_type)

    def udf(cond, attr):
        if cond is False:
            return attr
        return masker(attr)

    return udf


# ---------------------------------------------------------------------------
# Plan execution


@dataclass
class ApplyStats:
    rows_in: int = 0
    rows_out: int = 0
    masked: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"rows_in": self.rows_in, "rows_out": self.rows_out, "masked": dict(self.masked)}


def subject_ids(rel: Relation) -> np.ndarray:
    """Subject ids as int64 with -1 standing in for NULL."""
    col = rel.schema.subject_id_column
    if col is None:
        return np.full(len(rel.rows), -1, dtype=np.int64)
    return np.fromiter((-1 if r[col] is None else r[col] for r in rel.rows), dtype=np.int64, count=len(rel.rows))


def keep_mask(cond: Condition, rel: Relation, binding: ConsentBinding | None, ids: np.ndarray) -> np.ndarray:
    """Per-row truth of a keep-condition, vectorized for plain consent conjunctions."""
    n = len(rel.rows)
    if isinstance(cond, Const):
        return np.full(n, cond.value, dtype=bool)
    cs = conjunctive_consents(cond)
    if cs and binding is not None:
        out = np.ones(n, dtype=bool)
        for name in sorted(cs):
            out &= binding.has_consent_many(name, ids)
        return out
    col = rel.schema.subject_id_column
    out = np.empty(n, dtype=bool)
    for i, row in enumerate(rel.rows):
        ctx = SubjectConsents(binding, row[col] if col else None) if binding is not None else None
        out[i] = eval_condition(cond, row, ctx)
    return out


def _selector_scope(selector: Condition | None, rows: list[dict]) -> np.ndarray:
    """Rows a row selector addresses: every row whose selector is not false."""
    if selector is None:
        return np.ones(len(rows), dtype=bool)
    return np.fromiter(
        (eval3(selector, make_lookup(row)) is not False for row in rows), dtype=bool, count=len(rows)
    )


def apply_plan(
    view: ViewDefinition,
    rel: Relation,
    access_time=None,
    store: SnapshotStore | None = None,
    *,
    binding: ConsentBinding | None = None,
    stats: ApplyStats | None = None,
) -> Relation:
    """Run ``view``'s plan over ``rel``.

    Every condition and selector is evaluated against the input row, as SQL
    evaluates expressions over the base table; masks on one column then
    apply in plan order. One access time is bound for the whole call.
    """
    if rel.schema != view.schema:
        raise SchemaMismatch(f"relation schema {rel.schema.name!r} does not match view of {view.relation!r}")
    if binding is None and store is not None:
        binding = ConsentBinding(store, access_time)
    if binding is None and any(s.consents for s in view.plan):
        raise EvaluationError("the view checks consents but no consent store was given")
    rows = rel.rows
    ids = subject_ids(rel)
    alive = np.ones(len(rows), dtype=bool)
    column_steps: list[tuple[MaskStep, np.ndarray]] = []
    for step in view.plan:
        keep = keep_mask(step.condition, rel, binding, ids)
        scope = _selector_scope(step.selector, rows)
        hit = scope & ~keep
        if step.kind is StepKind.ROW_FILTER:
            alive &= ~hit
        else:
            column_steps.append((step, hit))
        if stats is not None:
            key = f"{step.policy_id}@{step.path}"
            stats.masked[key] = stats.masked.get(key, 0) + int(hit.sum())
    maskers = [make_masker(step.relative_ops, view.schema.column_type(step.column)) for step, _ in column_steps]
    out_rows = []
    for i in np.flatnonzero(alive):
        row = rows[i]
        new = None
        for (step, hit), masker in zip(column_steps, maskers):
            if hit[i]:
                if new is None:
                    new = dict(row)
                new[step.column] = masker(new[step.column])
        out_rows.append(new if new is not None else row)
    if stats is not None:
        stats.rows_in = len(rows)
        stats.rows_out = len(out_rows)
    return Relation(rel.schema, out_rows)


def values_equal(a, b) -> bool:
    """Structural equality that treats NaN as equal to NaN."""
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    if isinstance(a, dict) and isinstance(b, dict):
        return list(a) == list(b) and all(values_equal(a[k], b[k]) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if a is None or b is None:
        return a is b
    return type(a) is type(b) and a == b
