"""Field paths: operator sequences addressing rows, columns, cells and sub-cell elements.

Text form::

    $                                 the whole relation
    $.col1                            a column
    $.[?(@.col1='def')]               a row selector
    $.[?(@.col1='ghj')].col2          a column inside selected rows
    $.col3.[item].[?(@.field31='s1')] array elements matching a filter
    $.col4.[value]                    every value of a map

A filter is allowed directly after ``$`` (row selector) or directly after an
``[item]``/``[value]`` unnest; ``[key]`` must end the path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Union

from .conditions import (
    SELF,
    AttrClass,
    Condition,
    TokenStream,
    attributes,
    parse_filter_condition,
    render_condition,
)
from .errors import ParseError, ResolutionError
from .schema import Kind, RelationSchema, SchemaType

UNNEST_KINDS = ("item", "key", "value")


@dataclass(frozen=True)
class Root:
    def render(self) -> str:
        return "$"


@dataclass(frozen=True)
class Deref:
    name: str

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class Filter:
    condition: Condition

    def render(self) -> str:
        return "[?(" + render_condition(self.condition) + ")]"


class UnnestKind(str, enum.Enum):
    ITEM = "item"
    KEY = "key"
    VALUE = "value"


@dataclass(frozen=True)
class Unnest:
    kind: UnnestKind

    def render(self) -> str:
        return f"[{self.kind.value}]"


Operator = Union[Root, Deref, Filter, Unnest]
ROOT = Root()


@dataclass(frozen=True)
class FieldPath:
    operators: tuple

    def __post_init__(self):
        ops = tuple(self.operators)
        object.__setattr__(self, "operators", ops)
        if not ops or not isinstance(ops[0], Root):
            raise ValueError("a field path starts with the root operator")
        if any(isinstance(op, Root) for op in ops[1:]):
            raise ValueError("the root operator may only appear first")

    def __str__(self) -> str:
        return render_field_path(self)

    def __len__(self) -> int:
        return len(self.operators)

    @property
    def tail(self) -> tuple:
        return self.operators[1:]

    @property
    def is_row_level(self) -> bool:
        """``$`` or ``$.[?(pred)]``: masking drops rows instead of rewriting cells."""
        return all(not isinstance(op, (Deref, Unnest)) for op in self.operators)

    @property
    def row_selector(self) -> Condition | None:
        if len(self.operators) > 1 and isinstance(self.operators[1], Filter):
            return self.operators[1].condition
        return None

    @property
    def root_attribute(self) -> str | None:
        for op in self.operators:
            if isinstance(op, Deref):
                return op.name
        return None

    def cell_operators(self) -> tuple:
        """Operators after the root attribute (what ``MASK_FIELD_IF`` walks)."""
        ops = self.operators
        for i, op in enumerate(ops):
            if isinstance(op, Deref):
                return ops[i + 1:]
        return ()

    def column_path(self) -> FieldPath:
        """The path with any leading row selector removed (``$.col2...``)."""
        if self.row_selector is None:
            return self
        return FieldPath((ROOT,) + self.operators[2:])

    def is_prefix_of(self, other: FieldPath) -> bool:
        n = len(self.operators)
        return n <= len(other.operators) and other.operators[:n] == self.operators

    def child(self, op: Operator) -> FieldPath:
        return FieldPath(self.operators + (op,))


def render_field_path(path: FieldPath) -> str:
    return ".".join(op.render() for op in path.operators)


def render_operators(ops) -> str:
    """Render a bare operator sequence (no ``$``), e.g. ``[item].[?(@.f='s1')]``."""
    return ".".join(op.render() for op in ops)


def parse_field_path(text: str) -> FieldPath:
    """Parse field-path text into a :class:`FieldPath`.

    Raises :class:`~dataguard.errors.ParseError` with the failing position on
    malformed input.
    """
    if not text or not text.strip():
        raise ParseError("empty field path", text, 0, "'$'")
    s = TokenStream(text)
    if not s.at("$", "punct"):
        s.fail(f"unexpected {s.describe(s.current)}", "'$' as the first operator")
    s.advance()
    ops = [ROOT] + _parse_tail(s)
    if s.current.kind != "end":
        s.fail(f"unexpected {s.describe(s.current)}", "'.' or end of path")
    return FieldPath(tuple(ops))


def parse_relative_path(text: str) -> tuple:
    """Parse an operator sequence that is relative to an attribute.

    Accepts ``""``, ``"field21"``, ``"[item].[?(@.field31='s1')]"``.
    """
    text = text.strip()
    if not text:
        return ()
    s = TokenStream("." + text)
    ops = _parse_tail(s)
    if s.current.kind != "end":
        s.fail(f"unexpected {s.describe(s.current)}", "'.' or end of path")
    return tuple(ops)


def _parse_tail(s: TokenStream) -> list:
    ops = []
    while s.at(".", "punct"):
        s.advance()
        tok = s.current
        if tok.kind == "punct" and tok.text == "$":
            s.fail("root operator may only appear first", "name or '['")
        if tok.kind == "name":
            s.advance()
            ops.append(Deref(tok.text))
            continue
        s.expect("[", "name or '['")
        if s.at("?", "punct"):
            s.advance()
            s.expect("(")
            cond = parse_filter_condition(s)
            s.expect(")")
            s.expect("]")
            ops.append(Filter(cond))
            continue
        tok = s.current
        if tok.kind != "name" or tok.text not in UNNEST_KINDS:
            s.fail(f"unknown unnest keyword {s.describe(tok)}", "item, key or value")
        s.advance()
        s.expect("]")
        ops.append(Unnest(UnnestKind(tok.text)))
    return ops


# ---------------------------------------------------------------------------
# Resolution


@dataclass(frozen=True)
class PathBinding:
    path: FieldPath
    resolved_type: SchemaType
    root_attribute: str | None

    @property
    def is_row_level(self) -> bool:
        return self.path.is_row_level


def resolve_path(schema: RelationSchema, path: FieldPath) -> PathBinding:
    """Walk ``path`` over ``schema`` and return the addressed element's type.

    Raises :class:`~dataguard.errors.ResolutionError` naming the first
    operator that does not fit.
    """
    row_type = schema.row_type()
    typ = resolve_operators(row_type, path.tail, at_root=True)
    return PathBinding(path, typ, path.root_attribute)


def resolve_operators(typ: SchemaType, ops, at_root: bool = False) -> SchemaType:
    """Type reached by applying ``ops`` to a value of type ``typ``.

    ``at_root`` means ``typ`` is the relation row, so a leading filter is a
    row selector.
    """
    prev = "root" if at_root else None
    ops = tuple(ops)
    for i, op in enumerate(ops):
        if isinstance(op, Deref):
            if typ.kind is not Kind.STRUCT:
                raise ResolutionError(f"cannot dereference {op.name!r} on {typ}", op, typ)
            ftype = typ.field_type(op.name)
            if ftype is None:
                raise ResolutionError(f"no field {op.name!r} in {typ}", op, typ)
            typ = ftype
            prev = "deref"
        elif isinstance(op, Unnest):
            if op.kind is UnnestKind.ITEM:
                if typ.kind is not Kind.ARRAY:
                    raise ResolutionError(f"[item] applies to arrays, not {typ}", op, typ)
                typ = typ.element
            else:
                if typ.kind is not Kind.MAP:
                    raise ResolutionError(f"[{op.kind.value}] applies to maps, not {typ}", op, typ)
                typ = typ.key if op.kind is UnnestKind.KEY else typ.value
            prev = op.kind.value
        elif isinstance(op, Filter):
            if prev not in ("root", "item", "value"):
                where = "a map key" if prev == "key" else ("the start of a relative path" if prev is None else "a dereference")
                raise ResolutionError(
                    f"filter {op.render()} must follow the root or an [item]/[value] unnest, not {where}", op, typ
                )
            _check_filter(op, typ)
            prev = "filter"
        else:
            raise ResolutionError(f"unexpected operator {op!r}", op, typ)
        if prev == "key" and i != len(ops) - 1:
            raise ResolutionError("[key] must be the last operator of a path", op, typ)
    return typ


def _check_filter(op: Filter, typ: SchemaType) -> None:
    for name in attributes(op.condition, AttrClass.DATA):
        if name == SELF:
            if typ.kind is not Kind.ATOMIC:
                raise ResolutionError(f"'@' in {op.render()} needs an atomic element, not {typ}", op, typ)
        elif typ.kind is not Kind.STRUCT or typ.field_type(name) is None:
            raise ResolutionError(f"filter {op.render()} references unknown attribute {name!r} of {typ}", op, typ)
        elif not typ.field_type(name).is_atomic:
            raise ResolutionError(f"filter {op.render()} compares non-atomic attribute {name!r}", op, typ)
    extra = attributes(op.condition) - attributes(op.condition, AttrClass.DATA)
    if extra:
        raise ResolutionError(f"filter {op.render()} may only reference '@' attributes", op, typ)


def extract_field_paths(schema: RelationSchema, max_depth: int | None = None) -> list[FieldPath]:
    """Every dereference/unnest-only path of ``schema`` (the auto-labelable fields)."""
    out: list[FieldPath] = []

    def visit(prefix: tuple, typ: SchemaType, depth: int):
        out.append(FieldPath(prefix))
        if max_depth is not None and depth >= max_depth:
            return
        if typ.kind is Kind.STRUCT:
            for name, ftype in typ.fields:
                visit(prefix + (Deref(name),), ftype, depth + 1)
        elif typ.kind is Kind.ARRAY:
            visit(prefix + (Unnest(UnnestKind.ITEM),), typ.element, depth + 1)
        elif typ.kind is Kind.MAP:
            out.append(FieldPath(prefix + (Unnest(UnnestKind.KEY),)))
            visit(prefix + (Unnest(UnnestKind.VALUE),), typ.value, depth + 1)

    for name, typ in schema.columns:
        visit((ROOT, Deref(name)), typ, 1)
    return out


def iter_operators(path: FieldPath) -> Iterator[Operator]:
    return iter(path.operators)
