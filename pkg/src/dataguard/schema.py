"""Nested relational schemas: atomic, struct, array and map types.

Types are immutable and can be built three ways: with the constructor
helpers (``atomic``, ``struct``, ``array``, ``map_of``), from a compact type
string such as ``"ARRAY<STRUCT<field31:VARCHAR, field32:DOUBLE>>"``, or from
the recursive ``{"kind": ...}`` JSON encoding used in schema files.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .errors import SchemaError

MAX_DEPTH = 64

INTEGER_TYPES = frozenset({"TINYINT", "SMALLINT", "INT", "INTEGER", "BIGINT"})
FLOAT_TYPES = frozenset({"FLOAT", "REAL", "DOUBLE", "DECIMAL"})
STRING_TYPES = frozenset({"VARCHAR", "STRING", "CHAR"})
ATOMIC_TYPES = INTEGER_TYPES | FLOAT_TYPES | STRING_TYPES | {"BOOLEAN", "TIMESTAMP", "DATE", "BINARY"}

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class Kind(enum.Enum):
    ATOMIC = "atomic"
    STRUCT = "struct"
    ARRAY = "array"
    MAP = "map"


@dataclass(frozen=True)
class SchemaType:
    kind: Kind
    atomic_name: str | None = None
    fields: tuple[tuple[str, SchemaType], ...] = ()
    element: SchemaType | None = None
    key: SchemaType | None = None
    value: SchemaType | None = None

    def __post_init__(self):
        if self.kind is Kind.ATOMIC:
            if self.atomic_name is None:
                raise SchemaError("atomic type needs a name")
            name = self.atomic_name.upper()
            if name not in ATOMIC_TYPES:
                raise SchemaError(f"unknown atomic type {self.atomic_name!r}")
            object.__setattr__(self, "atomic_name", name)
        elif self.kind is Kind.STRUCT:
            object.__setattr__(self, "fields", tuple((n, t) for n, t in self.fields))
            seen = set()
            for name, typ in self.fields:
                if not isinstance(typ, SchemaType):
                    raise SchemaError(f"field {name!r} has non-type {typ!r}")
                if not _NAME_RE.match(name):
                    raise SchemaError(f"invalid field name {name!r}")
                if name in seen:
                    raise SchemaError(f"duplicate struct field {name!r}")
                seen.add(name)
        elif self.kind is Kind.ARRAY:
            if not isinstance(self.element, SchemaType):
                raise SchemaError("array type needs an element type")
        elif self.kind is Kind.MAP:
            if not isinstance(self.key, SchemaType) or not isinstance(self.value, SchemaType):
                raise SchemaError("map type needs key and value types")
            if self.key.kind is not Kind.ATOMIC:
                raise SchemaError(f"map key must be atomic, got {self.key}")
        if self.depth > MAX_DEPTH:
            raise SchemaError(f"type nesting exceeds {MAX_DEPTH} levels")

    @property
    def depth(self) -> int:
        if self.kind is Kind.ATOMIC:
            return 0
        if self.kind is Kind.STRUCT:
            return 1 + max((t.depth for _, t in self.fields), default=0)
        if self.kind is Kind.ARRAY:
            return 1 + self.element.depth
        return 1 + max(self.key.depth, self.value.depth)

    @property
    def is_atomic(self) -> bool:
        return self.kind is Kind.ATOMIC

    def field_type(self, name: str) -> SchemaType | None:
        for n, t in self.fields:
            if n == name:
                return t
        return None

    def field_names(self) -> list[str]:
        return [n for n, _ in self.fields]

    def __str__(self) -> str:
        if self.kind is Kind.ATOMIC:
            return self.atomic_name
        if self.kind is Kind.STRUCT:
            return "STRUCT<" + ", ".join(f"{n}:{t}" for n, t in self.fields) + ">"
        if self.kind is Kind.ARRAY:
            return f"ARRAY<{self.element}>"
        return f"MAP<{self.key}, {self.value}>"

    def to_json(self) -> dict:
        if self.kind is Kind.ATOMIC:
            return {"kind": "atomic", "name": self.atomic_name}
        if self.kind is Kind.STRUCT:
            return {"kind": "struct", "fields": [{"name": n, "type": t.to_json()} for n, t in self.fields]}
        if self.kind is Kind.ARRAY:
            return {"kind": "array", "element": self.element.to_json()}
        return {"kind": "map", "key": self.key.to_json(), "value": self.value.to_json()}

    @classmethod
    def from_json(cls, obj: Any) -> SchemaType:
        if isinstance(obj, str):
            return parse_type(obj)
        if not isinstance(obj, Mapping) or "kind" not in obj:
            raise SchemaError(f"type encoding must be an object with 'kind': {obj!r}")
        try:
            kind = Kind(str(obj["kind"]).lower())
        except ValueError:
            raise SchemaError(f"unknown type kind {obj['kind']!r}") from None
        if kind is Kind.ATOMIC:
            return atomic(obj.get("name", ""))
        if kind is Kind.STRUCT:
            return struct([(f["name"], cls.from_json(f["type"])) for f in obj.get("fields", [])])
        if kind is Kind.ARRAY:
            return array(cls.from_json(obj["element"]))
        return map_of(cls.from_json(obj["key"]), cls.from_json(obj["value"]))


def atomic(name: str) -> SchemaType:
    return SchemaType(Kind.ATOMIC, atomic_name=name)


def struct(fields: Iterable[tuple[str, SchemaType]] | Mapping[str, SchemaType]) -> SchemaType:
    if isinstance(fields, Mapping):
        fields = fields.items()
    return SchemaType(Kind.STRUCT, fields=tuple(fields))


def array(element: SchemaType) -> SchemaType:
    return SchemaType(Kind.ARRAY, element=element)


def map_of(key: SchemaType, value: SchemaType) -> SchemaType:
    return SchemaType(Kind.MAP, key=key, value=value)


_TYPE_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_]*)|(.))")


def parse_type(text: str) -> SchemaType:
    """Parse a Hive-style type string, e.g. ``MAP<VARCHAR, ARRAY<BIGINT>>``."""
    tokens = [(m.group(1) or m.group(2), m.start(0)) for m in _TYPE_TOKEN.finditer(text) if (m.group(1) or m.group(2))]
    pos = 0

    def peek():
        return tokens[pos][0] if pos < len(tokens) else None

    def take(expected=None):
        nonlocal pos
        if pos >= len(tokens):
            raise SchemaError(f"unexpected end of type string {text!r}")
        tok = tokens[pos][0]
        if expected is not None and tok != expected:
            raise SchemaError(f"expected {expected!r} but found {tok!r} in type string {text!r}")
        pos += 1
        return tok

    def parse() -> SchemaType:
        name = take()
        upper = name.upper()
        if upper == "STRUCT":
            take("<")
            fields = []
            if peek() != ">":
                while True:
                    fname = take()
                    take(":")
                    fields.append((fname, parse()))
                    if peek() == ",":
                        take(",")
                        continue
                    break
            take(">")
            return struct(fields)
        if upper == "ARRAY":
            take("<")
            elem = parse()
            take(">")
            return array(elem)
        if upper == "MAP":
            take("<")
            k = parse()
            take(",")
            v = parse()
            take(">")
            return map_of(k, v)
        return atomic(name)

    result = parse()
    if pos != len(tokens):
        raise SchemaError(f"trailing input in type string {text!r}")
    return result


@dataclass(frozen=True)
class RelationSchema:
    """A warehouse relation: ordered top-level columns plus an optional subject-id column."""

    name: str
    columns: tuple[tuple[str, SchemaType], ...]
    subject_id_column: str | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        cols = tuple((n, t if isinstance(t, SchemaType) else parse_type(t)) for n, t in self.columns)
        object.__setattr__(self, "columns", cols)
        index = {}
        for i, (name, _) in enumerate(cols):
            if not _NAME_RE.match(name):
                raise SchemaError(f"invalid column name {name!r}")
            if name in index:
                raise SchemaError(f"duplicate column {name!r} in relation {self.name!r}")
            index[name] = i
        object.__setattr__(self, "_index", index)
        if self.subject_id_column is not None:
            typ = self.column_type(self.subject_id_column)
            if typ is None:
                raise SchemaError(f"subject id column {self.subject_id_column!r} not in relation {self.name!r}")
            if not typ.is_atomic or typ.atomic_name not in INTEGER_TYPES:
                raise SchemaError(
                    f"subject id column {self.subject_id_column!r} must be an integer column, got {typ}"
                )

    def __iter__(self) -> Iterator[tuple[str, SchemaType]]:
        return iter(self.columns)

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def column_names(self) -> list[str]:
        return [n for n, _ in self.columns]

    def column_type(self, name: str) -> SchemaType | None:
        i = self._index.get(name)
        return None if i is None else self.columns[i][1]

    def position(self, name: str) -> int:
        return self._index[name]

    def row_type(self) -> SchemaType:
        """The relation viewed as a struct of its columns (what ``$`` addresses)."""
        return struct(self.columns)

    def with_columns(self, columns) -> RelationSchema:
        return RelationSchema(self.name, tuple(columns), self.subject_id_column)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "columns": [{"name": n, "type": t.to_json()} for n, t in self.columns],
        }
        if self.subject_id_column is not None:
            out["subject_id_column"] = self.subject_id_column
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> RelationSchema:
        try:
            cols = [(c["name"], SchemaType.from_json(c["type"])) for c in obj["columns"]]
            return cls(obj["name"], tuple(cols), obj.get("subject_id_column"))
        except KeyError as exc:
            raise SchemaError(f"relation schema missing key {exc}") from None


def relation(name: str, columns, subject_id_column: str | None = None) -> RelationSchema:
    """Shorthand: ``relation("R", {"col1": "BIGINT", "col2": "STRUCT<...>"})``."""
    if isinstance(columns, Mapping):
        columns = columns.items()
    return RelationSchema(name, tuple(columns), subject_id_column)


def load_schema_file(path: str | Path) -> RelationSchema:
    with open(path) as fh:
        return RelationSchema.from_json(json.load(fh))


def load_schema_dir(path: str | Path) -> dict[str, RelationSchema]:
    """Load every ``*.json`` relation schema in a directory, keyed by relation name."""
    out: dict[str, RelationSchema] = {}
    root = Path(path)
    if not root.exists():
        return out
    for file in sorted(root.glob("*.json")):
        schema = load_schema_file(file)
        if schema.name in out:
            raise SchemaError(f"relation {schema.name!r} defined twice (second in {file})")
        out[schema.name] = schema
    return out
