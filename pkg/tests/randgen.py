"""Seeded generators for random schemas, rows, paths, policies and consent tables.

Value domains are kept tiny so filters and equality predicates actually hit.
Everything takes a ``random.Random`` so a failing case is reproducible from
its seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from dataguard.conditions import AttrClass, render_literal
from dataguard.consent import SnapshotStore, build_snapshot
from dataguard.evaluator import Relation
from dataguard.paths import parse_field_path
from dataguard.policy import LabelAssignment, PolicyCatalog, Purpose, PurposeGraph, make_policy
from dataguard.schema import Kind, RelationSchema, SchemaType, array, atomic, map_of, struct

ATOMS = ("BIGINT", "VARCHAR", "DOUBLE", "BOOLEAN")
STRINGS = ("a", "b", "c")
KEYS = ("k0", "k1", "k2")
CONSENTS = tuple(f"c{i}" for i in range(5))
SNAPSHOT_AT = 100
ACCESS_AT = 200


def random_type(rng: random.Random, depth: int) -> SchemaType:
    """A type of nesting depth at most ``depth``."""
    if depth == 0 or rng.random() < 0.3:
        return atomic(rng.choice(ATOMS))
    kind = rng.choice(("struct", "struct", "array", "map"))
    if kind == "struct":
        n = rng.randint(1, 3)
        return struct([(f"f{i}", random_type(rng, depth - 1)) for i in range(n)])
    if kind == "array":
        return array(random_type(rng, depth - 1))
    return map_of(atomic("VARCHAR"), random_type(rng, depth - 1))


def random_relation(rng: random.Random, max_depth: int = 4, name: str = "T") -> RelationSchema:
    cols = [("id", atomic("BIGINT"))]
    for i in range(rng.randint(1, 4)):
        cols.append((f"col{i}", random_type(rng, max_depth)))
    return RelationSchema(name, tuple(cols), subject_id_column="id")


def random_atom(rng: random.Random, name: str):
    if name == "BIGINT":
        return rng.randint(0, 3)
    if name == "VARCHAR":
        return rng.choice(STRINGS)
    if name == "DOUBLE":
        return rng.choice((0.5, 1.5, 2.5))
    return rng.random() < 0.5


def random_value(rng: random.Random, typ: SchemaType, null_rate: float = 0.1):
    if rng.random() < null_rate:
        return None
    if typ.kind is Kind.ATOMIC:
        return random_atom(rng, typ.atomic_name)
    if typ.kind is Kind.STRUCT:
        return {n: random_value(rng, t, null_rate) for n, t in typ.fields}
    if typ.kind is Kind.ARRAY:
        return [random_value(rng, typ.element, null_rate) for _ in range(rng.randint(0, 3))]
    keys = rng.sample(KEYS, rng.randint(0, len(KEYS)))
    return {k: random_value(rng, typ.value, null_rate) for k in keys}


def random_rows(rng: random.Random, schema: RelationSchema, n: int, n_subjects: int = 12) -> list[dict]:
    rows = []
    for _ in range(n):
        row = {name: random_value(rng, typ) for name, typ in schema.columns}
        # ids past the consent table's universe and NULL ids both occur
        row["id"] = None if rng.random() < 0.05 else rng.randint(0, n_subjects + 2)
        rows.append(row)
    return rows


def _predicate(rng: random.Random, attr: str, name: str) -> str:
    lit = render_literal(random_atom(rng, name))
    form = rng.random()
    if form < 0.55:
        return f"{attr}{rng.choice(('=', '!='))}{lit}"
    if form < 0.7:
        return f"{attr} IS NULL"
    if form < 0.85:
        lits = ", ".join(render_literal(random_atom(rng, name)) for _ in range(2))
        return f"{attr} IN ({lits})"
    if name in ("BIGINT", "DOUBLE"):
        return f"{attr} BETWEEN {render_literal(random_atom(rng, name))} AND {render_literal(random_atom(rng, name))}"
    return f"NOT {attr}{rng.choice(('=', '!='))}{lit}"


def random_filter(rng: random.Random, typ: SchemaType) -> str | None:
    """Filter text over ``@`` for elements of ``typ``; None when nothing is comparable."""
    if typ.kind is Kind.ATOMIC:
        atoms = [("@", typ.atomic_name)]
    elif typ.kind is Kind.STRUCT:
        atoms = [(f"@.{n}", t.atomic_name) for n, t in typ.fields if t.is_atomic]
    else:
        atoms = []
    if not atoms:
        return None
    parts = [_predicate(rng, *rng.choice(atoms)) for _ in range(rng.randint(1, 2))]
    if len(parts) == 1:
        return parts[0]
    return f" {rng.choice(('AND', 'OR'))} ".join(f"({p})" for p in parts)


def random_path_text(rng: random.Random, schema: RelationSchema) -> str:
    """A path that resolves against ``schema``: row-level, column, or deeper."""
    parts = ["$"]
    if rng.random() < 0.2:
        atoms = [(f"@.{n}", t.atomic_name) for n, t in schema.columns if t.is_atomic]
        parts.append(f"[?({_predicate(rng, *rng.choice(atoms))})]")
    if rng.random() < 0.1:
        return ".".join(parts)
    name, typ = rng.choice(schema.columns[1:])
    parts.append(name)
    while rng.random() < 0.7:
        if typ.kind is Kind.STRUCT:
            fname, typ = rng.choice(typ.fields)
            parts.append(fname)
        elif typ.kind is Kind.ARRAY:
            parts.append("[item]")
            typ = typ.element
            if rng.random() < 0.5 and (flt := random_filter(rng, typ)):
                parts.append(f"[?({flt})]")
        elif typ.kind is Kind.MAP:
            if rng.random() < 0.25:
                parts.append("[key]")
                break
            parts.append("[value]")
            typ = typ.value
            if rng.random() < 0.4 and (flt := random_filter(rng, typ)):
                parts.append(f"[?({flt})]")
        else:
            break
    return ".".join(parts)


def random_consent_condition(rng: random.Random) -> str:
    form = rng.random()
    names = rng.sample(CONSENTS, rng.randint(1, 3))
    if form < 0.75:
        return " AND ".join(names)
    if form < 0.85:
        return " OR ".join(names)
    if form < 0.95:
        return f"NOT {names[0]}" + "".join(f" AND {n}" for n in names[1:])
    return rng.choice(("TRUE", "FALSE"))


@dataclass
class Case:
    seed: int
    schema: RelationSchema
    relation: Relation
    catalog: PolicyCatalog
    assignments: list[LabelAssignment]
    store: SnapshotStore
    purpose: str = "p"


def random_consent_table(rng: random.Random, n_subjects: int) -> list[tuple[int, str, bool]]:
    rows = []
    for sid in range(n_subjects):
        if rng.random() < 0.1:
            continue
        for name in CONSENTS:
            if rng.random() < 0.9:
                rows.append((sid, name, rng.random() < rng.choice((0.2, 0.5, 0.8))))
    seen = {name for _, name, _ in rows}
    # every consent needs a snapshot, even when the draw left it without rows
    rows += [(n_subjects, name, True) for name in CONSENTS if name not in seen]
    return rows


def random_case(seed: int, max_rows: int = 200, max_policies: int = 6) -> Case:
    rng = random.Random(seed)
    schema = random_relation(rng)
    rows = random_rows(rng, schema, rng.randint(0, max_rows))
    registry = {c: AttrClass.CONSENT for c in CONSENTS}
    policies = []
    assignments = []
    for i in range(rng.randint(1, max_policies)):
        label = f"L{i}"
        policies.append(make_policy(f"q{i}", "p", label, random_consent_condition(rng), registry=registry))
        for _ in range(rng.randint(1, 2)):
            path = parse_field_path(random_path_text(rng, schema))
            assignments.append(LabelAssignment(schema.name, path, label))
    # a few label reuses so one path carries several policies
    if len(policies) > 1 and rng.random() < 0.5:
        a = rng.choice(assignments)
        assignments.append(LabelAssignment(schema.name, a.path, rng.choice(policies).label))
    catalog = PolicyCatalog(PurposeGraph([Purpose("p")]), policies, registry)
    store = SnapshotStore()
    for snap in build_snapshot(random_consent_table(rng, 12), SNAPSHOT_AT):
        store.save(snap)
    return Case(seed, schema, Relation.from_records(schema, rows), catalog, assignments, store)


def case_view(case: Case):
    """Compile a case's view; returns (view, all matched pairs)."""
    from dataguard.compiler import compile_view
    from dataguard.planner import plan_pairs
    from dataguard.policy import match_policies

    pairs = match_policies(case.schema, case.assignments, case.catalog.effective(case.purpose))
    kept, dropped = plan_pairs(pairs)
    view = compile_view(case.schema, kept, case.purpose, created_at="t", dropped=dropped)
    return view, pairs
