"""Reference implementation of the masking operator, used as ground truth.

It shares no traversal code with the plan executor. A path is first
expanded into the concrete locations it addresses in a row (a tuple of
field / index / key steps), and the masking function is then applied to
those locations directly.

Decision rules match the executor's: conditions are read from the input
row, unknown keep-conditions mask, and unknown selectors address.
"""

from __future__ import annotations

import copy
from typing import Iterable

from .compiler import canonical_order
from .conditions import Condition
from .consent import ConsentBinding
from .errors import MissingSubjectId
from .evaluator import Relation, SubjectConsents, element_lookup, eval3, make_lookup
from .paths import Deref, FieldPath, Filter, Unnest, UnnestKind, resolve_path
from .policy import Policy

NULL, REMOVE = "null", "remove"


def _locations(value, ops: tuple, loc: tuple):
    """Yield ``(location, action)`` for every element ``ops`` addresses inside ``value``."""
    if not ops:
        yield loc, NULL
        return
    if value is None:
        return
    op, rest = ops[0], ops[1:]
    if isinstance(op, Deref):
        yield from _locations(value.get(op.name), rest, loc + (("field", op.name),))
        return
    cond = None
    if rest and isinstance(rest[0], Filter):
        cond, rest = rest[0].condition, rest[1:]
    if op.kind is UnnestKind.ITEM:
        entries = [(("index", i), el) for i, el in enumerate(value)]
        final = REMOVE
    elif op.kind is UnnestKind.KEY:
        entries = [(("key", k), k) for k in value]
        final = REMOVE
    else:
        entries = [(("value", k), v) for k, v in value.items()]
        final = NULL
    for step, el in entries:
        if cond is not None and eval3(cond, element_lookup(el)) is False:
            continue
        if rest:
            yield from _locations(el, rest, loc + (step,))
        else:
            yield loc + (step,), final


def _container(root, loc):
    cur = root
    for kind, key in loc:
        cur = cur[key]
    return cur


def mask_locations(value, ops: tuple):
    """Apply the masking function at every location ``ops`` addresses; returns a new value."""
    locs = list(_locations(value, tuple(ops), ()))
    if not locs:
        return value
    if locs == [((), NULL)]:
        return None
    out = copy.deepcopy(value)
    removals: dict[tuple, list] = {}
    for loc, action in locs:
        parent, (kind, key) = loc[:-1], loc[-1]
        if action == NULL:
            _container(out, parent)[key] = None
        else:
            removals.setdefault(parent, []).append((kind, key))
    for parent, steps in removals.items():
        target = _container(out, parent)
        for kind, key in sorted(steps, key=lambda s: s[1] if s[0] == "index" else 0, reverse=True):
            del target[key]
    return out


def _keep(cond: Condition, row: dict, subject_col: str | None, binding: ConsentBinding | None) -> bool:
    ctx = None
    if binding is not None:
        ctx = SubjectConsents(binding, row.get(subject_col) if subject_col else None)
    return eval3(cond, make_lookup(row, ctx)) is True


def _mask_pairs(pairs: list[tuple[dict, dict]], schema, policy: Policy, path: FieldPath, binding):
    """One masking pass over (input row, current row) pairs."""
    resolve_path(schema, path)
    if policy.consents and schema.subject_id_column is None:
        raise MissingSubjectId(f"policy {policy.id!r} needs a subject id column on {schema.name!r}")
    subject = schema.subject_id_column
    selector = path.row_selector
    out = []
    for original, current in pairs:
        keep = _keep(policy.keep_condition, original, subject, binding)
        in_scope = selector is None or eval3(selector, make_lookup(original)) is not False
        if keep or not in_scope:
            out.append((original, current))
        elif path.is_row_level:
            continue
        else:
            column = path.root_attribute
            new = dict(current)
            new[column] = mask_locations(current[column], path.cell_operators())
            out.append((original, new))
    return out


def oracle_mask(rel: Relation, policy: Policy, path: FieldPath, binding: ConsentBinding | None = None) -> Relation:
    """mask(rel, policy, path): drop rows for row-level paths, else rewrite rows whose condition fails."""
    pairs = _mask_pairs([(r, r) for r in rel.rows], rel.schema, policy, path, binding)
    return Relation(rel.schema, [cur for _, cur in pairs])


def oracle_fold(rel: Relation, pairs: Iterable[tuple[FieldPath, Policy]], binding: ConsentBinding | None = None) -> Relation:
    """Apply the masking operator for every pair, in plan order, reading conditions from input rows."""
    state = [(r, r) for r in rel.rows]
    for path, policy in canonical_order(rel.schema, pairs):
        state = _mask_pairs(state, rel.schema, policy, path, binding)
    return Relation(rel.schema, [cur for _, cur in state])
