"""Purposes, policy labels, policies and the file-backed catalogs that hold them."""

from __future__ import annotations

import enum
import graphlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .conditions import (
    AttrClass,
    Condition,
    consents as condition_consents,
    negate,
    parse_condition,
    render_condition,
)
from .errors import CatalogError, DataGuardError, PurposeCycleError, UnknownPurpose
from .paths import FieldPath, parse_field_path, render_field_path, resolve_path
from .schema import RelationSchema


class Action(str, enum.Enum):
    KEEP = "KEEP"
    MASK = "MASK"


@dataclass(frozen=True)
class Purpose:
    name: str
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class PolicyLabel:
    name: str


@dataclass(frozen=True)
class Policy:
    """``(purpose, label, <condition, action>)`` with a stable identifier.

    A KEEP policy preserves the labeled data when its condition holds and
    masks it otherwise; a MASK policy masks when its condition holds.
    """

    id: str
    purpose: str
    label: str
    condition: Condition
    action: Action = Action.KEEP

    @property
    def consents(self) -> frozenset[str]:
        return condition_consents(self.condition)

    @property
    def keep_condition(self) -> Condition:
        """Condition under which the data survives, whatever the action."""
        return self.condition if self.action is Action.KEEP else negate(self.condition)

    @property
    def condition_text(self) -> str:
        return render_condition(self.condition)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "purpose": self.purpose,
            "label": self.label,
            "condition": self.condition_text,
            "action": self.action.value,
        }


def make_policy(
    id: str,
    purpose: str,
    label: str,
    condition: str | Condition,
    action: Action | str = Action.KEEP,
    registry: Mapping[str, AttrClass | str] | None = None,
) -> Policy:
    if isinstance(condition, str):
        condition = parse_condition(condition, registry)
    return Policy(id, purpose, label, condition, Action(action))


class PurposeGraph:
    """Purpose DAG; a child inherits every policy of every ancestor."""

    def __init__(self, purposes: Iterable[Purpose] = ()):
        self._purposes: dict[str, Purpose] = {}
        for p in purposes:
            if p.name in self._purposes:
                raise CatalogError(f"purpose {p.name!r} declared twice")
            self._purposes[p.name] = p
        for p in self._purposes.values():
            for parent in p.parents:
                if parent not in self._purposes:
                    raise CatalogError(f"purpose {p.name!r} has unknown parent {parent!r}")
        sorter = graphlib.TopologicalSorter({p.name: p.parents for p in self._purposes.values()})
        try:
            self._order = tuple(sorter.static_order())
        except graphlib.CycleError as exc:
            raise PurposeCycleError(f"purpose graph has a cycle: {' -> '.join(exc.args[1])}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._purposes

    def __iter__(self):
        return iter(self._purposes.values())

    def __len__(self) -> int:
        return len(self._purposes)

    @property
    def names(self) -> list[str]:
        return list(self._purposes)

    def parents(self, name: str) -> tuple[str, ...]:
        if name not in self._purposes:
            raise UnknownPurpose(name)
        return self._purposes[name].parents

    def ancestors(self, name: str) -> set[str]:
        """All strict ancestors of ``name``."""
        seen: set[str] = set()
        stack = list(self.parents(name))
        while stack:
            cur = stack.pop()
            if cur not in seen:
                seen.add(cur)
                stack.extend(self._purposes[cur].parents)
        return seen

    def lineage(self, name: str) -> set[str]:
        return self.ancestors(name) | {name}

    def to_json(self) -> list[dict]:
        return [{"name": p.name, "parents": list(p.parents)} for p in self._purposes.values()]


def effective_policies(purpose: str, policies: Iterable[Policy], dag: PurposeGraph) -> list[Policy]:
    """Policies in force for ``purpose``: its own plus every ancestor's.

    Identical policies reached through several ancestors collapse to one.
    When a label carries both KEEP and MASK policies the MASK ones win.
    """
    if purpose not in dag:
        raise UnknownPurpose(purpose)
    lineage = dag.lineage(purpose)
    unique: dict[tuple, Policy] = {}
    for p in policies:
        if p.purpose not in lineage:
            continue
        key = (p.label, p.condition, p.action)
        if key not in unique or p.id < unique[key].id:
            unique[key] = p
    by_label: dict[str, list[Policy]] = defaultdict(list)
    for p in unique.values():
        by_label[p.label].append(p)
    out = []
    for label, group in by_label.items():
        if any(p.action is Action.MASK for p in group):
            group = [p for p in group if p.action is Action.MASK]
        out.extend(group)
    out.sort(key=lambda p: (p.label, p.id))
    return out


@dataclass(frozen=True)
class LabelAssignment:
    relation: str
    path: FieldPath
    label: str

    def to_json(self) -> dict:
        return {"relation": self.relation, "path": render_field_path(self.path), "label": self.label}


def match_policies(
    relation: RelationSchema,
    assignments: Iterable[LabelAssignment],
    policies: Iterable[Policy],
) -> list[tuple[FieldPath, Policy]]:
    """Join the relation's labeled paths with policies on label name."""
    by_label: dict[str, list[Policy]] = defaultdict(list)
    for p in policies:
        by_label[p.label].append(p)
    pairs = set()
    for a in assignments:
        if a.relation != relation.name:
            continue
        for p in by_label.get(a.label, ()):
            pairs.add((a.path, p))
    return sorted(pairs, key=lambda pair: (render_field_path(pair[0]), pair[1].id))


@dataclass
class PolicyCatalog:
    """Versioned catalog of purposes, attribute classes, labels and policies."""

    purposes: PurposeGraph
    policies: list[Policy]
    attributes: dict[str, AttrClass] = field(default_factory=dict)
    labels: frozenset[str] | None = None
    version: str = "0"

    def __post_init__(self):
        seen = set()
        for p in self.policies:
            key = (p.purpose, p.label, p.id)
            if key in seen:
                raise CatalogError(f"duplicate policy {key}")
            seen.add(key)
            if p.purpose not in self.purposes:
                raise CatalogError(f"policy {p.id!r} names unknown purpose {p.purpose!r}")
            if self.labels is not None and p.label not in self.labels:
                raise CatalogError(f"policy {p.id!r} names unknown label {p.label!r}")

    def effective(self, purpose: str) -> list[Policy]:
        return effective_policies(purpose, self.policies, self.purposes)

    def for_label(self, label: str) -> list[Policy]:
        return [p for p in self.policies if p.label == label]

    def to_json(self) -> dict:
        out = {
            "version": self.version,
            "purposes": self.purposes.to_json(),
            "attributes": {k: v.value for k, v in sorted(self.attributes.items())},
            "policies": [p.to_json() for p in self.policies],
        }
        if self.labels is not None:
            out["labels"] = sorted(self.labels)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> PolicyCatalog:
        try:
            purposes = PurposeGraph(
                Purpose(p["name"], tuple(p.get("parents", ()))) for p in obj.get("purposes", [])
            )
            attributes = {k: AttrClass(v) for k, v in obj.get("attributes", {}).items()}
            registry = attributes or None
            labels = frozenset(obj["labels"]) if "labels" in obj else None
            policies = []
            for raw in obj.get("policies", []):
                try:
                    policies.append(
                        make_policy(
                            str(raw["id"]), raw["purpose"], raw["label"], raw["condition"], raw.get("action", "KEEP"), registry
                        )
                    )
                except (DataGuardError, ValueError) as exc:
                    if isinstance(exc, CatalogError):
                        raise
                    raise CatalogError(f"policy {raw.get('id')!r}: {exc}") from None
        except KeyError as exc:
            raise CatalogError(f"policy catalog entry missing key {exc}") from None
        except ValueError as exc:
            if isinstance(exc, CatalogError):
                raise
            raise CatalogError(str(exc)) from None
        return cls(purposes, policies, attributes, labels, str(obj.get("version", "0")))


def load_policy_catalog(path: str | Path) -> PolicyCatalog:
    with open(path) as fh:
        return PolicyCatalog.from_json(json.load(fh))


def save_policy_catalog(catalog: PolicyCatalog, path: str | Path) -> None:
    Path(path).write_text(json.dumps(catalog.to_json(), indent=2) + "\n")


def parse_assignments(records: Sequence[Mapping]) -> list[LabelAssignment]:
    out = []
    for rec in records:
        try:
            out.append(LabelAssignment(rec["relation"], parse_field_path(rec["path"]), rec["label"]))
        except KeyError as exc:
            raise CatalogError(f"label assignment missing key {exc}: {rec!r}") from None
        except DataGuardError as exc:
            raise CatalogError(f"label assignment {rec.get('relation')}:{rec.get('path')}: {exc}") from None
    return out


def load_assignments(path: str | Path) -> list[LabelAssignment]:
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, Mapping):
        obj = obj.get("assignments", [])
    return parse_assignments(obj)


def save_assignments(assignments: Iterable[LabelAssignment], path: str | Path) -> None:
    Path(path).write_text(json.dumps([a.to_json() for a in assignments], indent=2) + "\n")


def validate_assignments(
    assignments: Iterable[LabelAssignment],
    schemas: Mapping[str, RelationSchema],
    labels: frozenset[str] | None = None,
) -> None:
    """Raise :class:`CatalogError` for the first assignment that does not resolve."""
    for a in assignments:
        schema = schemas.get(a.relation)
        if schema is None:
            raise CatalogError(f"label assignment on unknown relation {a.relation!r} (path {render_field_path(a.path)})")
        if labels is not None and a.label not in labels:
            raise CatalogError(f"label assignment {a.relation}:{render_field_path(a.path)} uses unknown label {a.label!r}")
        try:
            resolve_path(schema, a.path)
        except DataGuardError as exc:
            raise CatalogError(f"label assignment {a.relation}:{render_field_path(a.path)} does not resolve: {exc}") from None
