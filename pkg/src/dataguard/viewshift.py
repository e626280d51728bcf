"""View registry, purpose-based routing, access logging and view maintenance.

Registry layout on disk::

    <root>/index.json                          key -> versions, latest
    <root>/<purpose>/<relation>/<version>.json one ViewDefinition each

The index is rewritten through a temporary file and ``os.replace`` so a
reader sees either the previous or the next index, never a partial one.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping

from .compiler import ViewDefinition, assign_version, classify_change, compile_view, inputs_digest, parse_version
from .consent import to_datetime, utcnow
from .errors import DataGuardError, NoViewForPurpose, PinnedVersionMissing
from .planner import build_schema_tree, prune_policies
from .policy import LabelAssignment, PolicyCatalog, match_policies
from .schema import RelationSchema


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass(frozen=True)
class ViewIdentifier:
    relation: str
    purpose: str
    version: str

    def __str__(self) -> str:
        return f"{self.purpose}.{self.relation}@{self.version}"


class ViewRegistry:
    """Versions of compiled views per (relation, purpose); in memory unless ``root`` is given."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self._lock = threading.RLock()
        self._views: dict[tuple[str, str], dict[str, ViewDefinition]] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._load()

    def _load(self) -> None:
        index_path = self.root / "index.json"
        if not index_path.exists():
            return
        index = json.loads(index_path.read_text())
        for entry in index.get("entries", []):
            key = (entry["relation"], entry["purpose"])
            versions = {}
            for v in entry["versions"]:
                obj = json.loads(self._view_path(key[0], key[1], v).read_text())
                versions[v] = ViewDefinition.from_json(obj)
            self._views[key] = versions

    def _view_path(self, relation: str, purpose: str, version: str) -> Path:
        return self.root / purpose / relation / f"{version}.json"

    def _write_index(self) -> None:
        if self.root is None:
            return
        entries = []
        for (relation, purpose), versions in sorted(self._views.items()):
            ordered = sorted(versions, key=parse_version)
            entries.append({"relation": relation, "purpose": purpose, "versions": ordered, "latest": ordered[-1]})
        _atomic_write(self.root / "index.json", json.dumps({"entries": entries}, indent=2) + "\n")

    def keys(self) -> list[tuple[str, str]]:
        with self._lock:
            return sorted(self._views)

    def versions(self, relation: str, purpose: str) -> list[str]:
        with self._lock:
            return sorted(self._views.get((relation, purpose), {}), key=parse_version)

    def get(self, relation: str, purpose: str, version: str) -> ViewDefinition:
        with self._lock:
            try:
                return self._views[(relation, purpose)][version]
            except KeyError:
                raise PinnedVersionMissing(relation, purpose, version) from None

    def latest(self, relation: str, purpose: str) -> ViewDefinition | None:
        versions = self.versions(relation, purpose)
        return self.get(relation, purpose, versions[-1]) if versions else None

    def register(self, view: ViewDefinition) -> ViewIdentifier:
        with self._lock:
            current = self.versions(view.relation, view.purpose)
            if current and parse_version(view.version) <= parse_version(current[-1]):
                raise ValueError(
                    f"version {view.version} of {view.purpose}.{view.relation} is not newer than {current[-1]}"
                )
            if self.root is not None:
                _atomic_write(
                    self._view_path(view.relation, view.purpose, view.version),
                    json.dumps(view.to_json(), indent=2) + "\n",
                )
                sql_path = self._view_path(view.relation, view.purpose, view.version).with_suffix(".sql")
                _atomic_write(sql_path, view.sql)
            self._views.setdefault((view.relation, view.purpose), {})[view.version] = view
            self._write_index()
        return ViewIdentifier(view.relation, view.purpose, view.version)

    def remove(self, relation: str, purpose: str, version: str) -> None:
        with self._lock:
            versions = self._views[(relation, purpose)]
            del versions[version]
            if not versions:
                del self._views[(relation, purpose)]
            self._write_index()
            if self.root is not None:
                for suffix in (".json", ".sql"):
                    self._view_path(relation, purpose, version).with_suffix(suffix).unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# Routing


@dataclass(frozen=True)
class AccessContext:
    purpose: str
    pinned_version: str | None = None
    environment: str = ""

    @classmethod
    def for_identity(cls, identity: str, purposes: Mapping[str, str], pinned_version: str | None = None,
                     environment: str = "") -> AccessContext:
        """Context for a service identity, using an identity -> purpose lookup."""
        if identity not in purposes:
            raise KeyError(f"no purpose registered for identity {identity!r}")
        return cls(purposes[identity], pinned_version, environment)


def load_identity_map(path: str | Path) -> dict[str, str]:
    with open(path) as fh:
        return dict(json.load(fh))


@dataclass
class AccessLogEntry:
    timestamp: str
    relation: str
    purpose: str
    view_id: str | None
    version: str | None
    environment: str
    pinned: bool
    error: str | None = None


class AccessLog:
    """Append-only access log; JSON lines on disk when ``path`` is given."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: list[AccessLogEntry] = []
        if self.path is not None and self.path.exists():
            with open(self.path) as fh:
                self._entries = [AccessLogEntry(**json.loads(line)) for line in fh if line.strip()]

    def append(self, entry: AccessLogEntry) -> None:
        with self._lock:
            self._entries.append(entry)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a") as fh:
                    fh.write(json.dumps(asdict(entry)) + "\n")

    def entries(self) -> list[AccessLogEntry]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def get_view(relation: str, ctx: AccessContext, registry: ViewRegistry, log: AccessLog | None = None,
             now=None) -> ViewIdentifier:
    """Resolve a table access to the purpose's view: the pinned version if set, else the latest."""
    timestamp = (to_datetime(now) if now is not None else utcnow()).isoformat()
    pinned = ctx.pinned_version is not None
    try:
        versions = registry.versions(relation, ctx.purpose)
        if not versions:
            raise NoViewForPurpose(relation, ctx.purpose)
        if pinned:
            if ctx.pinned_version not in versions:
                raise PinnedVersionMissing(relation, ctx.purpose, ctx.pinned_version)
            version = ctx.pinned_version
        else:
            version = versions[-1]
    except DataGuardError as exc:
        if log is not None:
            log.append(AccessLogEntry(timestamp, relation, ctx.purpose, None, ctx.pinned_version, ctx.environment,
                                      pinned, f"{type(exc).__name__}: {exc}"))
        raise
    ident = ViewIdentifier(relation, ctx.purpose, version)
    if log is not None:
        log.append(AccessLogEntry(timestamp, relation, ctx.purpose, str(ident), version, ctx.environment, pinned))
    return ident


def pinned_behind_latest(log: AccessLog, registry: ViewRegistry) -> list[dict]:
    """Pinned consumers (by environment) whose most recent pin is older than the latest version."""
    last_pin: dict[tuple[str, str, str], str] = {}
    for e in log.entries():
        if e.pinned and e.version is not None:
            last_pin[(e.environment, e.relation, e.purpose)] = e.version
    out = []
    for (env, relation, purpose), version in sorted(last_pin.items()):
        versions = registry.versions(relation, purpose)
        if versions and parse_version(version) < parse_version(versions[-1]):
            out.append({"environment": env, "relation": relation, "purpose": purpose,
                        "pinned": version, "latest": versions[-1]})
    return out


# ---------------------------------------------------------------------------
# Maintenance


@dataclass
class Inventory:
    """Everything view compilation reads: table schemas, label assignments, the policy catalog."""

    schemas: dict[str, RelationSchema]
    assignments: list[LabelAssignment]
    catalog: PolicyCatalog


@dataclass
class MaintenanceReport:
    updated: list[ViewDefinition] = field(default_factory=list)
    errors: list[tuple[str, str, str]] = field(default_factory=list)
    unchanged: int = 0

    def to_json(self) -> dict:
        return {
            "updated": [
                {"relation": v.relation, "purpose": v.purpose, "version": v.version,
                 "row_filters": len(v.row_filters), "column_masks": len(v.column_masks), "pruned": len(v.pruned)}
                for v in self.updated
            ],
            "errors": [{"relation": r, "purpose": p, "error": e} for r, p, e in self.errors],
            "unchanged": self.unchanged,
        }


def build_view(schema: RelationSchema, assignments, policies, purpose: str, **kwargs) -> ViewDefinition:
    """Match, build the schema tree, prune and compile one (relation, purpose)."""
    pairs = match_policies(schema, assignments, policies)
    tree = prune_policies(build_schema_tree(pairs))
    return compile_view(schema, tree.pairs(), purpose, dropped=tree.pruned_pairs(), **kwargs)


def maintain_views(
    inventory: Inventory,
    registry: ViewRegistry,
    now=None,
    relations: Iterable[str] | None = None,
    purposes: Iterable[str] | None = None,
) -> MaintenanceReport:
    """Recompile every (relation, purpose) whose inputs changed and register the new versions.

    A pair is a candidate when some effective policy of the purpose matches a
    label on the relation, or when the registry already holds a view for it
    (so a view whose last policy disappeared becomes a pass-through).
    """
    created_at = (to_datetime(now) if now is not None else utcnow()).isoformat()
    report = MaintenanceReport()
    rel_names = sorted(relations) if relations is not None else sorted(inventory.schemas)
    purpose_names = sorted(purposes) if purposes is not None else sorted(inventory.catalog.purposes.names)
    for purpose in purpose_names:
        try:
            effective = inventory.catalog.effective(purpose)
        except DataGuardError as exc:
            report.errors.append(("*", purpose, f"{type(exc).__name__}: {exc}"))
            continue
        for name in rel_names:
            schema = inventory.schemas.get(name)
            if schema is None:
                report.errors.append((name, purpose, f"unknown relation {name!r}"))
                continue
            try:
                pairs = match_policies(schema, inventory.assignments, effective)
                previous = registry.latest(name, purpose)
                if not pairs and previous is None:
                    continue
                applicable = {p.id: p for _, p in pairs}.values()
                digest = inputs_digest(schema, inventory.assignments, applicable)
                if previous is not None and previous.inputs_digest == digest:
                    report.unchanged += 1
                    continue
                view = build_view(schema, inventory.assignments, effective, purpose,
                                  created_at=created_at, inputs_digest=digest)
                change = classify_change(previous, view)
                view.version = assign_version(previous, digest, change)
                registry.register(view)
                report.updated.append(view)
            except DataGuardError as exc:
                report.errors.append((name, purpose, f"{type(exc).__name__}: {exc}"))
    return report


def gc_views(registry: ViewRegistry, keep_latest: int, min_age: timedelta, now=None) -> list[ViewIdentifier]:
    """Drop old versions: keep the newest ``keep_latest`` per key and anything younger than ``min_age``."""
    now = to_datetime(now) if now is not None else datetime.now(timezone.utc)
    keep_latest = max(1, keep_latest)
    removed = []
    for relation, purpose in registry.keys():
        versions = registry.versions(relation, purpose)
        for version in versions[:-keep_latest]:
            view = registry.get(relation, purpose, version)
            created = to_datetime(view.created_at) if view.created_at else now
            if now - created >= min_age:
                registry.remove(relation, purpose, version)
                removed.append(ViewIdentifier(relation, purpose, version))
    return removed
