"""Workspace layout: where schemas, catalogs, consent snapshots and views live.

A workspace is a directory. An optional ``dataguard.json`` in it overrides
any of the default locations below (paths are relative to the workspace)::

    schemas/            one RelationSchema JSON file per table
    labels.json         label assignments
    policies.json       policy catalog
    identities.json     service identity -> purpose (optional)
    consents/           consent snapshot store
    views/              view registry
    access_log.jsonl    routing log
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

from .consent import SnapshotStore
from .errors import CatalogError
from .policy import PolicyCatalog, PurposeGraph, load_assignments, load_policy_catalog, validate_assignments
from .schema import load_schema_dir
from .viewshift import AccessLog, Inventory, ViewRegistry, load_identity_map

CONFIG_NAME = "dataguard.json"

DEFAULTS = {
    "schemas": "schemas",
    "labels": "labels.json",
    "policies": "policies.json",
    "identities": "identities.json",
    "consents": "consents",
    "views": "views",
    "access_log": "access_log.jsonl",
    "view_keep_latest": 2,
    "view_min_age_days": 7.0,
    "snapshot_retention_days": 30.0,
}


@dataclass
class WorkspaceConfig:
    root: Path
    settings: dict = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def load(cls, root: str | Path) -> WorkspaceConfig:
        root = Path(root)
        if not root.is_dir():
            raise CatalogError(f"workspace {root} is not a directory")
        settings = dict(DEFAULTS)
        config_path = root / CONFIG_NAME
        if config_path.exists():
            overrides = json.loads(config_path.read_text())
            unknown = set(overrides) - set(DEFAULTS)
            if unknown:
                raise CatalogError(f"{config_path}: unknown settings {sorted(unknown)}")
            settings.update(overrides)
        return cls(root, settings)

    def path(self, key: str) -> Path:
        return self.root / self.settings[key]

    @property
    def view_keep_latest(self) -> int:
        return int(self.settings["view_keep_latest"])

    @property
    def view_min_age(self) -> timedelta:
        return timedelta(days=float(self.settings["view_min_age_days"]))

    @property
    def snapshot_retention(self) -> timedelta:
        return timedelta(days=float(self.settings["snapshot_retention_days"]))

    def catalog(self) -> PolicyCatalog:
        path = self.path("policies")
        if not path.exists():
            return PolicyCatalog(PurposeGraph(), [])
        return load_policy_catalog(path)

    def inventory(self, validate: bool = True) -> Inventory:
        schema_dir = self.path("schemas")
        schemas = load_schema_dir(schema_dir) if schema_dir.is_dir() else {}
        labels = self.path("labels")
        assignments = load_assignments(labels) if labels.exists() else []
        catalog = self.catalog()
        if validate:
            validate_assignments(assignments, schemas, catalog.labels)
        return Inventory(schemas, assignments, catalog)

    def identities(self) -> dict[str, str]:
        path = self.path("identities")
        return load_identity_map(path) if path.exists() else {}

    def snapshot_store(self) -> SnapshotStore:
        return SnapshotStore(self.path("consents"))

    def registry(self) -> ViewRegistry:
        return ViewRegistry(self.path("views"))

    def access_log(self) -> AccessLog:
        return AccessLog(self.path("access_log"))
