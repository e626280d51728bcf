from __future__ import annotations

import pytest

from dataguard.consent import SnapshotStore, build_snapshot, melt_settings
from dataguard.evaluator import Relation
from dataguard.fixtures import (
    MEMBER_ROWS,
    MEMBER_SETTINGS,
    NESTED_CONSENTS,
    NESTED_ROWS,
    NESTED_SUBJECT_IDS,
    dedup_catalog,
    dedup_pairs,
    member_catalog,
    member_profiles,
    nested_relation,
    nested_relation_with_subject,
)

SNAPSHOT_TIME = "2026-01-01T00:00:00Z"
ACCESS_TIME = "2026-02-01T00:00:00Z"


@pytest.fixture
def nested_schema():
    return nested_relation()


@pytest.fixture
def nested_rel(nested_schema):
    return Relation.from_records(nested_schema, NESTED_ROWS)


@pytest.fixture
def subject_schema():
    return nested_relation_with_subject()


@pytest.fixture
def subject_rel(subject_schema):
    rows = [dict(r, col1=sid) for r, sid in zip(NESTED_ROWS, NESTED_SUBJECT_IDS)]
    return Relation.from_records(subject_schema, rows)


@pytest.fixture
def nested_store():
    store = SnapshotStore()
    rows = [(sid, name, v) for sid, cs in NESTED_CONSENTS.items() for name, v in cs.items()]
    for snap in build_snapshot(rows, SNAPSHOT_TIME):
        store.save(snap)
    return store


@pytest.fixture
def pairs():
    return dedup_pairs()


@pytest.fixture
def dedup():
    return dedup_catalog()


@pytest.fixture
def members():
    catalog, assignments = member_catalog()
    schema = member_profiles()
    store = SnapshotStore()
    for snap in build_snapshot(melt_settings(MEMBER_SETTINGS, "memberId"), SNAPSHOT_TIME):
        store.save(snap)
    return schema, Relation.from_records(schema, MEMBER_ROWS), catalog, assignments, store
