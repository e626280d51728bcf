"""Small worked examples used by tests, demos and the CLI's ``init`` command.

* ``nested_relation``: the four-column nested relation with a struct, an
  array of structs and a map of arrays, with its three sample rows.
* ``dedup_pairs``: six (path, policy) pairs over that relation whose
  maskings partly imply each other.
* ``member_*``: a member profile table with per-member ads and jobs settings.
"""

from __future__ import annotations

import json
from pathlib import Path

from .conditions import AttrClass
from .paths import parse_field_path
from .policy import LabelAssignment, PolicyCatalog, Purpose, PurposeGraph, make_policy
from .schema import RelationSchema, parse_type, relation

NESTED_COLUMNS = {
    "col1": "VARCHAR",
    "col2": "STRUCT<field21:BIGINT, field22:VARCHAR>",
    "col3": "ARRAY<STRUCT<field31:VARCHAR, field32:DOUBLE>>",
    "col4": "MAP<VARCHAR, ARRAY<STRUCT<field41:VARCHAR, field42:BOOLEAN>>>",
}

NESTED_ROWS = [
    {
        "col1": "abc",
        "col2": {"field21": 123, "field22": "foo"},
        "col3": [{"field31": "s1", "field32": 113.2}],
        "col4": None,
    },
    {"col1": "def", "col2": {"field21": 243, "field22": "bar"}, "col3": None, "col4": None},
    {
        "col1": "ghj",
        "col2": {"field21": 123, "field22": "bar"},
        "col3": [{"field31": "s1", "field32": 345.2}, {"field31": "s3", "field32": 212.0}],
        "col4": {
            "k1": [{"field41": "v1", "field42": True}, {"field41": "v2", "field42": False}],
            "k2": None,
        },
    },
]


def nested_relation(name: str = "R") -> RelationSchema:
    """The example relation with its first column as a string (no subject id)."""
    return relation(name, {k: parse_type(v) for k, v in NESTED_COLUMNS.items()})


def nested_relation_with_subject(name: str = "R") -> RelationSchema:
    """Same shape, but ``col1`` holds numeric member ids so consents can be looked up."""
    cols = {k: parse_type(v) for k, v in NESTED_COLUMNS.items()}
    cols["col1"] = parse_type("BIGINT")
    return relation(name, cols, subject_id_column="col1")


DEDUP_ROWS = [
    ("$", "p1"),
    ("$.col2.field21", "p1"),
    ("$.col3", "p2"),
    ("$.col3.[item].[?(@.field31='s1')]", "p2"),
    ("$.col4.[value]", "p3"),
    ("$.col4.[value]", "p4"),
]

DEDUP_CONDITIONS = {
    "p1": "consent1",
    "p2": "consent2",
    "p3": "consent3 AND consent4",
    "p4": "consent3",
}


def dedup_policies(purpose: str = "analytics") -> dict:
    return {pid: make_policy(pid, purpose, f"label_{pid}", cond) for pid, cond in DEDUP_CONDITIONS.items()}


def dedup_pairs(purpose: str = "analytics") -> list:
    policies = dedup_policies(purpose)
    return [(parse_field_path(path), policies[pid]) for path, pid in DEDUP_ROWS]


def dedup_catalog(purpose: str = "analytics") -> tuple[PolicyCatalog, list[LabelAssignment]]:
    """Catalog and label assignments that match to exactly the six dedup pairs."""
    policies = list(dedup_policies(purpose).values())
    catalog = PolicyCatalog(
        PurposeGraph([Purpose(purpose)]),
        policies,
        {f"consent{i}": AttrClass.CONSENT for i in range(1, 5)},
    )
    assignments = [LabelAssignment("R", parse_field_path(path), f"label_{pid}") for path, pid in DEDUP_ROWS]
    return catalog, assignments


# ---------------------------------------------------------------------------
# Member profiles


def member_profiles() -> RelationSchema:
    return relation(
        "member_profiles",
        {
            "memberId": parse_type("BIGINT"),
            "name": parse_type("VARCHAR"),
            "education": parse_type("VARCHAR"),
            "employer": parse_type("VARCHAR"),
        },
        subject_id_column="memberId",
    )


MEMBER_ROWS = [
    {"memberId": 123, "name": "Alice", "education": "Stanford", "employer": "Acme"},
    {"memberId": 234, "name": "Bob", "education": "MIT", "employer": "Globex"},
    {"memberId": 345, "name": "Carol", "education": "CMU", "employer": "Initech"},
]

MEMBER_SETTINGS = [
    {"memberId": 123, "allowEduForAds": False, "allowEmpForAds": True, "allowEduForJobs": True, "allowEmpForJobs": False},
    {"memberId": 234, "allowEduForAds": True, "allowEmpForAds": False, "allowEduForJobs": False, "allowEmpForJobs": True},
    {"memberId": 345, "allowEduForAds": True, "allowEmpForAds": True, "allowEduForJobs": True, "allowEmpForJobs": True},
]


def member_catalog() -> tuple[PolicyCatalog, list[LabelAssignment]]:
    registry = {name: AttrClass.CONSENT for name in MEMBER_SETTINGS[0] if name != "memberId"}
    policies = [
        make_policy("ads-edu", "ads", "education", "allowEduForAds = true", registry=registry),
        make_policy("ads-emp", "ads", "employer", "allowEmpForAds = true", registry=registry),
        make_policy("jobs-edu", "jobs", "education", "allowEduForJobs = true", registry=registry),
        make_policy("jobs-emp", "jobs", "employer", "allowEmpForJobs = true", registry=registry),
    ]
    catalog = PolicyCatalog(
        PurposeGraph([Purpose("ads"), Purpose("jobs")]),
        policies,
        registry,
        frozenset({"education", "employer"}),
    )
    assignments = [
        LabelAssignment("member_profiles", parse_field_path("$.education"), "education"),
        LabelAssignment("member_profiles", parse_field_path("$.employer"), "employer"),
    ]
    return catalog, assignments


# ---------------------------------------------------------------------------
# Demo workspace

NESTED_SUBJECT_IDS = [1, 2, 3]
NESTED_CONSENTS = {
    1: {"consent1": True, "consent2": False, "consent3": True, "consent4": True},
    2: {"consent1": False, "consent2": True, "consent3": True, "consent4": False},
    3: {"consent1": True, "consent2": True, "consent3": False, "consent4": True},
}


def demo_catalog() -> tuple[PolicyCatalog, list[LabelAssignment]]:
    """The member and nested examples merged into one catalog with three purposes."""
    members, member_labels = member_catalog()
    nested, nested_labels = dedup_catalog()
    catalog = PolicyCatalog(
        PurposeGraph([*members.purposes, *nested.purposes]),
        members.policies + nested.policies,
        {**members.attributes, **nested.attributes},
        members.labels | {p.label for p in nested.policies},
    )
    return catalog, member_labels + nested_labels


def write_demo_workspace(root) -> list[Path]:
    """Write schemas, catalogs, identities and sample data for both examples under ``root``."""
    root = Path(root)
    catalog, assignments = demo_catalog()
    written = []

    def put(rel: str, text: str) -> None:
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)

    def dump(obj) -> str:
        return json.dumps(obj, indent=2) + "\n"

    def lines(records) -> str:
        return "".join(json.dumps(r) + "\n" for r in records)

    put("schemas/member_profiles.json", dump(member_profiles().to_json()))
    put("schemas/R.json", dump(nested_relation_with_subject().to_json()))
    put("labels.json", dump([a.to_json() for a in assignments]))
    put("policies.json", dump(catalog.to_json()))
    put("identities.json", dump({"ads-ranker": "ads", "jobs-matcher": "jobs", "analytics-etl": "analytics"}))
    put("data/member_profiles.jsonl", lines(MEMBER_ROWS))
    put("data/member_settings.jsonl", lines(MEMBER_SETTINGS))
    nested_rows = [dict(row, col1=sid) for row, sid in zip(NESTED_ROWS, NESTED_SUBJECT_IDS)]
    put("data/R.jsonl", lines(nested_rows))
    consent_rows = [
        {"subject_id": sid, "consent_name": name, "value": value}
        for sid, settings in NESTED_CONSENTS.items()
        for name, value in settings.items()
    ]
    put("data/R_consents.jsonl", lines(consent_rows))
    return written
