"""From overlapping policies to a small plan, then through a policy change.

Six policies guard one nested table. Several repeat a consent that an
ancestor already demands, so the planner drops them. The compiled view is
checked row by row against applying every policy one at a time. A new
policy then arrives, maintenance recompiles, and a consumer pinned to the
old version keeps reading it while the default moves on.
"""

from __future__ import annotations

from dataguard.compiler import compile_view
from dataguard.conditions import render_condition
from dataguard.consent import ConsentBinding
from dataguard.consent import SnapshotStore, build_snapshot
from dataguard.evaluator import Relation, apply_plan, values_equal
from dataguard.fixtures import (
    NESTED_CONSENTS,
    NESTED_ROWS,
    NESTED_SUBJECT_IDS,
    dedup_catalog,
    dedup_pairs,
    nested_relation_with_subject,
)
from dataguard.oracle import oracle_fold
from dataguard.paths import parse_field_path
from dataguard.planner import plan_pairs
from dataguard.policy import LabelAssignment, PolicyCatalog, make_policy
from dataguard.viewshift import AccessContext, AccessLog, Inventory, ViewRegistry, get_view, maintain_views


def section(title: str) -> None:
    print(f"\n== {title} ==")


def main() -> None:
    schema = nested_relation_with_subject()
    pairs = dedup_pairs()

    section("matched policies")
    for path, policy in pairs:
        print(f"{str(path):32} {policy.id}: keep if {render_condition(policy.keep_condition)}")

    kept, dropped = plan_pairs(pairs)
    section("after pruning")
    for path, policy in kept:
        print(f"keep  {str(path):26} {policy.id}")
    for path, policy in dropped:
        print(f"drop  {str(path):26} {policy.id} (its consents are already required)")

    view = compile_view(schema, kept, "analytics", dropped=dropped)
    section("compiled view")
    print(view.sql)

    # run both routes over the sample rows and compare
    store = SnapshotStore()
    rows = [(sid, name, v) for sid, cs in NESTED_CONSENTS.items() for name, v in cs.items()]
    for snap in build_snapshot(rows, "2026-01-01T00:00:00Z"):
        store.save(snap)
    binding = ConsentBinding(store, "2026-02-01T00:00:00Z")
    table = Relation.from_records(schema, [dict(r, col1=s) for r, s in zip(NESTED_ROWS, NESTED_SUBJECT_IDS)])
    planned = apply_plan(view, table, binding=binding).rows
    folded = oracle_fold(table, pairs, binding).rows
    section("plan vs one-policy-at-a-time")
    for row in planned:
        print(row)
    print("equal:", values_equal(planned, folded))

    section("versions")
    catalog, assignments = dedup_catalog()
    registry, log = ViewRegistry(), AccessLog()
    inventory = Inventory({"R": schema}, assignments, catalog)
    print("first run:", [v.view_id for v in maintain_views(inventory, registry, now="2026-01-01T00:00:00Z").updated])
    print("rerun:", [v.view_id for v in maintain_views(inventory, registry, now="2026-01-02T00:00:00Z").updated])

    extra = make_policy("p9", "analytics", "label_p9", "consent9")
    changed = Inventory(
        {"R": schema},
        list(assignments) + [LabelAssignment("R", parse_field_path("$.col2.field22"), "label_p9")],
        PolicyCatalog(catalog.purposes, list(catalog.policies) + [extra], dict(catalog.attributes)),
    )
    print("new policy:", [v.view_id for v in maintain_views(changed, registry, now="2026-01-03T00:00:00Z").updated])

    default = get_view("R", AccessContext("analytics"), registry, log)
    pinned = get_view("R", AccessContext("analytics", "1.0.0", "prod"), registry, log)
    print(f"default reader gets {default.version}, pinned reader gets {pinned.version}")
    print(f"{len(log)} accesses logged")


if __name__ == "__main__":
    main()
