"""Two teams read the same member table and see different cells.

The ads team and the jobs team each get a view compiled for their purpose.
Members opted out of some uses in their settings; the views null those
cells at read time, with no copy of the table per team.
"""

from __future__ import annotations

from dataguard.consent import SnapshotStore, build_snapshot, melt_settings
from dataguard.evaluator import Relation, apply_plan
from dataguard.fixtures import MEMBER_ROWS, MEMBER_SETTINGS, member_catalog, member_profiles
from dataguard.viewshift import build_view

SNAPSHOT_AT = "2026-01-01T00:00:00Z"
READ_AT = "2026-02-01T00:00:00Z"


def main() -> None:
    schema = member_profiles()
    catalog, assignments = member_catalog()
    table = Relation.from_records(schema, MEMBER_ROWS)

    # member settings are wide (one column per consent); melt them into consent rows
    store = SnapshotStore()
    for snap in build_snapshot(melt_settings(MEMBER_SETTINGS, "memberId"), SNAPSHOT_AT):
        store.save(snap)
        print(f"snapshot {snap.consent_name}: {snap.polarity.name}, {len(snap.bitmap)} ids stored")

    for purpose in ("ads", "jobs"):
        view = build_view(schema, assignments, catalog.effective(purpose), purpose, created_at=SNAPSHOT_AT)
        print(f"\n--- {view.view_id} ---")
        print(view.sql)
        for row in apply_plan(view, table, READ_AT, store).rows:
            print(row)


if __name__ == "__main__":
    main()
