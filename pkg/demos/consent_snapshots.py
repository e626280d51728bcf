"""How consent answers are stored and how reads travel back in time.

A million subjects, most of whom said yes. The snapshot keeps only the
minority answer, so it stays small. A later snapshot flips one subject,
and reads at different timestamps see the answer that held at that time.
"""

from __future__ import annotations

import numpy as np

from dataguard.consent import ConsentBinding, SnapshotStore, build_snapshot
from dataguard.errors import NoSnapshotAvailable


def main() -> None:
    rng = np.random.default_rng(0)
    n = 1_000_000
    granted = rng.random(n) < 0.97
    rows = list(zip(range(n), ["newsletter"] * n, granted.tolist()))

    store = SnapshotStore()
    (jan,) = build_snapshot(rows, "2026-01-01T00:00:00Z")
    store.save(jan)
    print(f"{n} subjects, {granted.mean():.1%} granted")
    print(f"stored {jan.polarity.name} with {len(jan.bitmap)} ids, "
          f"{jan.bitmap.size_in_bytes / 1024:.0f} KiB, containers {jan.bitmap.container_summary()}")

    # subject 0 changes their answer in February
    first = bool(granted[0])
    rows[0] = (0, "newsletter", not first)
    (feb,) = build_snapshot(rows, "2026-02-01T00:00:00Z")
    store.save(feb)

    for when in ("2026-01-15T00:00:00Z", "2026-02-15T00:00:00Z"):
        binding = ConsentBinding(store, when)
        print(f"at {when}: subject 0 consents={binding.has_consent('newsletter', 0)}, "
              f"unknown subject consents={binding.has_consent('newsletter', 10 ** 9)}")

    try:
        store.resolve("newsletter", "2025-12-31T00:00:00Z")
    except NoSnapshotAvailable as exc:
        print(f"before the first snapshot: {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    main()
