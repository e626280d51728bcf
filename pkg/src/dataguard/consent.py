"""Consent bitmaps: build, persist, and look up data-subject consents by time.

Each snapshot stores whichever side of a consent (granted or withheld) has
fewer subjects, so a bitmap never holds more than half the population.
Snapshots are addressed by ``(consent name, generated_at)`` and laid out as::

    <root>/<consent>/<generated_at>/bitmap.bin
    <root>/<consent>/<generated_at>/meta.json

A lookup at ``access_time`` uses the newest snapshot generated at or before
that instant.
"""

from __future__ import annotations

import bisect
import csv
import enum
import json
import shutil
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .bitmap import RoaringBitmap
from .errors import DuplicateSubjectRow, NoSnapshotAvailable


class Polarity(str, enum.Enum):
    TRUE_BITMAP = "TRUE_BITMAP"
    FALSE_BITMAP = "FALSE_BITMAP"


def to_datetime(value) -> datetime:
    """Coerce epoch seconds, ISO text or a datetime into an aware UTC datetime."""
    if isinstance(value, datetime):
        return value if value.tzinfo else value.replace(tzinfo=timezone.utc)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    if isinstance(value, str):
        text = value.strip().replace("Z", "+00:00")
        return to_datetime(datetime.fromisoformat(text))
    raise TypeError(f"cannot interpret {value!r} as a timestamp")


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def _folder_name(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H-%M-%S.%fZ")


def _parse_folder_name(name: str) -> datetime:
    return datetime.strptime(name, "%Y-%m-%dT%H-%M-%S.%fZ").replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class SnapshotAddress:
    consent_name: str
    generated_at: datetime

    def __str__(self) -> str:
        return f"{self.consent_name}@{self.generated_at.isoformat()}"


@dataclass(frozen=True, eq=False)
class ConsentSnapshot:
    consent_name: str
    polarity: Polarity
    bitmap: RoaringBitmap
    generated_at: datetime
    universe_size: int
    # Subjects present in the source table. Only needed for FALSE_BITMAP, where
    # "not in the bitmap" must still exclude subjects the table never mentioned.
    universe: RoaringBitmap | None = None

    @property
    def address(self) -> SnapshotAddress:
        return SnapshotAddress(self.consent_name, self.generated_at)

    def has_consent(self, subject_id) -> bool:
        if subject_id is None or isinstance(subject_id, bool):
            return False
        try:
            subject_id = int(subject_id)
        except (TypeError, ValueError):
            return False
        if subject_id < 0:
            return False
        member = subject_id in self.bitmap
        if self.polarity is Polarity.TRUE_BITMAP:
            return member
        known = self.universe is None or subject_id in self.universe
        return known and not member

    def has_consent_many(self, ids: np.ndarray) -> np.ndarray:
        """Vectorized lookup; ids below zero stand for missing subjects and never consent."""
        ids = np.asarray(ids, dtype=np.int64)
        if self.polarity is Polarity.TRUE_BITMAP:
            return self.bitmap.contains_many(ids)
        # the universe holds no negative ids, so it also screens out missing subjects
        out = self.universe.contains_many(ids) if self.universe is not None else ids >= 0
        if self.bitmap:
            out &= ~self.bitmap.contains_many(ids)
        return out

    def meta(self) -> dict:
        return {
            "consent_name": self.consent_name,
            "polarity": self.polarity.value,
            "universe_size": self.universe_size,
            "generated_at": self.generated_at.isoformat(),
            "cardinality": len(self.bitmap),
        }


def build_snapshot(rows: Iterable, as_of) -> list[ConsentSnapshot]:
    """Compute one snapshot per consent from ``(subject_id, consent_name, value)`` rows.

    Subjects that appear in the table but have no row for a given consent
    count as not consenting to it.
    """
    as_of = to_datetime(as_of)
    values: dict[str, dict[int, bool]] = {}
    universe: set[int] = set()
    for row in rows:
        if isinstance(row, Mapping):
            subject, name, value = row["subject_id"], row["consent_name"], row["value"]
        else:
            subject, name, value = row
        subject = int(subject)
        if subject < 0:
            raise ValueError(f"subject ids must be non-negative, got {subject}")
        value = _as_bool(value)
        per = values.setdefault(str(name), {})
        if subject in per and per[subject] != value:
            raise DuplicateSubjectRow(f"subject {subject} has conflicting values for consent {name!r}")
        per[subject] = value
        universe.add(subject)
    n = len(universe)
    universe_arr = np.fromiter(universe, dtype=np.int64, count=n)
    out = []
    for name in sorted(values):
        granted = np.fromiter((s for s, v in values[name].items() if v), dtype=np.int64)
        if granted.size <= n - granted.size:
            polarity, ids = Polarity.TRUE_BITMAP, granted
        else:
            polarity, ids = Polarity.FALSE_BITMAP, np.setdiff1d(universe_arr, granted)
        universe_bitmap = RoaringBitmap(universe_arr) if polarity is Polarity.FALSE_BITMAP else None
        out.append(ConsentSnapshot(name, polarity, RoaringBitmap(ids), as_of, n, universe_bitmap))
    return out


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, np.integer)):
        return bool(value)
    text = str(value).strip().lower()
    if text in ("true", "t", "1", "yes", "y"):
        return True
    if text in ("false", "f", "0", "no", "n", ""):
        return False
    raise ValueError(f"not a boolean consent value: {value!r}")


def read_consent_table(path: str | Path) -> list[tuple[int, str, bool]]:
    """Read ``subject_id, consent_name, value`` rows from CSV or JSON lines."""
    path = Path(path)
    rows = []
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append((int(rec["subject_id"]), rec["consent_name"], _as_bool(rec["value"])))
    else:
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    rows.append((int(rec["subject_id"]), rec["consent_name"], _as_bool(rec["value"])))
    return rows


def melt_settings(records: Iterable[Mapping], id_column: str) -> list[tuple[int, str, bool]]:
    """Turn a wide settings table (one boolean column per consent) into consent rows."""
    rows = []
    for rec in records:
        for key, value in rec.items():
            if key != id_column and value is not None:
                rows.append((int(rec[id_column]), key, _as_bool(value)))
    return rows


class SnapshotStore:
    """List/load/save snapshots; filesystem-backed when ``root`` is given, else in memory.

    Loaded snapshots are cached and shared between threads.
    """

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self._lock = threading.RLock()
        self._cache: dict[SnapshotAddress, ConsentSnapshot] = {}
        self._index: dict[str, list[datetime]] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._scan()

    def _scan(self) -> None:
        for consent_dir in sorted(p for p in self.root.iterdir() if p.is_dir()):
            times = []
            for snap_dir in consent_dir.iterdir():
                if (snap_dir / "meta.json").exists():
                    meta = json.loads((snap_dir / "meta.json").read_text())
                    times.append(to_datetime(meta["generated_at"]))
            if times:
                self._index[consent_dir.name] = sorted(times)

    def _dir(self, address: SnapshotAddress) -> Path:
        return self.root / address.consent_name / _folder_name(address.generated_at)

    def consents(self) -> list[str]:
        with self._lock:
            return sorted(self._index)

    def list(self, consent_name: str) -> list[datetime]:
        with self._lock:
            return list(self._index.get(consent_name, ()))

    def addresses(self) -> list[SnapshotAddress]:
        with self._lock:
            return [SnapshotAddress(c, t) for c in sorted(self._index) for t in self._index[c]]

    def save(self, snapshot: ConsentSnapshot) -> SnapshotAddress:
        address = snapshot.address
        with self._lock:
            times = self._index.setdefault(snapshot.consent_name, [])
            if address.generated_at in times:
                raise ValueError(f"snapshot {address} already exists")
            if self.root is not None:
                folder = self._dir(address)
                tmp = folder.with_name(folder.name + ".tmp")
                tmp.mkdir(parents=True, exist_ok=True)
                (tmp / "bitmap.bin").write_bytes(snapshot.bitmap.serialize())
                if snapshot.universe is not None:
                    (tmp / "universe.bin").write_bytes(snapshot.universe.serialize())
                (tmp / "meta.json").write_text(json.dumps(snapshot.meta(), indent=2) + "\n")
                tmp.rename(folder)
            bisect.insort(times, address.generated_at)
            self._cache[address] = snapshot
        return address

    def load(self, consent_name: str, generated_at) -> ConsentSnapshot:
        address = SnapshotAddress(consent_name, to_datetime(generated_at))
        with self._lock:
            snap = self._cache.get(address)
            if snap is not None:
                return snap
            if self.root is None or address.generated_at not in self._index.get(consent_name, ()):
                raise KeyError(f"no snapshot {address}")
            folder = self._dir(address)
            meta = json.loads((folder / "meta.json").read_text())
            bitmap = RoaringBitmap.deserialize((folder / "bitmap.bin").read_bytes())
            universe_path = folder / "universe.bin"
            universe = RoaringBitmap.deserialize(universe_path.read_bytes()) if universe_path.exists() else None
            snap = ConsentSnapshot(
                meta["consent_name"],
                Polarity(meta["polarity"]),
                bitmap,
                to_datetime(meta["generated_at"]),
                int(meta["universe_size"]),
                universe,
            )
            self._cache[address] = snap
            return snap

    def remove(self, address: SnapshotAddress) -> None:
        with self._lock:
            times = self._index.get(address.consent_name, [])
            times.remove(address.generated_at)
            if not times:
                del self._index[address.consent_name]
            self._cache.pop(address, None)
            if self.root is not None:
                shutil.rmtree(self._dir(address), ignore_errors=True)

    def resolve(self, consent_name: str, access_time) -> ConsentSnapshot:
        """Newest snapshot of ``consent_name`` generated at or before ``access_time``."""
        access_time = to_datetime(access_time)
        with self._lock:
            times = self._index.get(consent_name, [])
            i = bisect.bisect_right(times, access_time)
            if i == 0:
                raise NoSnapshotAvailable(consent_name, access_time)
            generated_at = times[i - 1]
        return self.load(consent_name, generated_at)


def split_consents(consents: str) -> list[str]:
    return [c.strip() for c in consents.split(",") if c.strip()]


def has_user_consent(consents: str, subject_id, access_time, store: SnapshotStore) -> bool:
    """True when the subject granted every comma-separated consent as of ``access_time``."""
    names = split_consents(consents)
    snaps = [store.resolve(name, access_time) for name in names]
    return all(s.has_consent(subject_id) for s in snaps)


class ConsentBinding:
    """Snapshot resolution pinned to one access time, as used by a single query."""

    def __init__(self, store: SnapshotStore, access_time=None):
        self.store = store
        self.access_time = to_datetime(access_time) if access_time is not None else utcnow()
        self._snapshots: dict[str, ConsentSnapshot] = {}
        self._lock = threading.Lock()

    def snapshot(self, consent_name: str) -> ConsentSnapshot:
        snap = self._snapshots.get(consent_name)
        if snap is None:
            with self._lock:
                snap = self._snapshots.get(consent_name)
                if snap is None:
                    snap = self.store.resolve(consent_name, self.access_time)
                    self._snapshots[consent_name] = snap
        return snap

    def has_consent(self, consent_name: str, subject_id) -> bool:
        return self.snapshot(consent_name).has_consent(subject_id)

    def has_consent_many(self, consent_name: str, ids: np.ndarray) -> np.ndarray:
        return self.snapshot(consent_name).has_consent_many(ids)


def snapshot_gc(store: SnapshotStore, retention: timedelta, now=None) -> list[SnapshotAddress]:
    """Delete snapshots older than ``retention``, always keeping each consent's newest one."""
    now = to_datetime(now) if now is not None else utcnow()
    cutoff = now - retention
    removed = []
    for consent in store.consents():
        times = store.list(consent)
        latest = times[-1]
        for t in times:
            if t < cutoff and t != latest:
                address = SnapshotAddress(consent, t)
                store.remove(address)
                removed.append(address)
    return removed
