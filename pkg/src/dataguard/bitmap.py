"""Compressed sets of 64-bit unsigned integers in the Roaring container layout.

Ids are split into a 48-bit high key and a 16-bit low part. Each distinct
high key owns one container holding its low parts in whichever of three
encodings is smallest:

* array  -- sorted ``uint16`` values (2 bytes per id)
* bitset -- 1024 ``uint64`` words (8 KiB flat)
* run    -- ``(start, length - 1)`` ``uint16`` pairs (4 bytes per run)

The set is immutable; membership is answered one id at a time or for a
whole numpy array at once.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator

import numpy as np

ARRAY, BITSET, RUN = 0, 1, 2
CONTAINER_NAMES = {ARRAY: "array", BITSET: "bitset", RUN: "run"}

_MAGIC = b"DGRB"
_VERSION = 1
_HEADER = struct.Struct("<4sHI")
_CONTAINER = struct.Struct("<QBII")
_BITSET_BYTES = 8192


def _encode_chunk(low: np.ndarray) -> tuple[int, np.ndarray]:
    """Choose the smallest encoding for one chunk of sorted unique low parts."""
    n = low.size
    breaks = np.flatnonzero(np.diff(low.astype(np.int32)) != 1) + 1
    starts_idx = np.concatenate(([0], breaks))
    n_runs = starts_idx.size
    sizes = {ARRAY: 2 * n, RUN: 4 * n_runs, BITSET: _BITSET_BYTES}
    kind = min(sizes, key=lambda k: (sizes[k], k))
    if kind == ARRAY:
        return ARRAY, low.astype(np.uint16)
    if kind == RUN:
        ends_idx = np.concatenate((breaks - 1, [n - 1]))
        runs = np.empty(2 * n_runs, dtype=np.uint16)
        runs[0::2] = low[starts_idx]
        runs[1::2] = low[ends_idx] - low[starts_idx]
        return RUN, runs
    words = np.zeros(1024, dtype=np.uint64)
    low64 = low.astype(np.uint64)
    np.bitwise_or.at(words, (low64 >> np.uint64(6)).astype(np.intp), np.uint64(1) << (low64 & np.uint64(63)))
    return BITSET, words


def _chunk_contains(kind: int, payload: np.ndarray, low: np.ndarray) -> np.ndarray:
    if kind == ARRAY:
        if payload.size == 0:
            return np.zeros(low.shape, dtype=bool)
        j = np.searchsorted(payload, low)
        j_clipped = np.minimum(j, payload.size - 1)
        return (j < payload.size) & (payload[j_clipped] == low)
    if kind == BITSET:
        low64 = low.astype(np.uint64)
        words = payload[(low64 >> np.uint64(6)).astype(np.intp)]
        return ((words >> (low64 & np.uint64(63))) & np.uint64(1)).astype(bool)
    if payload.size <= 8:
        # a handful of runs: direct range tests are cheaper than a search;
        # bounds stay within uint16, so no widening is needed
        bounds = payload.tolist()
        out = (low >= bounds[0]) & (low <= bounds[0] + bounds[1])
        for start, extra in zip(bounds[2::2], bounds[3::2]):
            out |= (low >= start) & (low <= start + extra)
        return out
    low_i = low.astype(np.int64)
    starts = payload[0::2].astype(np.int64)
    lengths = payload[1::2].astype(np.int64)
    j = np.searchsorted(starts, low_i, side="right") - 1
    ok = j >= 0
    j_clipped = np.maximum(j, 0)
    return ok & (low_i <= starts[j_clipped] + lengths[j_clipped])


def _chunk_values(kind: int, payload: np.ndarray) -> np.ndarray:
    if kind == ARRAY:
        return payload.astype(np.uint64)
    if kind == BITSET:
        bits = np.unpackbits(payload.view(np.uint8), bitorder="little")
        return np.flatnonzero(bits).astype(np.uint64)
    starts = payload[0::2].astype(np.int64)
    lengths = payload[1::2].astype(np.int64) + 1
    if starts.size == 0:
        return np.empty(0, dtype=np.uint64)
    offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(lengths)[:-1])), lengths)
    return (np.arange(lengths.sum()) + offsets).astype(np.uint64)


class RoaringBitmap:
    """Immutable compressed set of non-negative 64-bit integers."""

    __slots__ = ("_keys", "_kinds", "_payloads", "_cards")

    def __init__(self, ids: Iterable[int] | np.ndarray = ()):
        if isinstance(ids, np.ndarray):
            arr = ids
        else:
            # build from Python ints directly: letting numpy infer a dtype for a
            # mix of small and >= 2**63 values silently yields float64
            values = list(ids)
            for v in values:
                if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                    raise TypeError(f"bitmap ids must be integers, got {v!r}")
                if v < 0:
                    raise ValueError("bitmap ids must be non-negative")
            arr = np.array(values, dtype=np.uint64)
        if arr.size and arr.dtype.kind == "i" and arr.min() < 0:
            raise ValueError("bitmap ids must be non-negative")
        if arr.size and arr.dtype.kind not in "iu":
            raise TypeError(f"bitmap ids must be integers, got dtype {arr.dtype}")
        arr = np.unique(arr.astype(np.uint64))
        keys, kinds, payloads, cards = [], [], [], []
        if arr.size:
            high = arr >> np.uint64(16)
            low = (arr & np.uint64(0xFFFF)).astype(np.uint16)
            bounds = np.flatnonzero(np.diff(high)) + 1
            for chunk_high, chunk_low in zip(np.split(high, bounds), np.split(low, bounds)):
                kind, payload = _encode_chunk(chunk_low)
                keys.append(int(chunk_high[0]))
                kinds.append(kind)
                payloads.append(payload)
                cards.append(int(chunk_low.size))
        self._keys = np.array(keys, dtype=np.uint64)
        self._kinds = kinds
        self._payloads = payloads
        self._cards = cards

    @classmethod
    def _from_parts(cls, keys, kinds, payloads, cards) -> RoaringBitmap:
        bm = cls.__new__(cls)
        bm._keys = np.array(keys, dtype=np.uint64)
        bm._kinds = list(kinds)
        bm._payloads = list(payloads)
        bm._cards = list(cards)
        return bm

    def __len__(self) -> int:
        return sum(self._cards)

    def __bool__(self) -> bool:
        return bool(self._keys.size)

    def __contains__(self, x) -> bool:
        try:
            x = int(x)
        except (TypeError, ValueError):
            return False
        if x < 0 or x >= 1 << 64:
            return False
        i = int(np.searchsorted(self._keys, np.uint64(x >> 16)))
        if i >= self._keys.size or int(self._keys[i]) != x >> 16:
            return False
        return bool(_chunk_contains(self._kinds[i], self._payloads[i], np.array([x & 0xFFFF], dtype=np.uint16))[0])

    def contains_many(self, ids) -> np.ndarray:
        """Vectorized membership; negative ids are never members."""
        ids = np.asarray(ids, dtype=np.int64)
        out = np.zeros(ids.shape, dtype=bool)
        if not self._keys.size or not ids.size:
            return out
        if self._keys.size <= 8:
            # few containers: one boolean mask per container beats sorting the ids;
            # negative ids have a negative high part and match no key
            high = ids >> 16
            low = (ids & 0xFFFF).astype(np.uint16)
            for c, key in enumerate(self._keys.tolist()):
                sel = high == key
                if sel.all():
                    return _chunk_contains(self._kinds[c], self._payloads[c], low)
                if sel.any():
                    out[sel] = _chunk_contains(self._kinds[c], self._payloads[c], low[sel])
            return out
        valid = np.flatnonzero(ids >= 0)
        u = ids[valid].astype(np.uint64)
        high = u >> np.uint64(16)
        pos = np.searchsorted(self._keys, high)
        pos_clipped = np.minimum(pos, self._keys.size - 1)
        hit = (pos < self._keys.size) & (self._keys[pos_clipped] == high)
        if not hit.any():
            return out
        low = (u & np.uint64(0xFFFF)).astype(np.uint16)
        hit_idx = np.flatnonzero(hit)
        hit_pos = pos[hit_idx]
        order = np.argsort(hit_pos, kind="stable")
        sorted_pos = hit_pos[order]
        bounds = np.flatnonzero(np.diff(sorted_pos)) + 1
        for group in np.split(order, bounds):
            c = int(hit_pos[group[0]])
            rows = hit_idx[group]
            out[valid[rows]] = _chunk_contains(self._kinds[c], self._payloads[c], low[rows])
        return out

    def to_array(self) -> np.ndarray:
        parts = [
            (np.uint64(k) << np.uint64(16)) | _chunk_values(kind, payload)
            for k, kind, payload in zip(self._keys, self._kinds, self._payloads)
        ]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.uint64)

    def __iter__(self) -> Iterator[int]:
        return (int(x) for x in self.to_array())

    def __eq__(self, other) -> bool:
        if not isinstance(other, RoaringBitmap):
            return NotImplemented
        return len(self) == len(other) and np.array_equal(self.to_array(), other.to_array())

    def __repr__(self) -> str:
        return f"RoaringBitmap(cardinality={len(self)}, containers={self.container_summary()})"

    def container_summary(self) -> dict[str, int]:
        summary = {name: 0 for name in CONTAINER_NAMES.values()}
        for kind in self._kinds:
            summary[CONTAINER_NAMES[kind]] += 1
        return summary

    def serialize(self) -> bytes:
        chunks = [_HEADER.pack(_MAGIC, _VERSION, len(self._kinds))]
        for key, kind, payload, card in zip(self._keys, self._kinds, self._payloads, self._cards):
            data = payload.astype(payload.dtype.newbyteorder("<"), copy=False).tobytes()
            chunks.append(_CONTAINER.pack(int(key), kind, card, len(data)))
            chunks.append(data)
        return b"".join(chunks)

    @classmethod
    def deserialize(cls, data: bytes) -> RoaringBitmap:
        magic, version, count = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a serialized dataguard bitmap")
        offset = _HEADER.size
        keys, kinds, payloads, cards = [], [], [], []
        for _ in range(count):
            key, kind, card, nbytes = _CONTAINER.unpack_from(data, offset)
            offset += _CONTAINER.size
            dtype = "<u8" if kind == BITSET else "<u2"
            payload = np.frombuffer(data, dtype=dtype, count=nbytes // np.dtype(dtype).itemsize, offset=offset)
            offset += nbytes
            keys.append(key)
            kinds.append(kind)
            payloads.append(payload.astype(np.uint64 if kind == BITSET else np.uint16))
            cards.append(card)
        if offset != len(data):
            raise ValueError("trailing bytes after serialized bitmap")
        return cls._from_parts(keys, kinds, payloads, cards)

    @property
    def size_in_bytes(self) -> int:
        return _HEADER.size + sum(_CONTAINER.size + p.nbytes for p in self._payloads)
