"""Micro-benchmarks: CPU overhead of masking queries over identity queries.

Each query reads rows stored as JSON lines, decodes them, and calls one
scalar function per row on the benchmarked column: the identity for the
baseline, the bound ``MASK_FIELD_IF`` for the masking query. The masking
query also computes its consent conditions for the batch from a bitmap
snapshot, as the view would. Subject ids live in their own numeric column.

Baseline and masking runs are interleaved, timed with process CPU time
with the garbage collector paused, and every repetition is kept in the
report so trends can be recomputed.
"""

from __future__ import annotations

import gc
import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .consent import ConsentBinding, SnapshotStore, build_snapshot
from .evaluator import bind_mask_field_if
from .schema import SchemaType, array, atomic, struct

EXPERIMENTS = ("field-size", "depth", "policies", "consent-rate", "array")
ACCESS_TIME = 1_000_000
CONSENT = "benchConsent"
CHUNK_ROWS = 4096


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass
class Dataset:
    column_type: SchemaType
    lines: list[str]
    ids: np.ndarray


def _words(rng: np.random.Generator, n: int, length: int = 8) -> list[str]:
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    return ["".join(w) for w in letters[rng.integers(0, 26, size=(n, length))]]


def _encode(values: list) -> list[str]:
    return [json.dumps({"v": v}, separators=(",", ":")) for v in values]


def gen_primitive(n_rows: int, rng: np.random.Generator) -> Dataset:
    return Dataset(atomic("VARCHAR"), _encode(_words(rng, n_rows)), np.arange(n_rows, dtype=np.int64))


def gen_flat_struct(n_rows: int, n_fields: int, rng: np.random.Generator) -> Dataset:
    typ = struct([(f"f{i}", atomic("BIGINT")) for i in range(n_fields)])
    vals = rng.integers(0, 10**6, size=(n_rows, n_fields)).tolist()
    rows = [{f"f{i}": v for i, v in enumerate(r)} for r in vals]
    return Dataset(typ, _encode(rows), np.arange(n_rows, dtype=np.int64))


def nested_type(depth: int) -> SchemaType:
    """``depth`` levels of ``STRUCT<x:BIGINT, y:VARCHAR, a:...>``; the innermost has no ``a``."""
    typ = struct([("x", atomic("BIGINT")), ("y", atomic("VARCHAR"))])
    for _ in range(depth - 1):
        typ = struct([("x", atomic("BIGINT")), ("y", atomic("VARCHAR")), ("a", typ)])
    return typ


def gen_nested(n_rows: int, depth: int, rng: np.random.Generator) -> Dataset:
    xs = rng.integers(0, 10**6, size=(n_rows, depth)).tolist()
    words = _words(rng, n_rows, 6)
    rows = []
    for r, w in zip(xs, words):
        node = {"x": r[-1], "y": w}
        for level in range(depth - 2, -1, -1):
            node = {"x": r[level], "y": w, "a": node}
        rows.append(node)
    return Dataset(nested_type(depth), _encode(rows), np.arange(n_rows, dtype=np.int64))


def gen_array(n_rows: int, size: int, rng: np.random.Generator, match_rate: float = 0.5) -> Dataset:
    typ = array(struct([("f1", atomic("VARCHAR")), ("f2", atomic("VARCHAR"))]))
    matches = rng.random((n_rows, size)) < match_rate
    words = _words(rng, n_rows * size, 6)
    rows = [
        [{"f1": words[i * size + j], "f2": "x" if matches[i, j] else "y"} for j in range(size)]
        for i in range(n_rows)
    ]
    return Dataset(typ, _encode(rows), np.arange(n_rows, dtype=np.int64))


def consent_store(n_subjects: int, rate: float, rng: np.random.Generator) -> SnapshotStore:
    granted = rng.random(n_subjects) < rate
    store = SnapshotStore()
    rows = ((i, CONSENT, bool(g)) for i, g in enumerate(granted))
    for snap in build_snapshot(rows, ACCESS_TIME - 1):
        store.save(snap)
    return store


# ---------------------------------------------------------------------------
# Queries


def _identity(cond, value):
    return value


def scan_baseline(lines: list[str]) -> list:
    udf = _identity
    loads = json.loads
    return [udf(False, loads(line)["v"]) for line in lines]


def scan_masking(lines: list[str], ids: np.ndarray, udfs: list[Callable], binding: ConsentBinding) -> list:
    loads = json.loads
    cond = (~binding.has_consent_many(CONSENT, ids)).tolist()
    if len(udfs) == 1:
        udf = udfs[0]
        return [udf(c, loads(line)["v"]) for line, c in zip(lines, cond)]
    out = []
    for line, c in zip(lines, cond):
        v = loads(line)["v"]
        for udf in udfs:
            v = udf(c, v)
        out.append(v)
    return out


def run_pair(
    ds: Dataset, udfs: list[Callable], store: SnapshotStore, chunk: int = CHUNK_ROWS
) -> tuple[float, float, list[float]]:
    """CPU seconds of the baseline and the masking query over ``ds``, plus per-chunk overheads.

    Both queries advance through the data in the same chunks. Each chunk is
    timed in the order baseline, masking, masking, baseline, so slow drifts in
    machine speed and any advantage of running second cancel within the chunk.
    Every row is scanned twice by each query; the returned times are halved
    so they stay the cost of one scan. The third value holds each chunk's
    paired relative overhead.
    """
    binding = ConsentBinding(store, ACCESS_TIME)
    clock = time.process_time
    base = mask = 0.0
    ratios = []
    for start in range(0, len(ds.lines), chunk):
        lines = ds.lines[start:start + chunk]
        ids = ds.ids[start:start + chunk]
        t0 = clock()
        scan_baseline(lines)
        t1 = clock()
        scan_masking(lines, ids, udfs, binding)
        t2 = clock()
        scan_masking(lines, ids, udfs, binding)
        t3 = clock()
        scan_baseline(lines)
        t4 = clock()
        b, m = (t1 - t0) + (t4 - t3), t3 - t1
        base += b
        mask += m
        ratios.append(m / b - 1)
    return base / 2, mask / 2, ratios


# ---------------------------------------------------------------------------
# Reports


@dataclass
class Series:
    name: str
    xs: list
    baseline: list[list[float]] = field(default_factory=list)
    masking: list[list[float]] = field(default_factory=list)
    # per x: paired relative overhead of every chunk, pooled over repetitions
    chunk_overheads: list[list[float]] = field(default_factory=list)

    def overheads(self) -> np.ndarray:
        """Median paired chunk overhead per x, pooled over repetitions."""
        return np.array([np.median(c) for c in self.chunk_overheads])

    def total_overheads(self) -> np.ndarray:
        """Median over repetitions of whole-run relative overhead, per x."""
        b = np.asarray(self.baseline)
        m = np.asarray(self.masking)
        return np.median((m - b) / b, axis=1)

    def mean_overheads(self) -> np.ndarray:
        """Mean CPU time of masking over mean CPU time of baseline, minus one, per x."""
        b = np.asarray(self.baseline)
        m = np.asarray(self.masking)
        return m.mean(axis=1) / b.mean(axis=1) - 1

    def extra_us_per_row(self, rows: int) -> np.ndarray:
        """Median absolute extra CPU per row (microseconds) of masking over baseline."""
        b = np.asarray(self.baseline)
        m = np.asarray(self.masking)
        return np.median(m - b, axis=1) / rows * 1e6

    def to_json(self, rows: int) -> dict:
        ov = self.overheads()
        extra = self.extra_us_per_row(rows)
        return {
            "name": self.name,
            "x": list(self.xs),
            "baseline_seconds": self.baseline,
            "masking_seconds": self.masking,
            "baseline_us_per_row": [float(np.median(b)) / rows * 1e6 for b in self.baseline],
            "masking_us_per_row": [float(np.median(m)) / rows * 1e6 for m in self.masking],
            "overhead": [float(v) for v in ov],
            "overhead_totals": [float(v) for v in self.total_overheads()],
            "overhead_mean": [float(v) for v in self.mean_overheads()],
            "chunk_overheads": self.chunk_overheads,
            "extra_us_per_row": [float(v) for v in extra],
            "r2": linear_r2(self.xs, ov) if len(self.xs) > 2 else None,
            "r2_extra": linear_r2(self.xs, extra) if len(self.xs) > 2 else None,
        }


@dataclass
class BenchReport:
    experiment: str
    seed: int
    rows: int
    repetitions: int
    series: list[Series]

    def get(self, name: str) -> Series:
        return next(s for s in self.series if s.name == name)

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "rows": self.rows,
            "repetitions": self.repetitions,
            "series": [s.to_json(self.rows) for s in self.series],
        }

    def table(self) -> str:
        lines = [f"experiment={self.experiment} seed={self.seed} rows={self.rows} repetitions={self.repetitions}"]
        for s in self.series:
            js = s.to_json(self.rows)
            fit = f" r2={js['r2']:.3f} r2_extra={js['r2_extra']:.3f}" if js["r2"] is not None else ""
            lines.append(f"[{s.name}]{fit}")
            lines.append(f"{'x':>8} {'base us/row':>12} {'mask us/row':>12} {'extra us':>9} {'overhead':>9}")
            cells = zip(s.xs, js["baseline_us_per_row"], js["masking_us_per_row"], js["extra_us_per_row"], js["overhead"])
            for x, b, m, e, o in cells:
                lines.append(f"{x!s:>8} {b:12.3f} {m:12.3f} {e:9.3f} {o:9.1%}")
        return "\n".join(lines)


def linear_r2(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.allclose(ys, ys[0]):
        return 1.0
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return float(1 - resid.var() / ys.var())


def _measure(cases: list[tuple[str, object, Dataset, list[Callable], SnapshotStore]], repetitions: int) -> list[Series]:
    """Interleave baseline and masking runs for every case, repetition by repetition."""
    series: dict[str, Series] = {}
    for name, x, *_ in cases:
        s = series.setdefault(name, Series(name, []))
        s.xs.append(x)
        s.baseline.append([])
        s.masking.append([])
        s.chunk_overheads.append([])
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repetitions):
            for name, x, ds, udfs, store in cases:
                s = series[name]
                i = s.xs.index(x)
                base, mask, ratios = run_pair(ds, udfs, store)
                s.baseline[i].append(base)
                s.masking[i].append(mask)
                s.chunk_overheads[i].extend(ratios)
                gc.collect()
    finally:
        if gc_was_enabled:
            gc.enable()
    return list(series.values())


def run_experiment(
    experiment: str,
    rows: int = 100_000,
    repetitions: int = 5,
    seed: int = 0,
    xs: list | None = None,
    consent_rate: float = 0.0,
) -> BenchReport:
    """Run one experiment and return per-repetition timings.

    ``consent_rate`` is the share of subjects who granted the benchmark
    consent (ignored by the consent-rate experiment, which sweeps it).
    """
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    rng = np.random.default_rng(seed)
    store = consent_store(rows, consent_rate, rng)
    cases = []
    if experiment == "field-size":
        xs = xs or [1, 5, 10, 20, 50]
        prim = gen_primitive(rows, rng)
        cases.append(("primitive", 1, prim, [bind_mask_field_if("", prim.column_type)], store))
        for n in xs:
            ds = gen_flat_struct(rows, n, rng)
            cases.append(("flat-struct", n, ds, [bind_mask_field_if("", ds.column_type)], store))
    elif experiment == "depth":
        xs = xs or list(range(1, 9))
        ds = gen_nested(rows, max(xs), rng)
        for d in xs:
            path = ".".join(["a"] * (d - 1) + ["x"])
            cases.append(("depth", d, ds, [bind_mask_field_if(path, ds.column_type)], store))
    elif experiment == "policies":
        xs = xs or list(range(1, 11))
        ds = gen_flat_struct(rows, max(xs), rng)
        for k in xs:
            udfs = [bind_mask_field_if(f"f{i}", ds.column_type) for i in range(k)]
            cases.append(("policies", k, ds, udfs, store))
    elif experiment == "consent-rate":
        xs = xs or [0.0, 0.25, 0.5, 0.75, 1.0]
        ds = gen_array(rows, 8, rng)
        for rate in xs:
            rate_store = consent_store(rows, rate, rng)
            cases.append(("consent-rate", rate, ds, [bind_mask_field_if("[item].f1", ds.column_type)], rate_store))
    else:
        xs = xs or [1, 2, 4, 8, 16]
        for size in xs:
            ds = gen_array(rows, size, rng)
            cases.append(("conditional", size, ds, [bind_mask_field_if("[item].[?(@.f2='x')].f1", ds.column_type)], store))
            cases.append(("unconditional", size, ds, [bind_mask_field_if("[item].f1", ds.column_type)], store))
    series = _measure(cases, repetitions)
    return BenchReport(experiment, seed, rows, repetitions, series)
