"""Command-line entry point: ``dataguard <command> [options]``.

Exit status is 0 on success, 1 for invalid inputs (catalogs, paths,
schemas, conditions) and 2 for runtime failures (missing snapshots or
views, I/O).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from . import __version__
from .bench import EXPERIMENTS, run_experiment
from .compiler import ViewDefinition
from .consent import ConsentBinding, build_snapshot, melt_settings, read_consent_table, snapshot_gc, to_datetime, utcnow
from .errors import (
    CatalogError,
    DataGuardError,
    MissingSubjectId,
    ParseError,
    PathTypeMismatch,
    ResolutionError,
    SchemaError,
    SchemaMismatch,
    UnknownPurpose,
    UnsupportedCondition,
)
from .evaluator import ApplyStats, Relation, apply_plan, read_jsonl, values_equal, write_jsonl
from .policy import match_policies
from .viewshift import AccessContext, gc_views, get_view, maintain_views, pinned_behind_latest
from .workspace import WorkspaceConfig

OK, INVALID, FAILED = 0, 1, 2

VALIDATION_ERRORS = (
    CatalogError,
    ParseError,
    SchemaError,
    ResolutionError,
    PathTypeMismatch,
    SchemaMismatch,
    UnknownPurpose,
    UnsupportedCondition,
    MissingSubjectId,
)


class CommandError(Exception):
    def __init__(self, message: str, status: int = FAILED):
        super().__init__(message)
        self.status = status


def _emit(args, payload: dict, text: str | None = None, stream=None) -> None:
    stream = stream or sys.stdout
    if args.json or text is None:
        print(json.dumps(payload, indent=2, default=str), file=stream)
    else:
        print(text, file=stream)


def _scope(values: list[str] | None):
    return values if values else None


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(args, ws: WorkspaceConfig) -> int:
    inv = ws.inventory()
    for purpose in inv.catalog.purposes.names:
        inv.catalog.effective(purpose)
    payload = {
        "relations": len(inv.schemas),
        "assignments": len(inv.assignments),
        "policies": len(inv.catalog.policies),
        "purposes": len(inv.catalog.purposes.names),
    }
    text = "ok: " + ", ".join(f"{v} {k}" for k, v in payload.items())
    _emit(args, {"status": "ok", **payload}, text)
    return OK


def cmd_compile(args, ws: WorkspaceConfig) -> int:
    inv = ws.inventory()
    registry = ws.registry()
    report = maintain_views(inv, registry, relations=_scope(args.relation), purposes=_scope(args.purpose))
    payload = report.to_json()
    lines = []
    for v in payload["updated"]:
        lines.append(
            f"{v['purpose']}.{v['relation']}@{v['version']}: {v['row_filters']} row filters, "
            f"{v['column_masks']} column masks, {v['pruned']} pruned"
        )
    for e in payload["errors"]:
        lines.append(f"error {e['purpose']}.{e['relation']}: {e['error']}")
    lines.append(f"{len(payload['updated'])} compiled, {payload['unchanged']} unchanged, {len(payload['errors'])} errors")
    _emit(args, payload, "\n".join(lines))
    return INVALID if payload["errors"] else OK


def cmd_maintain(args, ws: WorkspaceConfig) -> int:
    report = maintain_views(ws.inventory(), ws.registry())
    payload = report.to_json()
    payload["summary"] = f"{len(payload['updated'])} updated"
    _emit(args, payload)
    return INVALID if payload["errors"] else OK


def _load_view(ws: WorkspaceConfig, relation: str, purpose: str, version: str | None) -> ViewDefinition:
    registry = ws.registry()
    if version is not None:
        return registry.get(relation, purpose, version)
    view = registry.latest(relation, purpose)
    if view is None:
        raise CommandError(f"no view registered for {purpose}.{relation}")
    return view


def _oracle(ws: WorkspaceConfig, view: ViewDefinition, rel: Relation, binding) -> Relation:
    from .oracle import oracle_fold

    inv = ws.inventory()
    pairs = match_policies(view.schema, inv.assignments, inv.catalog.effective(view.purpose))
    return oracle_fold(rel, pairs, binding)


def cmd_apply(args, ws: WorkspaceConfig) -> int:
    view = _load_view(ws, args.relation, args.purpose, args.version)
    rel = read_jsonl(args.data, view.schema)
    access_time = to_datetime(args.access_time) if args.access_time else utcnow()
    binding = ConsentBinding(ws.snapshot_store(), access_time)
    stats = ApplyStats()
    out = apply_plan(view, rel, binding=binding, stats=stats)
    payload = {"view": f"{view.purpose}.{view.relation}@{view.version}", "access_time": access_time.isoformat(),
               **stats.to_json()}
    if args.oracle:
        expected = _oracle(ws, view, rel, binding)
        same = len(expected.rows) == len(out.rows) and all(
            values_equal(a, b) for a, b in zip(expected.rows, out.rows)
        )
        payload["oracle_equal"] = same
        out = expected
    if args.out:
        write_jsonl(out, args.out)
        payload["output"] = str(args.out)
    else:
        for row in out.to_records():
            print(json.dumps(row))
    lines = [f"{payload['view']}: {stats.rows_in} rows in, {stats.rows_out} rows out"]
    lines += [f"  {path}: {count} masked" for path, count in sorted(stats.masked.items())]
    if args.oracle:
        lines.append(f"  oracle: {'equal' if payload['oracle_equal'] else 'MISMATCH'}")
    _emit(args, payload, "\n".join(lines), stream=sys.stdout if args.out else sys.stderr)
    if args.oracle and not payload["oracle_equal"]:
        return FAILED
    return OK


def cmd_bench(args, ws: WorkspaceConfig | None) -> int:
    report = run_experiment(
        args.experiment,
        rows=args.rows,
        repetitions=args.repetitions,
        seed=args.seed,
        consent_rate=args.consent_rate,
    )
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    _emit(args, payload, report.table())
    return OK


def cmd_route(args, ws: WorkspaceConfig) -> int:
    if args.identity:
        ctx = AccessContext.for_identity(args.identity, ws.identities(), args.pin, args.environment)
    elif args.purpose:
        ctx = AccessContext(args.purpose, args.pin, args.environment)
    else:
        raise CommandError("route needs --purpose or --identity", INVALID)
    ident = get_view(args.relation, ctx, ws.registry(), ws.access_log())
    _emit(args, {"view_id": str(ident), "relation": ident.relation, "purpose": ident.purpose,
                 "version": ident.version, "pinned": args.pin is not None})
    return OK


def cmd_gc(args, ws: WorkspaceConfig) -> int:
    keep = args.keep_latest if args.keep_latest is not None else ws.view_keep_latest
    min_age = ws.view_min_age if args.min_age_days is None else _days(args.min_age_days)
    retention = ws.snapshot_retention if args.retention_days is None else _days(args.retention_days)
    views = gc_views(ws.registry(), keep, min_age)
    snaps = snapshot_gc(ws.snapshot_store(), retention) if args.snapshots else []
    _emit(args, {"views_removed": [str(v) for v in views], "snapshots_removed": [str(s) for s in snaps]})
    return OK


def _days(value: float) -> timedelta:
    return timedelta(days=value)


def cmd_bitmap_build(args, ws: WorkspaceConfig) -> int:
    path = Path(args.table)
    if args.wide:
        rows = melt_settings(_read_records(path), args.wide)
    else:
        rows = read_consent_table(path)
    # Default timestamp is the table's mtime so a rerun on the same file is a no-op.
    as_of = to_datetime(args.as_of) if args.as_of else datetime.fromtimestamp(path.stat().st_mtime, timezone.utc)
    store = ws.snapshot_store()
    report = []
    for snap in build_snapshot(rows, as_of):
        entry = {**snap.meta(), "status": "created"}
        if snap.generated_at in store.list(snap.consent_name):
            existing = store.load(snap.consent_name, snap.generated_at)
            if existing.polarity != snap.polarity or existing.bitmap != snap.bitmap:
                raise CommandError(f"a different snapshot of {snap.consent_name} already exists at {as_of.isoformat()}")
            entry["status"] = "unchanged"
        else:
            store.save(snap)
        report.append(entry)
    _emit(args, {"as_of": as_of.isoformat(), "snapshots": report})
    return OK


def _read_records(path: Path) -> list[dict]:
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cmd_report(args, ws: WorkspaceConfig) -> int:
    registry = ws.registry()
    views = [{"relation": r, "purpose": p, "versions": registry.versions(r, p)} for r, p in registry.keys()]
    behind = pinned_behind_latest(ws.access_log(), registry)
    store = ws.snapshot_store()
    snapshots = {c: [t.isoformat() for t in store.list(c)] for c in store.consents()}
    _emit(args, {"views": views, "pinned_behind_latest": behind, "snapshots": snapshots})
    return OK


def cmd_init(args, ws_path: Path) -> int:
    from . import fixtures

    ws_path.mkdir(parents=True, exist_ok=True)
    if any(ws_path.iterdir()) and not args.force:
        raise CommandError(f"{ws_path} is not empty (use --force to overwrite)", INVALID)
    written = fixtures.write_demo_workspace(ws_path)
    _emit(args, {"workspace": str(ws_path), "files": [str(p.relative_to(ws_path)) for p in written]})
    return OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dataguard", description="Purpose-based data masking views.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--workspace", default=".", help="workspace directory (default: current directory)")
    parser.add_argument("--seed", type=int, default=0, help="seed for synthetic data")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", help="check schemas, label assignments and the policy catalog")

    p = sub.add_parser("compile", help="compile and register views")
    p.add_argument("--relation", action="append", help="restrict to this relation (repeatable)")
    p.add_argument("--purpose", action="append", help="restrict to this purpose (repeatable)")

    p = sub.add_parser("apply", help="run a registered view over a JSON-lines file")
    p.add_argument("data", help="input rows, one JSON object per line")
    p.add_argument("--relation", required=True)
    p.add_argument("--purpose", required=True)
    p.add_argument("--version", dest="version", help="view version (default: latest)")
    p.add_argument("--access-time", help="ISO timestamp or epoch seconds for consent lookups (default: now)")
    p.add_argument("--out", "-o", help="output file (default: stdout)")
    p.add_argument("--oracle", action="store_true", help="write the reference implementation's output and compare")

    p = sub.add_parser("bench", help="run a masking-overhead micro-benchmark")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--rows", type=int, default=100_000)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--consent-rate", type=float, default=0.0, help="consent rate for non-consent experiments")
    p.add_argument("--out", help="also write the JSON report here")

    p = sub.add_parser("route", help="resolve a table access to a view")
    p.add_argument("relation")
    p.add_argument("--purpose")
    p.add_argument("--identity", help="service identity looked up in identities.json")
    p.add_argument("--pin", help="pinned view version")
    p.add_argument("--environment", default="", help="consumer environment recorded in the access log")

    sub.add_parser("maintain", help="recompile views whose inputs changed")

    p = sub.add_parser("gc", help="remove old view versions and consent snapshots")
    p.add_argument("--keep-latest", type=int)
    p.add_argument("--min-age-days", type=float)
    p.add_argument("--snapshots", action="store_true", help="also collect consent snapshots")
    p.add_argument("--retention-days", type=float)

    p = sub.add_parser("bitmap-build", help="build consent snapshots from a consent table")
    p.add_argument("table", help="CSV or JSON-lines file")
    p.add_argument("--as-of", help="snapshot timestamp (default: the file's modification time)")
    p.add_argument("--wide", metavar="ID_COLUMN", help="table has one boolean column per consent")

    sub.add_parser("report", help="list views, snapshots and pinned consumers behind latest")

    p = sub.add_parser("init", help="write a small demo workspace")
    p.add_argument("--force", action="store_true")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "compile": cmd_compile,
    "apply": cmd_apply,
    "bench": cmd_bench,
    "route": cmd_route,
    "maintain": cmd_maintain,
    "gc": cmd_gc,
    "bitmap-build": cmd_bitmap_build,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init":
            return cmd_init(args, Path(args.workspace))
        ws = None if args.command == "bench" else WorkspaceConfig.load(args.workspace)
        return COMMANDS[args.command](args, ws)
    except CommandError as exc:
        _error(args, exc, exc.status)
        return exc.status
    except VALIDATION_ERRORS as exc:
        _error(args, exc, INVALID)
        return INVALID
    except (DataGuardError, OSError, KeyError, ValueError) as exc:
        _error(args, exc, FAILED)
        return FAILED


def _error(args, exc: Exception, status: int) -> None:
    message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    if args.json:
        print(json.dumps({"error": type(exc).__name__, "message": message, "status": status}), file=sys.stderr)
    else:
        print(f"dataguard: {type(exc).__name__}: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
