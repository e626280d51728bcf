"""Purpose- and consent-based masking views over nested relations.

Typical flow: parse a policy catalog and label assignments, match them
against a relation schema, prune redundant maskings, compile a view and
run its plan over rows with consent snapshots bound at one access time.
"""

from .bitmap import RoaringBitmap
from .compiler import MaskStep, StepKind, ViewDefinition, compile_view, output_schema
from .conditions import AttrClass, parse_condition, render_condition
from .consent import ConsentBinding, ConsentSnapshot, Polarity, SnapshotStore, build_snapshot, has_user_consent
from .errors import DataGuardError
from .evaluator import Relation, apply_plan, mask_field_if
from .oracle import oracle_fold, oracle_mask
from .paths import FieldPath, parse_field_path, render_field_path, resolve_path
from .planner import build_schema_tree, greedy_cover, prune_policies
from .policy import LabelAssignment, Policy, PolicyCatalog, Purpose, PurposeGraph, make_policy, match_policies
from .schema import RelationSchema, SchemaType, parse_type, relation
from .viewshift import AccessContext, AccessLog, ViewRegistry, get_view, maintain_views

__version__ = "0.1.0"

__all__ = [
    "AccessContext",
    "AccessLog",
    "AttrClass",
    "ConsentBinding",
    "ConsentSnapshot",
    "DataGuardError",
    "FieldPath",
    "LabelAssignment",
    "MaskStep",
    "Policy",
    "PolicyCatalog",
    "Polarity",
    "Purpose",
    "PurposeGraph",
    "Relation",
    "RelationSchema",
    "RoaringBitmap",
    "SchemaType",
    "SnapshotStore",
    "StepKind",
    "ViewDefinition",
    "ViewRegistry",
    "apply_plan",
    "build_schema_tree",
    "build_snapshot",
    "compile_view",
    "get_view",
    "greedy_cover",
    "has_user_consent",
    "maintain_views",
    "make_policy",
    "mask_field_if",
    "match_policies",
    "oracle_fold",
    "oracle_mask",
    "output_schema",
    "parse_condition",
    "parse_field_path",
    "parse_type",
    "prune_policies",
    "relation",
    "render_condition",
    "render_field_path",
    "resolve_path",
]
