"""Exception hierarchy shared by every dataguard module."""

from __future__ import annotations


class DataGuardError(Exception):
    """Base class for all errors raised by dataguard."""


class ParseError(DataGuardError, ValueError):
    """Malformed field path or condition text.

    Carries the character offset where parsing failed and a short
    description of what the parser expected there.
    """

    def __init__(self, message: str, text: str = "", position: int = 0, expected: str = ""):
        self.text = text
        self.position = position
        self.expected = expected
        detail = message
        if expected:
            detail += f" (expected {expected})"
        if text:
            detail += f" at position {position}: {text[:position]}<HERE>{text[position:]}"
        super().__init__(detail)


class SchemaError(DataGuardError, ValueError):
    """Invalid schema type or relation schema."""


class ResolutionError(DataGuardError):
    """A field path does not fit the schema it is resolved against."""

    def __init__(self, message: str, operator=None, applied_to=None):
        self.operator = operator
        self.applied_to = applied_to
        super().__init__(message)


class CatalogError(DataGuardError, ValueError):
    """Policy catalog or label-assignment file failed validation."""


class PurposeCycleError(CatalogError):
    pass


class UnknownPurpose(DataGuardError, KeyError):
    pass


class UnsupportedCondition(DataGuardError):
    """Condition cannot be compiled into a view (non-consent attribute or operator)."""


class MissingSubjectId(DataGuardError):
    pass


class DuplicateSubjectRow(DataGuardError, ValueError):
    pass


class NoSnapshotAvailable(DataGuardError, LookupError):
    def __init__(self, consent: str, access_time):
        self.consent = consent
        self.access_time = access_time
        super().__init__(f"no snapshot of consent {consent!r} generated at or before {access_time}")


class PathTypeMismatch(DataGuardError, TypeError):
    pass


class UnboundAttribute(DataGuardError, KeyError):
    pass


class EvaluationError(DataGuardError):
    pass


class SchemaMismatch(DataGuardError, ValueError):
    pass


class NoViewForPurpose(DataGuardError, LookupError):
    def __init__(self, relation: str, purpose: str):
        self.relation = relation
        self.purpose = purpose
        super().__init__(f"no view registered for relation {relation!r} and purpose {purpose!r}")


class PinnedVersionMissing(DataGuardError, LookupError):
    def __init__(self, relation: str, purpose: str, version: str):
        self.relation = relation
        self.purpose = purpose
        self.version = version
        super().__init__(f"pinned version {version} of view {purpose}.{relation} is not registered")
