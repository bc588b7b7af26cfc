"""Shared exception hierarchy.

Every fault carries a stable machine-readable ``code`` (the name surfaced in
API error bodies and scenario expectations) and the HTTP status it maps to,
so the error table lives in exactly one place.
"""
from __future__ import annotations


class CoopflowError(Exception):
    """Base class for all engine faults."""

    code = "Internal"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)

    @property
    def message(self) -> str:
        return str(self)


# --- definition parsing / validation ---

class DefinitionSyntaxError(CoopflowError):
    """Definition document is not well-formed (bad JSON, duplicated key)."""

    code = "SyntaxError"
    http_status = 400

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownKeyError(CoopflowError):
    """Definition document contains a key the format does not define."""

    code = "UnknownKey"
    http_status = 400


class MalformedDefinitionError(CoopflowError):
    """Definition document has a missing key or a value of the wrong shape."""

    code = "MalformedDefinition"
    http_status = 400


class BadRequestError(CoopflowError):
    """API request body has a missing key or a value of the wrong shape."""

    code = "BadRequest"
    http_status = 400


class InvalidDefinitionError(CoopflowError):
    """Definition parsed but violates structural invariants."""

    code = "InvalidDefinition"
    http_status = 422

    def __init__(self, message: str = "", report=None):
        if report is not None and not message:
            message = "; ".join(v.message for v in report.violations) or "invalid definition"
        super().__init__(message)
        self.report = report


class CyclicControlFlowError(CoopflowError):
    """Control-edge graph contains a cycle."""

    code = "CyclicControlFlow"
    http_status = 422


# --- engine lifecycle ---

class UnknownActivityError(CoopflowError):
    code = "UnknownActivity"
    http_status = 404


class UnknownInstanceError(CoopflowError):
    code = "UnknownInstance"
    http_status = 404


class UnknownDefinitionError(CoopflowError):
    code = "UnknownDefinition"
    http_status = 404


class UnknownDataEdgeError(CoopflowError):
    code = "UnknownDataEdge"
    http_status = 404


class AmbiguousDataEdgeError(CoopflowError):
    code = "AmbiguousDataEdge"
    http_status = 422


class DuplicateInstanceIdError(CoopflowError):
    code = "DuplicateInstanceId"
    http_status = 409


class IllegalTransitionError(CoopflowError):
    """Requested action is not legal in the activity's current state."""

    code = "IllegalTransition"
    http_status = 409

    def __init__(self, activity: str, current, action: str):
        state = getattr(current, "value", current)
        super().__init__(f"cannot {action} activity '{activity}' in state {state}")
        self.activity = activity
        self.current = current


class IllegalProducerStateError(CoopflowError):
    code = "IllegalProducerState"
    http_status = 409


class MissingFieldError(CoopflowError):
    """A branch condition references a field absent from the output record."""

    code = "MissingField"
    http_status = 422

    def __init__(self, field: str):
        super().__init__(f"condition references field '{field}' absent from output")
        self.field = field


class ConditionTypeError(CoopflowError):
    """An ordering comparator was applied to a non-numeric output value."""

    code = "ConditionTypeMismatch"
    http_status = 422


class FormatMismatchError(CoopflowError):
    """Output or emitted record does not match a declared edge format."""

    code = "FormatMismatch"
    http_status = 422


class FeedbackTargetInactiveError(CoopflowError):
    """Feedback was addressed to an activity that is no longer running."""

    code = "FeedbackTargetInactive"
    http_status = 422


# --- binary codec ---

class InvalidDescriptorError(CoopflowError):
    code = "InvalidDescriptor"
    http_status = 422


class NonConformingRecordError(CoopflowError):
    code = "NonConformingRecord"
    http_status = 422


class BadMagicError(CoopflowError):
    code = "BadMagic"
    http_status = 422


class UnsupportedVersionError(CoopflowError):
    code = "UnsupportedVersion"
    http_status = 422


class TruncatedMessageError(CoopflowError):
    code = "TruncatedMessage"
    http_status = 422


class MalformedDescriptorError(CoopflowError):
    code = "MalformedDescriptor"
    http_status = 422


class InvalidUtf8Error(CoopflowError):
    code = "InvalidUtf8"
    http_status = 422


class TrailingBytesError(CoopflowError):
    code = "TrailingBytes"
    http_status = 422


class OverflowingNarrowError(CoopflowError):
    """A narrowing conversion would change an integer value."""

    code = "OverflowingNarrow"
    http_status = 422

    def __init__(self, field: str, detail: str = ""):
        super().__init__(f"value of field '{field}' not representable in target field" + (f": {detail}" if detail else ""))
        self.field = field


class TypeMismatchError(CoopflowError):
    """Field kinds cannot be converted into each other."""

    code = "TypeMismatch"
    http_status = 422

    def __init__(self, field: str, detail: str = ""):
        super().__init__(f"field '{field}' cannot be converted" + (f": {detail}" if detail else ""))
        self.field = field


# --- persistence / service shell ---

class CorruptLogError(CoopflowError):
    code = "CorruptLog"
    http_status = 500


class ScenarioMismatchError(CoopflowError):
    code = "ScenarioMismatch"
    http_status = 422

    def __init__(self, message: str, step: int | None = None, transcript=None):
        super().__init__(message)
        self.step = step
        self.transcript = transcript or []
