"""Exception hierarchy.

Every error carries a machine-readable ``code`` and the process exit status the
CLI uses when the error escapes a job.
"""

from __future__ import annotations


class SealError(Exception):
    code = "ERROR"
    exit_code = 1

    def __init__(self, message: str = "", *, code: str | None = None):
        super().__init__(message or self.code)
        if code is not None:
            self.code = code

    def to_json(self) -> dict:
        return {"error": self.code, "message": str(self)}


class ConfigError(SealError):
    code = "CONFIG_ERROR"
    exit_code = 2


class MissingPrereqError(SealError):
    code = "MISSING_PREREQ"
    exit_code = 3


class BackendExhaustedError(SealError):
    code = "BACKEND_EXHAUSTED"
    exit_code = 4


class BadResponseError(SealError):
    code = "BAD_RESPONSE"
    exit_code = 4


class ScriptMissError(SealError):
    code = "SCRIPT_MISS"
    exit_code = 4


class ScriptExhaustedError(SealError):
    code = "SCRIPT_EXHAUSTED"
    exit_code = 4


class PreconditionError(SealError, ValueError):
    code = "PRECONDITION"
    exit_code = 2


class ValidationFailure(SealError):
    """Hard validation failure (as opposed to a report of violations)."""

    code = "VALIDATION_FAILED"
    exit_code = 5


class SchemaError(ValidationFailure):
    code = "SCHEMA_ERROR"

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class PlaceholderSyntaxError(ValidationFailure):
    code = "PLACEHOLDER_SYNTAX"


class DanglingRefError(ValidationFailure):
    code = "DANGLING_REF"


class NoJsonFoundError(ValidationFailure):
    code = "NO_JSON_FOUND"


class EmptyPoolError(ValidationFailure):
    code = "EMPTY_POOL"


class EmptySelectionError(ValidationFailure):
    code = "EMPTY_SELECTION"


class EmptyTreeError(ValidationFailure):
    code = "EMPTY_TREE"


class IdMismatchError(ValidationFailure):
    code = "ID_MISMATCH"


class UnknownGoldToolError(ValidationFailure):
    code = "UNKNOWN_GOLD_TOOL"


class QCRejected(ValidationFailure):
    code = "QC_REJECTED"

    def __init__(self, reasons: list[str], detail: str = ""):
        super().__init__(", ".join(reasons) + (f" ({detail})" if detail else ""))
        self.reasons = list(reasons)


class BackfillIncompleteError(ValidationFailure):
    code = "BACKFILL_INCOMPLETE"

    def __init__(self, missing: list[tuple[str, str]]):
        shown = ", ".join(f"{t}.{p}" for t, p in missing[:10])
        super().__init__(f"{len(missing)} required parameters still lack examples: {shown}")
        self.missing = missing


class EmbedBackendDownError(SealError):
    code = "EMBED_BACKEND_DOWN"
    exit_code = 4


class DimensionMismatchError(ValidationFailure):
    code = "DIMENSION_MISMATCH"
