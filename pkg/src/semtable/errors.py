"""Shared exception hierarchy.

Every error carries a stable ``code`` (its class name) so the CLI and the
HTTP service can surface it verbatim in machine-readable envelopes.
"""

from __future__ import annotations


class SemtableError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def details(self) -> dict:
        """Structured payload for error envelopes; subclasses may extend."""
        return {}


class ParseError(SemtableError):
    """Malformed CSV input (e.g. unterminated quote, over-long row)."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line

    def details(self) -> dict:
        return {"line": self.line}


class EncodingError(SemtableError):
    """Input bytes are not valid UTF-8."""


class EmptyInputError(SemtableError):
    """CSV input contains no columns."""


class InsufficientRowsError(SemtableError):
    """Header auto-detection needs at least two rows."""


class ValidationError(SemtableError):
    """A value violates an operation precondition or a type invariant."""


class NotFoundError(SemtableError):
    """A referenced resource (session, cell, store item) does not exist."""


class IntegrityError(SemtableError):
    """A reference does not resolve, or a structural rule is violated."""

    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = violations or []

    def details(self) -> dict:
        return {"violations": [str(v) for v in self.violations]}


class SnapshotError(SemtableError):
    """A store snapshot file is unreadable, corrupt, or version-mismatched."""


class SpecError(SemtableError):
    """A hierarchy/group spec cannot be applied to the model."""

    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = violations or []

    def details(self) -> dict:
        return {"violations": [str(v) for v in self.violations]}


class PhaseError(SemtableError):
    """A decision or operation is illegal in the session's current phase."""


class ReplayError(SemtableError):
    """A decision log cannot be replayed against the given table/store."""

    def __init__(self, message: str, seq: int):
        super().__init__(f"seq {seq}: {message}")
        self.seq = seq

    def details(self) -> dict:
        return {"seq": self.seq}


class FinalizeBlockedError(SemtableError):
    """Finalization blocked by unresolved flags or unconfirmed values."""

    def __init__(self, message: str, flags: list | None = None, unconfirmed: list | None = None):
        super().__init__(message)
        self.flags = flags or []
        self.unconfirmed = unconfirmed or []

    def details(self) -> dict:
        return {
            "flags": [list(f) for f in self.flags],
            "unconfirmed": [list(u) for u in self.unconfirmed],
        }


class ClassifyError(SemtableError):
    """An artifact descriptor's payload cannot be read."""
