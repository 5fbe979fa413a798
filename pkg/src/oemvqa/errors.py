"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class OemVqaError(Exception):
    """Base class for all package errors."""


class ConfigError(OemVqaError):
    """Invalid run configuration or config file."""


# -- memory --

class MemoryContractError(OemVqaError):
    """Base class for textual-memory contract violations."""


class GapError(MemoryContractError):
    pass


class OverlapError(MemoryContractError):
    pass


class EmptyTextError(MemoryContractError):
    pass


class ZeroDurationError(MemoryContractError, ValueError):
    pass


class SourceMismatchError(MemoryContractError):
    pass


class MemoryLockedError(MemoryContractError):
    """Another writer holds the memory file."""


# -- segmenter / media --

class NonMonotonicStreamError(OemVqaError):
    pass


class MediaToolError(OemVqaError):
    """External decoder failed; ``diagnostics`` holds its output."""

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message if not diagnostics else f"{message}\n{diagnostics}")
        self.diagnostics = diagnostics


# -- backends --

class BackendError(OemVqaError):
    pass


class AuthError(BackendError):
    pass


class BackendTimeoutError(BackendError, TimeoutError):
    pass


class ContextOverflowError(BackendError):
    pass


class TransientExhaustedError(BackendError):
    pass


class MissingFixtureError(BackendError, KeyError):
    pass


class FixtureParseError(BackendError):
    pass


# -- harness --

class SchemaError(OemVqaError):
    def __init__(self, index: int, field: str, message: str):
        super().__init__(f"record {index}: field {field!r}: {message}")
        self.index = index
        self.field = field


class MissingMemoryError(OemVqaError):
    def __init__(self, source_ids):
        self.source_ids = sorted(source_ids)
        super().__init__("no memory for source ids: " + ", ".join(self.source_ids))


class EmptyResultsError(OemVqaError):
    pass
