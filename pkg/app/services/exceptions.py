"""
Error types raised by the sorting services.
Every error subclasses ValueError so callers that only expect bad-input
failures keep working.
"""
from typing import Iterable, Optional


class LearnedSortError(ValueError):
    """Base class for all library errors."""


class NaNKeyError(LearnedSortError):
    """A float input contained NaN; NaNs are rejected at ingestion."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"NaN is not a sortable key (first NaN at index {index})")


class ModelTrainingError(LearnedSortError):
    """A CDF model could not be trained from the given sample."""


class KeyFileFormatError(LearnedSortError):
    """A key file does not match the count-prefixed record layout."""

    def __init__(self, path: str, expected_bytes: Optional[int], actual_bytes: int, reason: str = ""):
        self.path = path
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        if expected_bytes is None:
            detail = reason or "file shorter than the 8-byte count header"
            message = f"{path}: {detail} (got {actual_bytes} bytes)"
        else:
            message = (
                f"{path}: expected {expected_bytes} bytes from the count header, "
                f"got {actual_bytes} bytes (mismatch at byte offset {min(expected_bytes, actual_bytes)})"
            )
        super().__init__(message)


class UnknownDatasetError(LearnedSortError):
    """Dataset name not present in the generator registry."""

    def __init__(self, name: str, registry: Iterable[str]):
        self.name = name
        self.registry = sorted(registry)
        super().__init__(f"Unknown dataset '{name}'. Available: {', '.join(self.registry)}")


class UnknownAlgorithmError(LearnedSortError):
    """Algorithm name not present in the algorithm registry."""

    def __init__(self, name: str, registry: Iterable[str]):
        self.name = name
        self.registry = sorted(registry)
        super().__init__(f"Unknown algorithm '{name}'. Available: {', '.join(self.registry)}")


class PivotCountError(LearnedSortError):
    """The pivot-quality metric needs exactly b - 1 pivots."""


class VerificationError(LearnedSortError):
    """Output failed the sortedness or multiset check."""

    def __init__(self, message: str, index: int = -1):
        self.index = index
        super().__init__(message)
