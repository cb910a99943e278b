"""Domain errors shared across the pipeline."""
from __future__ import annotations


class MosaicError(Exception):
    """Base class for all domain errors raised by this package."""


class EmptyTranscript(MosaicError):
    pass


class MalformedLine(MosaicError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class NonMonotoneTimestamp(MosaicError):
    def __init__(self, line_no: int, message: str = "timestamp does not increase"):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class IndexOutOfRange(MosaicError):
    pass


class MalformedCodebook(MosaicError):
    pass


class BackendUnavailable(MosaicError):
    pass


class DimensionMismatch(MosaicError):
    pass


class StaleIndex(MosaicError):
    pass


class EmptyAfterFilter(MosaicError):
    """Tag filtering removed every candidate; caller should widen the pool."""


class PromptTooLarge(MosaicError):
    def __init__(self, estimated_tokens: int, limit: int):
        self.estimated_tokens = estimated_tokens
        self.limit = limit
        super().__init__(
            f"prompt estimated at {estimated_tokens} tokens exceeds limit {limit}"
        )


class UnparseableOutput(MosaicError):
    pass


class InvalidLabel(MosaicError):
    pass


class TranscriptMismatch(MosaicError):
    pass


class EmptyGold(MosaicError):
    pass


class JobNotFound(MosaicError):
    pass
