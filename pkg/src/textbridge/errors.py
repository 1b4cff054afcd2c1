"""Exception hierarchy shared by every module."""

from __future__ import annotations


class TextBridgeError(Exception):
    """Base class for all library errors."""


class FormatError(TextBridgeError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateError(FormatError):
    pass


class LabelError(TextBridgeError, ValueError):
    def __init__(self, record_id: str, label: str):
        self.record_id = record_id
        self.label = label
        super().__init__(f"record {record_id!r}: unknown label {label!r}")


class DomainError(TextBridgeError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class MissingDescriptionError(TextBridgeError, ValueError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"record {record_id!r} has no description")


class DegenerateEmbeddingError(TextBridgeError, ValueError):
    pass


class SizeError(TextBridgeError, ValueError):
    pass


class DimError(TextBridgeError, ValueError):
    pass


class ArgError(TextBridgeError, ValueError):
    pass


class VocabError(TextBridgeError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class NumericsError(TextBridgeError, ArithmeticError):
    pass


class ProviderError(TextBridgeError):
    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        self.status = status
        self.body = body
        if status is not None:
            message = f"{message} (HTTP {status}): {(body or '')[:200]}"
        super().__init__(message)


class RetryableProviderError(ProviderError):
    """Transport-level failure; the request may succeed if repeated."""


class CapabilityError(ProviderError):
    """The provider cannot perform the requested operation."""
