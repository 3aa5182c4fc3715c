"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BridgError(Exception):
    """Base class for every error raised by bridgmt."""


class UsageError(BridgError, ValueError):
    """A caller violated a precondition (bad argument, bad config)."""


class ConfigError(UsageError):
    """Configuration file or override could not be resolved."""


class ValidationError(UsageError):
    """A value object failed its invariants."""


class ParseError(BridgError):
    """A persisted file could not be parsed.

    ``line`` is the 1-based line number when the failure is line-addressable.
    """

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class FormatError(BridgError):
    """Model output did not have the expected shape (e.g. no numbered bridge lines)."""


class ProviderCallError(BridgError):
    """Base for failures talking to a model provider."""


class TransportError(ProviderCallError):
    """Network failure or timeout that persisted through all retries."""


class ProviderError(ProviderCallError):
    """Provider answered with a non-retryable error status."""

    def __init__(self, message: str, status: int | None = None) -> None:
        self.status = status
        super().__init__(message)


class ProtocolError(ProviderCallError):
    """Provider answered 2xx but the body violated the wire contract."""
