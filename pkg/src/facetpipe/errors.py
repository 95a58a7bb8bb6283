"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: config problems exit 2, backend
problems exit 3, data problems exit 4.
"""

from __future__ import annotations


class FacetPipeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FacetPipeError):
    """Invalid or incomplete configuration."""


class RenderError(ConfigError):
    """A prompt template could not be rendered (missing placeholder etc.)."""


class DataError(FacetPipeError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """A structured input file failed to parse.

    Carries the offending 1-based line number when known.
    """

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class ContractViolation(DataError):
    """An operation was asked to break a dataset usage rule.

    The main one: test-split snippets and related queries must never be
    used to construct inference inputs or training targets.
    """


class BackendError(FacetPipeError):
    """Base class for generation-backend failures."""


class RetryExhaustedError(BackendError):
    """All retry attempts failed with retryable errors (timeouts, 5xx)."""


class FatalRequestError(BackendError):
    """The backend rejected the request (4xx); retrying would not help."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ProtocolError(BackendError):
    """The backend answered with a body we could not interpret."""


class BatchError(BackendError):
    """A batched generation aborted; carries the failing request index."""

    def __init__(self, message: str, index: int, cause: Exception | None = None):
        super().__init__(message)
        self.index = index
        self.cause = cause
