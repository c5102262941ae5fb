"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
PrerequisiteError -> 3, GatewayError -> 4.
"""


class TaxalignError(Exception):
    """Base class for all package errors."""


class ConfigError(TaxalignError):
    """Invalid or missing configuration."""


class PrerequisiteError(TaxalignError):
    """A pipeline stage was invoked before the stages it depends on."""


class GatewayError(TaxalignError):
    """Backend access failed (transport, refusal, or misconfiguration)."""


class OutputParseError(GatewayError):
    """Judge output could not be lexed into a JSON value. Retryable."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class OutputSchemaError(GatewayError):
    """Judge output parsed but violated the expected schema. Retryable."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class AnnotationFailed(TaxalignError):
    """A sample could not be annotated after the retry budget."""


class IngestFormatError(TaxalignError):
    """More than half of an input file failed to parse: wrong format."""
