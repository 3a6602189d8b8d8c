"""Exception hierarchy shared by every tacnet module."""


class TacnetError(Exception):
    """Base class; ``kind`` is the machine-readable tag printed by the CLI."""

    kind = "error"


class ConfigurationError(TacnetError, ValueError):
    kind = "configuration"


class ValidationError(TacnetError, ValueError):
    kind = "validation"


class ParameterError(TacnetError, ValueError):
    kind = "parameter"


class DomainError(TacnetError, ValueError):
    kind = "domain"


class NumericError(TacnetError, FloatingPointError):
    kind = "numeric"


class EmptyResultError(TacnetError, ValueError):
    kind = "empty-result"


class CheckpointError(TacnetError):
    kind = "checkpoint"


class BadMagicError(CheckpointError):
    kind = "bad-magic"


class VersionMismatchError(CheckpointError):
    kind = "version-mismatch"


class TruncatedPayloadError(CheckpointError):
    kind = "truncated-payload"


class ShapeMismatchError(CheckpointError):
    kind = "shape-mismatch"


class WavFormatError(TacnetError, ValueError):
    kind = "wav-format"
