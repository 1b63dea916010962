"""Exception types raised across the package."""


class STTAError(Exception):
    """Base class for every error raised by this package."""


class DegenerateRotationError(STTAError, ValueError):
    pass


class ProjectionDomainError(STTAError, ValueError):
    pass


class AlignmentDegenerateError(STTAError, ValueError):
    pass


class SegmentTooShortError(STTAError, ValueError):
    pass


class DegenerateEmbeddingError(STTAError, ValueError):
    pass


class UnknownLabelError(STTAError, KeyError):
    pass


class CalibrationError(STTAError, ValueError):
    pass


class DimensionError(STTAError, ValueError):
    pass


class PoisonedParametersError(STTAError, FloatingPointError):
    pass


class ShapeMismatchError(STTAError, ValueError):
    pass


class CoverageError(STTAError, ValueError):
    pass


class UsageError(STTAError, RuntimeError):
    """Misuse of an API, e.g. calling backward on a non-scalar."""


class ConfigError(STTAError, ValueError):
    pass


class FormatError(STTAError, ValueError):
    """A binary file does not match its expected layout."""
