"""Exception types.

Every error carries the process exit code the CLI reports for it
(2 usage, 3 format, 4 numerical, 5 I/O).
"""


class SaltFWIError(Exception):
    exit_code = 2
    code = "error"


class InvalidGeometryError(SaltFWIError, ValueError):
    code = "invalid-geometry"


class InvalidParameterError(SaltFWIError, ValueError):
    code = "invalid-parameter"


class BoundsError(SaltFWIError, ValueError):
    code = "bounds"


class ShapeError(SaltFWIError, ValueError):
    exit_code = 3
    code = "shape"


class EmptyEnsembleError(SaltFWIError, ValueError):
    code = "empty-ensemble"


class PlacementError(SaltFWIError, RuntimeError):
    code = "placement"


class ConfigurationError(SaltFWIError, ValueError):
    code = "configuration"


class InsufficientHistoryError(SaltFWIError, ValueError):
    code = "insufficient-history"


class StabilityError(SaltFWIError, ValueError):
    exit_code = 4
    code = "stability"


class NumericalBlowupError(SaltFWIError, FloatingPointError):
    exit_code = 4
    code = "numerical-blowup"


class FormatError(SaltFWIError, ValueError):
    exit_code = 3
    code = "format"


class TruncationError(FormatError):
    code = "truncated"


class IngestionError(FormatError):
    code = "ingestion"


class ShotError(SaltFWIError):
    """Wraps a per-shot failure with the shot index that raised it."""

    def __init__(self, shot_index, cause):
        super().__init__(f"shot {shot_index}: {cause}")
        self.shot_index = shot_index
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
        self.code = getattr(cause, "code", "error")
