"""Exception types shared across the package."""


class FormatError(ValueError):
    """File content does not match the expected format."""


class CorruptionError(FormatError):
    """Structured file whose header and payload disagree."""


class ShapeError(ValueError):
    """Array/tensor shapes are incompatible for the requested operation."""


class StateError(RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class StageError(RuntimeError):
    """Model checkpoint used at the wrong pipeline stage."""


class IncompatibilityError(ValueError):
    """Two model configurations that cannot be bridged by weight transfer."""
