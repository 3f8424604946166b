"""Exception types shared across the package."""


class FoamError(Exception):
    """Base class for all package errors."""


class DegenerateInput(FoamError):
    """Point set is collinear/coplanar and cannot be tetrahedralized."""


class DuplicatePoints(FoamError):
    """Two sites closer than the duplicate tolerance."""


class CycleDetected(FoamError):
    """Ray walk revisited a cell without advancing; geometric/numerical bug."""


class StepLimit(FoamError):
    """Ray walk exceeded the hard per-ray cell cap."""


class ShapeMismatch(FoamError):
    """Array arguments with inconsistent shapes."""


class DegenerateRay(FoamError):
    """Ray with too little accumulated weight for the quantile machinery."""


class OutOfBounds(FoamError):
    """Pixel outside the camera resolution."""


class ParseError(FoamError):
    """Malformed input file; message carries the position."""


class UnsupportedFormat(FoamError):
    """File extension or header not recognized."""


class MissingImage(FoamError):
    """Dataset manifest references an image that does not exist."""


class UnknownSpec(FoamError):
    """Unknown synthetic scene name."""


class CorruptCheckpoint(FoamError):
    """Checkpoint with bad magic, truncation, or non-finite values."""
