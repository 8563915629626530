"""Exception types raised across the package."""


class CrowdcastError(Exception):
    """Base class for all crowdcast errors."""


class WindowTooShort(CrowdcastError):
    """An observation window has fewer frames than the operation needs."""


class InvalidWeights(CrowdcastError):
    """Speed averaging weights do not form a valid convex combination."""


class EmptySequence(CrowdcastError):
    """A polyline passed to a distance routine has no points."""


class HeadingUndefined(CrowdcastError):
    """No movement in the window, so an average heading does not exist."""


class PathLengthMismatch(CrowdcastError):
    """Observed and resampled paths differ in length."""


class EmptyEvaluation(CrowdcastError):
    """No prediction record survived the evaluation filters."""


class ParseError(CrowdcastError):
    """A dataset file is malformed. Carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class DuplicateRecord(CrowdcastError):
    """Two rows claim the same (frame, agent) cell."""
