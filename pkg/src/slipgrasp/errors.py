"""Exception hierarchy for slipgrasp.

Every raised error derives from :class:`SlipGraspError` so callers can catch
the whole library with one clause; the CLI maps subtrees to exit codes.
"""


class SlipGraspError(Exception):
    """Base class for all slipgrasp errors."""


# --- geometry -------------------------------------------------------------

class GeometryError(SlipGraspError):
    """Base class for geometric failures."""


class NoIntersectionError(GeometryError):
    """The probe line does not cross the object boundary as required."""


class DegenerateContactError(GeometryError):
    """Contact points coincide or do not form a usable contact pair."""


class SamplerExhaustedError(GeometryError):
    """The grasp sampler ran out of budget before reaching its target count."""


class CellTooCoarseError(GeometryError):
    """Raster cell size too large for the polygon's thinnest feature."""


class DegenerateSegmentError(GeometryError):
    """Reference segment has (near-)zero length."""


class OutOfRangeError(GeometryError):
    """A ratio or parameter fell outside its admissible interval."""


# --- physics --------------------------------------------------------------

class NotForceClosureError(SlipGraspError):
    """Grasp fails the force-closure precondition of the lift simulator."""


class NotRotationalError(SlipGraspError):
    """Operation requires a rotational slip label."""


# --- signal / models ------------------------------------------------------

class InvalidCutoffError(SlipGraspError):
    """Filter cutoff outside (0, Nyquist)."""


class DimensionMismatchError(SlipGraspError):
    """Feature dimensions of input and fitted model/stats disagree."""


class TooFewObjectsError(SlipGraspError):
    """Not enough distinct objects for the requested object-wise split."""


class UntrainedModelError(SlipGraspError):
    """Prediction requested from a model that has not been fitted."""


class EmptyInputError(SlipGraspError):
    """Metric or evaluation called with no samples."""


# --- persistence / config -------------------------------------------------

class ConfigError(SlipGraspError):
    """Experiment configuration missing, malformed, or with unknown keys."""


class DatasetFormatError(SlipGraspError):
    """Dataset or model file fails schema validation.

    ``line`` carries the 1-based position of the offending record when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line
