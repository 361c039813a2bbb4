"""Exception types shared across the package.

Each class corresponds to one failure mode of the public API; all inherit
from OnnLyapError so callers can catch the package's errors in one clause.
"""


class OnnLyapError(Exception):
    """Base class for every error raised by this package."""


# --- graph construction and queries ---------------------------------------

class IndexOutOfRange(OnnLyapError):
    pass


class SelfLoop(OnnLyapError):
    pass


class DuplicateEdge(OnnLyapError):
    pass


class NegativeWeight(OnnLyapError):
    pass


class IsolatedNode(OnnLyapError):
    pass


class Disconnected(OnnLyapError):
    pass


class ConvergenceFailure(OnnLyapError):
    pass


class EdgeNotFound(OnnLyapError):
    pass


class FileFormat(OnnLyapError):
    pass


# --- homology ---------------------------------------------------------------

class InfiniteDistance(OnnLyapError):
    """Bottleneck distance between diagrams with mismatched essential counts."""


# --- loss / dynamics --------------------------------------------------------

class DimensionMismatch(OnnLyapError):
    pass


class NotPSD(OnnLyapError):
    pass


class NonPositiveLoss(OnnLyapError):
    pass


class NoSurgeryEvents(OnnLyapError):
    pass


class ZeroDenominator(OnnLyapError):
    pass


# --- delay ------------------------------------------------------------------

class InvalidParams(OnnLyapError):
    pass


class Divergence(OnnLyapError):
    pass


class NoBracket(OnnLyapError):
    pass


# --- generators / cli -------------------------------------------------------

class InfeasibleSpec(OnnLyapError):
    pass


class RetryExhausted(OnnLyapError):
    pass


class InvalidDimension(OnnLyapError):
    pass


class ConfigParse(OnnLyapError):
    pass
