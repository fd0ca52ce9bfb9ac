"""Exception hierarchy.

``InputError`` subclasses indicate bad inputs or configuration (CLI exit
code 2); ``NumericalError`` subclasses indicate a numerical failure inside
an otherwise valid computation (CLI exit code 3).
"""


class CdpaError(Exception):
    """Base class for all package errors."""


class InputError(CdpaError):
    """Invalid input data, file, or configuration."""


class NumericalError(CdpaError):
    """Numerical failure during a computation."""


class DegenerateThreshold(NumericalError):
    """Denoising threshold denominator n*p - n*r - p*r is not positive."""


class RankTooLarge(InputError):
    """Requested rank exceeds min(n, p)."""


class ZeroSignal(NumericalError):
    """Signal estimate is identically zero."""


class TooFewSamples(InputError):
    """Not enough eigenvalues to calibrate the rank-selection threshold."""


class RankDeficiency(NumericalError):
    """A signal covariance is numerically rank deficient for the request."""


class ChannelRankDeficient(NumericalError):
    """Mixing channel does not have full column rank."""


class BadDimensions(InputError):
    """Matrix dimensions are inconsistent with the operation."""


class TooLarge(InputError):
    """Problem size exceeds the limit of an exhaustive method."""


class BadConfig(InputError):
    """Invalid configuration values."""
