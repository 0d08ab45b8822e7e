"""Exception types raised across the package.

Every validation failure derives from :class:`ValidationError`, which the
command-line front end maps to exit status 2.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Input rejected by a contract check."""


class NotSymmetric(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class BadDimension(ValidationError):
    pass


class BadIndex(ValidationError):
    pass


class IndexInHistory(ValidationError):
    pass


class IndexNotActive(ValidationError):
    pass


class LastCoordinate(ValidationError):
    pass


class InconsistentState(ValidationError):
    pass


class BadParameter(ValidationError):
    pass


class NotIncreasing(ValidationError):
    pass


class BadThresholds(ValidationError):
    pass


class EmptyActiveSet(ValidationError):
    pass


class BadAlpha(ValidationError):
    pass


class TooFewReps(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class BadGrid(ValidationError):
    pass


class NotAnAcceptRejectPair(ValidationError):
    pass


class ConditioningWarning(UserWarning):
    """Covariance is close to singular; results may lose precision."""
