"""Exceptions and warning categories shared across the package."""


class DiivError(Exception):
    """Base class for estimation failures."""


class NonBinary(DiivError, ValueError):
    """A column that must hold only 0/1 values does not."""


class SchemaError(DiivError, ValueError):
    """Table columns are missing, ragged or non-finite."""


class MissingCell(DiivError):
    """An assignment cell entering a contrast has no rows."""


class ZeroDenominator(DiivError):
    """The differenced first stage is numerically zero."""


class RankDeficient(DiivError):
    """The regressor block is not of full column rank."""


class RelevanceViolated(DiivError):
    """Differential behavioral shifts cancel, so the weight is undefined."""


class OrderingViolation(UserWarning):
    """Share orderings needed for a convex weight do not hold."""


class WeakContrast(UserWarning):
    """First-stage F below the conventional threshold of 10."""


class FrameImbalance(UserWarning):
    """Frames differ in assignment variance, so the XOR 2SLS is not the raw ratio."""
