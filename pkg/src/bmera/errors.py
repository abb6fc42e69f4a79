"""Exception types shared across the package."""

from __future__ import annotations


class BmeraError(Exception):
    """Base class for all errors raised by :mod:`bmera`."""


class DimensionMismatch(BmeraError, ValueError):
    pass


class AxisOutOfRange(BmeraError, IndexError):
    pass


class InvalidPermutation(BmeraError, ValueError):
    pass


class ConvergenceFailure(BmeraError, RuntimeError):
    pass


class ConstraintViolation(BmeraError, ValueError):
    pass


class NotMixing(BmeraError, RuntimeError):
    """The channel has more than one eigenvalue on (or numerically at) the unit circle."""


class DegenerateEigenvalue(BmeraError, RuntimeError):
    pass


class SiteOutOfRange(BmeraError, IndexError):
    pass


class PathUnresolvable(BmeraError, ValueError):
    """No implemented channel path reaches the requested block."""


class SignalBelowFloor(BmeraError, ValueError):
    pass


class IllConditionedEigenbasis(BmeraError, RuntimeError):
    pass


class BudgetExceeded(BmeraError, MemoryError):
    pass


class OverlappingSupports(BmeraError, ValueError):
    pass


class StalledDescent(BmeraError, RuntimeError):
    pass
