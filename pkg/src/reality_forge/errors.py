"""Exception types raised across the toolkit.

Every error derives from :class:`RealityForgeError` so callers (and the CLI)
can separate domain failures from programming errors.
"""


class RealityForgeError(Exception):
    """Base class for all domain errors."""


class ConfigError(RealityForgeError, ValueError):
    pass


# clicklog
class DecodeError(RealityForgeError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SequenceError(DecodeError):
    pass


class OrderError(DecodeError):
    pass


class FormatError(RealityForgeError, ValueError):
    """A collection cannot be written in the requested format."""


# embedding
class MissingCoordError(RealityForgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptySkeletonError(RealityForgeError, ValueError):
    pass


class DimensionMismatch(RealityForgeError, ValueError):
    pass


# geodesic
class InvalidGrid(RealityForgeError, ValueError):
    pass


class OutOfHull(RealityForgeError, ValueError):
    pass


class SingularMetric(RealityForgeError, ArithmeticError):
    pass


class ShortPrefix(RealityForgeError, ValueError):
    pass


# probcheck
class RangeError(RealityForgeError, ValueError):
    pass


class ScaleError(RealityForgeError, ValueError):
    pass


class InconsistentInput(RealityForgeError, ValueError):
    pass


class DegenerateDenominator(RealityForgeError, ZeroDivisionError):
    pass


# melucci
class StarvationError(RealityForgeError, RuntimeError):
    pass


class ModeMismatch(RealityForgeError, ValueError):
    pass


class ZeroCount(RealityForgeError, ZeroDivisionError):
    pass


# automaton
class UnknownSymbol(RealityForgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownState(RealityForgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# rota
class CycleError(RealityForgeError, ValueError):
    pass


class MaskViolation(RealityForgeError, ValueError):
    pass


class EmptySubspace(RealityForgeError, ValueError):
    pass
