"""Exception types raised across the package."""


class GptError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GptError, ValueError):
    pass


class ProbabilityOutOfRange(GptError, ValueError):
    """An effect/state pairing produced a number that is not a probability."""


class EmptyGeneratorList(GptError, ValueError):
    pass


class NotSimplicial(GptError, TypeError):
    pass


class NoiseOutOfRange(GptError, ValueError):
    pass


class RateOutOfRange(GptError, ValueError):
    pass


class UnknownLabel(GptError, KeyError):
    pass


class InvalidMeasurement(GptError, ValueError):
    """Final measurement effects do not sum to the unit effect."""


class DegenerateMatrix(GptError, ValueError):
    pass


class DimensionTooLarge(GptError, ValueError):
    pass


class DegenerateCone(GptError, ValueError):
    pass


class WrongScenarioKind(GptError, ValueError):
    pass


class NullOutcomeProbabilityZero(GptError, ZeroDivisionError):
    pass


class ConvergenceFailure(RuntimeWarning):
    """Issued (as a warning) when alternating least squares hits its iteration cap."""
