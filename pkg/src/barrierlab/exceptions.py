"""Exception hierarchy shared by all barrierlab modules."""


class BarrierLabError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BarrierLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class InvalidNonlinearity(BarrierLabError, ValueError):
    pass


class IntegrationError(BarrierLabError, RuntimeError):
    pass


class NumericalError(BarrierLabError, ArithmeticError):
    pass


class ProfileBlowup(BarrierLabError, RuntimeError):
    pass


class ConstructionFailed(BarrierLabError, RuntimeError):
    pass


class PhiBViolated(ConstructionFailed):
    """The (large-gradient) growth condition failed before the target height was reached."""


class AnnulusTooThin(ConstructionFailed):
    pass


class RadiusTooLarge(BarrierLabError, ValueError):
    pass


class OutOfDomain(DomainError):
    pass


class StrictnessViolation(BarrierLabError, AssertionError):
    def __init__(self, message, radius=None, margin=None):
        super().__init__(message)
        self.radius = radius
        self.margin = margin


class NotACounterexample(BarrierLabError, ValueError):
    pass


class KinkPoint(DomainError):
    pass


class ResolutionError(BarrierLabError, ValueError):
    pass


class NonConvergence(BarrierLabError, RuntimeError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class HypothesisError(BarrierLabError, ValueError):
    pass


class PositivityError(BarrierLabError, ValueError):
    pass


class MonotonicityWarning(UserWarning):
    """Positive reaction coefficient large enough that uniqueness may fail."""
