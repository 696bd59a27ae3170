"""Exception and warning types raised across the package."""


class LargeStepError(Exception):
    """Base class for errors raised by this package."""


class NonSeparableError(LargeStepError, ValueError):
    """The dataset admits no direction with a positive minimum margin."""


class NumericalError(LargeStepError, ArithmeticError):
    """A loss, gradient or iterate became NaN or infinite."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ParseError(LargeStepError, ValueError):
    """A dataset or configuration file could not be parsed."""


class PreconditionUnmet(LargeStepError):
    """A lemma check was requested outside the regime where it applies."""


class NegativeDiscriminant(LargeStepError, ValueError):
    """The quadratic defining the stable hard dataset has no real root."""


class TheoryViolation(UserWarning):
    """A simulated trajectory contradicts a proven guarantee."""
