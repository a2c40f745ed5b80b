"""Exception hierarchy shared by every module.

The CLI maps ``ConfigurationError`` to exit status 2 and ``NumericalError``
to exit status 3.
"""


class ConfigurationError(ValueError):
    """Inputs violate a declared precondition (bad characteristics, drivers, grids)."""


class NumericalError(RuntimeError):
    """A numerical routine could not deliver its contract."""


class StepSizeError(NumericalError):
    pass


class JumpInvarianceError(ConfigurationError):
    """A jump x + sigma(x) e leaves the closed domain."""

    def __init__(self, x, size):
        self.x = x
        self.size = size
        super().__init__(f"jump of size {size!r} from x={x!r} leaves the closed domain")


class RegressionError(NumericalError):
    pass


class BracketError(NumericalError):
    """Root bracketing failed; usually signals a non-monotone input."""
