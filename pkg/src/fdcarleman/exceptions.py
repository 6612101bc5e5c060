class PlacementError(ValueError):
    """Raised when a grid function sits on the wrong mesh for an operation."""


class StabilityError(ValueError):
    """Raised when the time step violates the scheme's stability condition."""


class InfeasibleParameters(ValueError):
    """Raised when the Carleman parameter ledger cannot satisfy its conditions.

    The message names every violated condition so that it can be surfaced
    verbatim by the command-line driver.
    """

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = tuple(violated)


class LongHorizonError(ValueError):
    """Raised when a single-phase calibration is requested for ``T >= 1``."""


class ConvergenceError(RuntimeError):
    """Raised when conjugate gradient does not reach its tolerance."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)
