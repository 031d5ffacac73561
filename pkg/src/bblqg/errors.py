"""Exception types shared across the library."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class SingularMatrixError(RuntimeError):
    """A matrix that must be positive definite is not."""


class DivergenceError(RuntimeError):
    """A simulated trajectory left the finite domain."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"trajectory diverged at step {step}")


class BoundaryError(IndexError):
    """A Markov/Hankel/realization index falls outside the available data."""


class IdentificationError(RuntimeError):
    """Impulse data cannot support a state-space realization."""


class RiccatiBreakdownError(RuntimeError):
    """A backward Riccati step produced a singular inner matrix."""


class FilterBreakdownError(RuntimeError):
    """An innovation covariance could not be inverted."""


class EnsembleError(RuntimeError):
    """Every run in a Monte Carlo ensemble diverged."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
