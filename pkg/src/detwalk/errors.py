"""Exception types shared across the package."""


class DetwalkError(Exception):
    """Base class for all package errors."""


class DimensionError(DetwalkError, ValueError):
    """Operands have incompatible shapes."""


class PreconditionError(DetwalkError, ValueError):
    """Input parameters violate an operation's precondition."""


class NotNormalizedError(PreconditionError):
    """A vector expected to be a unit state is not normalized."""


class DegenerateError(PreconditionError):
    """Parameters sit on a degenerate point (empty class, resonance, ...)."""


class CapExceededError(PreconditionError):
    """A full-space enumeration would exceed the configured size cap."""


class SolverError(DetwalkError, RuntimeError):
    """A numeric solver failed to meet its tolerance.

    ``residual`` holds the best residual reached, when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(SolverError):
    """An eigendecomposition did not reach the residual bound."""


class PromiseViolation(DetwalkError, ValueError):
    """A triangle instance has more than one target triangle."""
