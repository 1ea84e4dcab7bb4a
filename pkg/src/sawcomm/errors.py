"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Raised when model or algorithm parameters are invalid (CLI exit code 2)."""


class GuardError(RuntimeError):
    """Raised when a desk-scale guard would be exceeded (CLI exit code 3)."""


class InfeasibleError(RuntimeError):
    """Raised when a convex program is detected to be (numerically) infeasible."""
