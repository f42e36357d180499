"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GridError(ValueError):
    """A grid function or mesh violates its construction invariants."""


class TailError(ValueError):
    """Far-field truncation would dominate the result (asymptotes missing)."""


class ConvergenceError(RuntimeError):
    """An iterative solve stopped without meeting its tolerance.

    ``info`` carries whatever diagnostics the solver gathered.
    """

    def __init__(self, message: str, info: dict | None = None):
        super().__init__(message)
        self.info = info or {}


class PreconditionError(ValueError):
    """Input does not satisfy the hypotheses a checker relies on."""


class ConfigError(ValueError):
    """A run configuration is malformed or out of range."""
