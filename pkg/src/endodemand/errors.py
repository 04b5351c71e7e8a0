"""Exception types shared across the library."""


class ValidationError(ValueError):
    """Input violates a documented invariant (bad weights, parameters, config)."""


class DomainError(ValidationError):
    """An evaluation left the risk profile's domain; message names the scenario."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget; message carries the residuals."""
