"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DesignError(ValueError):
    """A design matrix cannot be built from the given record and model."""


class CohortValidationError(ValueError):
    """Input data violate a structural invariant (times, ids, finiteness)."""


class NumericalError(ArithmeticError):
    """A numerical routine produced non-finite or inconsistent values."""


class MetricUndefinedError(ValueError):
    """An accuracy metric is undefined for the given outcome configuration."""


class InitializationError(RuntimeError):
    """The sampler could not find a valid starting point."""


class ConvergenceError(RuntimeError):
    """Sampling finished in a state that should not be trusted."""
