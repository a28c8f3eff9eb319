"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ResourceLimitError(RuntimeError):
    """A requested problem size exceeds a configured cap."""


class IntegrationError(RuntimeError):
    """Time integration failed before reaching the final time."""


class FitQualityError(RuntimeError):
    """An exponential fit did not meet its quality gate."""


class DecompositionError(RuntimeError):
    """A traceless mode could not be split into two physical states."""


class EstimationError(RuntimeError):
    """A root-finding estimate could not be bracketed."""


class UndefinedCorrelationError(ArithmeticError):
    """A normalized correlation has a vanishing denominator."""


class FluctuationInstabilityError(ArithmeticError):
    """Linearized fluctuations around a mean-field branch are not damped."""


class ConfigError(ValueError):
    """A run configuration is malformed or empty."""
