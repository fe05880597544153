"""Exception types shared across the package."""


class TFQKDError(Exception):
    """Base class for errors raised by this package."""


class DomainError(TFQKDError, ValueError):
    """An argument lies outside the domain of a function."""


class ConfigurationError(TFQKDError, ValueError):
    """Inconsistent or incomplete configuration."""


class ConditioningError(TFQKDError):
    """Conditioning on a detector pattern that has zero probability."""


class UndefinedErrorRate(TFQKDError):
    """Code-mode gain is zero, so the error rate is undefined."""


class InfeasibleError(TFQKDError):
    """A linear program or leakage problem has no feasible point."""
