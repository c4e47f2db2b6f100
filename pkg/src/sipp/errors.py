"""Exception types raised across the package."""


class SippError(Exception):
    """Base class for all package errors."""


class RangeError(SippError, IndexError):
    """A request reaches past the precomputed range (sieve, sequence prefix)."""


class ResourceError(SippError, MemoryError):
    """A request would exceed the configured memory budget."""


class BudgetError(SippError, ValueError):
    """An exact computation was requested beyond its enumeration budget."""


class DomainError(SippError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class HorizonError(SippError, ValueError):
    """A query reaches outside the window a measure was generated on."""


class NumericError(SippError, ArithmeticError):
    """A numerical procedure failed to converge or became pathological."""


class ConfigError(SippError, ValueError):
    """An experiment or model configuration is invalid."""
