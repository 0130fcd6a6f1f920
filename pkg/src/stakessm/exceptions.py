"""Exception hierarchy shared by all modules."""


class StakesError(Exception):
    """Base class for package errors."""


class InvalidParameterError(StakesError, ValueError):
    """A model parameter lies outside its admissible domain."""


class ConfigurationError(StakesError, ValueError):
    """An option or model variant is inconsistent with the requested operation."""


class DomainError(StakesError, ValueError):
    """An argument (time index, observation, quantile level) is out of range."""


class DataError(StakesError, ValueError):
    """Input data violate the dataset contract."""


class NumericalError(StakesError, RuntimeError):
    """A numerical procedure failed (singular information, no convergence)."""
