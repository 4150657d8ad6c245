"""Exception types shared across the package."""


class DriftboundError(Exception):
    """Base class for package errors."""


class ConfigError(DriftboundError):
    """Malformed or inconsistent configuration input."""


class DomainError(DriftboundError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DivergentIntegralError(DomainError):
    """A requested kernel integral is infinite by the tail law."""


class NonNormalizableError(DomainError):
    """A density cannot be normalized for the given parameters."""


class SingularityError(DomainError):
    """Evaluation requested exactly at a singular point."""


class CertificationError(DriftboundError):
    """A numerical certificate could not be established."""


class SimulationError(DriftboundError):
    """Path simulation could not proceed."""


class EstimationError(DriftboundError):
    """An estimator has no usable sample."""
