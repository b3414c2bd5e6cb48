"""Exception types shared across the package."""


class SqFormatError(Exception):
    """Base class for all package errors."""


class ConfigError(SqFormatError, ValueError):
    """Invalid parameter or configuration value."""


class StructuralError(SqFormatError, ValueError):
    """Data violates a format invariant (shape, cardinality, range, corruption)."""


class NumericalError(SqFormatError, ArithmeticError):
    """A numerical operation failed despite valid-looking inputs."""


class ContainerError(StructuralError):
    """Malformed or truncated container file."""
