"""Exception hierarchy shared by all modules."""


class LeadFollowError(Exception):
    """Base class for package errors."""


class InputError(LeadFollowError, ValueError):
    """Malformed arguments: wrong shapes, out-of-range indices, misaligned grids."""


class ConfigError(LeadFollowError, ValueError):
    """A configuration that is well-formed but not admissible."""


class DomainError(LeadFollowError, ValueError):
    """The operation is undefined for the given (valid) inputs."""


class NumericalError(LeadFollowError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""
