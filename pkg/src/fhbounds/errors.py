"""Exception hierarchy shared by every fhbounds module."""


class FhBoundsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameters(FhBoundsError, ValueError):
    """An argument is out of its documented domain (negative, NaN, ...)."""


class InstabilityError(InvalidParameters):
    """Offered load meets or exceeds service capacity (rho >= 1)."""


class InvalidPolicyError(InvalidParameters):
    """An allocation policy violates its bandwidth or path budget."""


class EmptySampleError(InvalidParameters):
    """An empirical quantity was requested from zero samples."""


class UnreachableReliabilityError(FhBoundsError):
    """A delay curve never drops to the tail level a reliability target needs."""

    def __init__(self, reliability, min_tail):
        self.reliability = reliability
        self.min_tail = min_tail
        super().__init__(
            f"reliability {reliability!r} needs tail <= {1.0 - reliability:.3e}, "
            f"but the curve only reaches {min_tail:.3e}"
        )


class ConfigError(FhBoundsError):
    """An experiment configuration failed schema or semantic validation."""
