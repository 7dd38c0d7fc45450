"""Exception types shared across the package.

Each maps onto one of the command-line exit codes: verification failures
exit with 1, configuration problems with 2 and numerical breakdowns with 3.
"""


class MetriplexError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(MetriplexError, ValueError):
    """Invalid configuration, unknown key or bad argument."""

    exit_code = 2


class NumericalError(MetriplexError, ArithmeticError):
    """A computation left its domain of validity (blow-up, lost positivity)."""

    exit_code = 3

    def __init__(self, message, last_good_time=None):
        super().__init__(message)
        self.last_good_time = last_good_time


class StabilityError(NumericalError):
    """Requested time step exceeds the explicit stability bound."""

    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class InsufficientSamplesError(MetriplexError, ValueError):
    """Histogram estimators need more samples than were supplied."""

    exit_code = 3


class DegenerateError(NumericalError):
    """A ratio estimator has a vanishing denominator."""


class VerificationError(MetriplexError):
    """An identity check exceeded its tolerance."""

    exit_code = 1
