"""Exception types raised across the package."""


class RMShiftError(Exception):
    """Base class for all package errors."""


class ConfigError(RMShiftError, ValueError):
    """Invalid configuration or construction arguments."""


class EvaluationError(RMShiftError, ArithmeticError):
    """A user-supplied function returned non-finite values."""


class DensityError(RMShiftError, ValueError):
    """A density fell below its declared lower bound where it is divided by."""


class IdentifiabilityError(RMShiftError, ValueError):
    """First Fourier coefficients vanish, so the shift is not identifiable."""


class VariantError(RMShiftError, ValueError):
    """The symmetric-shape formula was requested for a non-symmetric shape."""


class RateRegimeError(RMShiftError, ValueError):
    """The sqrt(n) asymptotic variance is undefined for this step schedule.

    Happens when the effective gain is too small (e.g. ``4*pi*|f1| <= 1`` for
    the default 1/n schedule). The slower-rate regime is not supported.
    """


class QuadratureError(RMShiftError, ArithmeticError):
    """Adaptive quadrature failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UndefinedEstimateError(RMShiftError, ValueError):
    """The kernel estimator has no weight at the requested grid point."""
