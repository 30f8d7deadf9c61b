"""Exception hierarchy shared by every module."""


class FgnLanError(Exception):
    """Base class for all package errors."""


class DomainError(FgnLanError, ValueError):
    """An argument lies outside its admissible domain."""


class SingularityError(DomainError):
    """The requested value is infinite (spectral density at zero frequency)."""


class LocalizationError(DomainError):
    """theta0 + phi_n u leaves the parameter space (0, 1) x (0, inf)."""


class DegenerateLimitsError(DomainError):
    """alpha * gamma_hat - alpha_hat * gamma vanishes; no Fisher matrix."""


class ConditioningError(FgnLanError, ArithmeticError):
    """A Toeplitz factorization lost positive definiteness numerically."""


class ConvergenceError(FgnLanError, ArithmeticError):
    """A quadrature or optimization failed to reach its tolerance."""
