"""Exception types shared across the package."""


class Error(Exception):
    """Base class for all package errors."""


class MissingDerivative(Error):
    """A field cannot supply a required partial derivative or expansion order."""


class NonPSDCovariance(Error):
    """Brownian covariance matrix is not positive semidefinite within tolerance."""


class SingularJump(Error):
    """A jump factor 1 + G*mark vanished, so the fundamental solution is not invertible."""


class NearSingular(Error):
    """Fundamental matrix failed the Phi @ Phi^-1 == identity sanity check."""


class InsufficientPaths(Error):
    """Too many paths blew up for the requested statistic to be meaningful."""


class ConfigError(Error):
    """Invalid run configuration."""
