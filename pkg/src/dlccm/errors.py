"""Exception types raised across the package.

Every failure mode has a dedicated class so callers can react to specific
conditions (e.g. retrying a degenerate noise draw) without string matching.
"""


class DlccmError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(DlccmError):
    """Vector or matrix dimensions are inconsistent with the antenna count."""


class QuadratureNotConverged(DlccmError):
    """Doubling the quadrature node count still changed the result too much."""


class NotPSD(DlccmError):
    """A covariance matrix has an eigenvalue too far below zero."""


class ProjectionNotConverged(DlccmError):
    """Alternating projection hit the iteration cap before the tolerance.

    Carries the last iterate so the caller may accept it anyway.
    """

    def __init__(self, residual: float, last_row):
        super().__init__(
            f"structured projection did not converge (last residual {residual:.3e})"
        )
        self.residual = residual
        self.last_row = last_row


class NonPositiveDiagonal(DlccmError):
    """The (1,1) entry of a noisy covariance estimate is not positive."""


class InvalidRange(DlccmError):
    """A numeric range parameter is empty or inverted."""


class SolveFailed(DlccmError):
    """A linear system was numerically singular beyond the jitter level."""


class NormalizationDegenerate(DlccmError):
    """A predicted feature vector has a near-zero first entry."""


class ZeroReference(DlccmError):
    """The reference matrix of an error metric is zero."""


class DegenerateSpectrum(DlccmError):
    """The reference matrix has no strictly positive top eigenvalue."""


class EmptyDictionary(DlccmError):
    """The dictionary baseline was given no training pairs."""


class TooManyPilots(DlccmError):
    """More pilot symbols requested than antennas."""


class DegenerateDenominator(DlccmError):
    """Every denominator term of the sine ratio vanished."""


class EmptyNeighborhood(DlccmError):
    """No training sample falls inside the requested neighborhood radius."""


class ConfigError(DlccmError):
    """An experiment configuration file is malformed or has unknown keys."""
