"""ULA array geometry, power angular spectra, and exact covariance synthesis.

A frequency-flat channel seen by a uniform linear array under uncorrelated
scattering has a Hermitian Toeplitz covariance matrix, so the whole matrix is
carried around as its first row.  Rows are synthesized by integrating the
power angular spectrum against the array phase terms with composite
Gauss-Legendre quadrature, and converted to and from the real feature vectors
consumed by the interpolation model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import toeplitz
from scipy.special import erf

from .errors import DimensionMismatch, QuadratureNotConverged

SPEED_OF_LIGHT = 299_792_458.0

DEFAULT_QUAD_NODES = 2048
_NODES_PER_PANEL = 64


class Link(str, enum.Enum):
    UL = "ul"
    DL = "dl"


class PasFamily(str, enum.Enum):
    UNIFORM = "uniform"
    TRUNCATED_LAPLACIAN = "truncated_laplacian"
    TRUNCATED_GAUSSIAN = "truncated_gaussian"


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array operating at split UL/DL carriers.

    Parameters
    ----------
    m : int
        Antenna count, at least 2.
    f_ul, f_dl : float
        Uplink and downlink carrier frequencies in Hz.
    d : float, optional
        Antenna spacing in meters.  Defaults to half the UL wavelength.
    """

    m: int
    f_ul: float = 1.95e9
    f_dl: float = 2.14e9
    d: float | None = None

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"antenna count must be >= 2, got {self.m}")
        if self.f_ul <= 0 or self.f_dl <= 0:
            raise ValueError("carrier frequencies must be positive")
        if self.d is None:
            object.__setattr__(self, "d", self.lam_ul / 2.0)
        elif self.d <= 0:
            raise ValueError("antenna spacing must be positive")

    @property
    def lam_ul(self) -> float:
        return SPEED_OF_LIGHT / self.f_ul

    @property
    def lam_dl(self) -> float:
        return SPEED_OF_LIGHT / self.f_dl

    @property
    def f_r(self) -> float:
        """Carrier ratio f_dl / f_ul ( = lam_ul / lam_dl)."""
        return self.f_dl / self.f_ul

    def wavelength(self, link: Link) -> float:
        return self.lam_ul if link == Link.UL else self.lam_dl

    @property
    def n_features(self) -> int:
        return 2 * self.m - 1


@dataclass(frozen=True)
class AngularProfile:
    """Power angular spectrum: family, mean angle of arrival, and spread.

    The density is supported on [mean_aoa - spread, mean_aoa + spread] and
    integrates to 1 there.  ``scale`` is the width parameter of the truncated
    Laplacian/Gaussian families (unused for the uniform family); it defaults
    to spread / 3 so most of the mass sits well inside the truncation window.
    """

    family: PasFamily = PasFamily.UNIFORM
    mean_aoa: float = 0.0
    spread: float = math.radians(10.0)
    scale: float | None = None

    def __post_init__(self):
        if not -math.pi <= self.mean_aoa <= math.pi:
            raise ValueError(f"mean AoA {self.mean_aoa} outside [-pi, pi]")
        if self.spread <= 0:
            raise ValueError("angular spread must be positive")
        if self.scale is None:
            object.__setattr__(self, "scale", self.spread / 3.0)
        elif self.scale <= 0:
            raise ValueError("PAS scale must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return (self.mean_aoa - self.spread, self.mean_aoa + self.spread)


@dataclass(frozen=True)
class CovarianceFirstRow:
    """First row of a Hermitian Toeplitz covariance matrix, tagged by link.

    entries[0] must be purely real; the expanded matrix is Hermitian Toeplitz
    by construction.
    """

    entries: np.ndarray
    link: Link

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 1 or entries.size < 2:
            raise DimensionMismatch("first row must be a vector of length >= 2")
        if abs(entries[0].imag) > 1e-9 * max(1.0, abs(entries[0])):
            raise ValueError("diagonal entry of a covariance row must be real")

    @property
    def m(self) -> int:
        return self.entries.size


def steering_vector(cfg: ArrayConfig, link: Link, phi) -> np.ndarray:
    """Array response at angle ``phi`` (radians) for the given link.

    Element m equals exp(j 2 pi (d / lambda) m sin(phi)); element 0 is 1.
    ``phi`` may be a scalar or an array, giving shape (m,) or (m, len(phi)).
    """
    phi = np.asarray(phi, dtype=float)
    m = np.arange(cfg.m)
    phase = 2.0 * np.pi * (cfg.d / cfg.wavelength(link)) * np.multiply.outer(m, np.sin(phi))
    return np.exp(1j * phase)


def pas_density(profile: AngularProfile, phi) -> np.ndarray:
    """Evaluate the power angular spectrum at ``phi`` (radians).

    Zero outside the support; integrates to 1 over it.
    """
    phi = np.asarray(phi, dtype=float)
    lo, hi = profile.support
    inside = (phi >= lo) & (phi <= hi)
    t = phi - profile.mean_aoa
    if profile.family == PasFamily.UNIFORM:
        vals = np.full_like(phi, 1.0 / (2.0 * profile.spread))
    elif profile.family == PasFamily.TRUNCATED_LAPLACIAN:
        s = profile.scale
        norm = math.sqrt(2.0) * s * (1.0 - math.exp(-math.sqrt(2.0) * profile.spread / s))
        vals = np.exp(-math.sqrt(2.0) * np.abs(t) / s) / norm
    elif profile.family == PasFamily.TRUNCATED_GAUSSIAN:
        s = profile.scale
        norm = math.sqrt(2.0 * math.pi) * s * erf(profile.spread / (math.sqrt(2.0) * s))
        vals = np.exp(-(t**2) / (2.0 * s**2)) / norm
    else:  # pragma: no cover
        raise ValueError(f"unknown PAS family {profile.family}")
    return np.where(inside, vals, 0.0)


def _composite_gl_nodes(lo: float, hi: float, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights over [lo, hi]."""
    panels = max(1, -(-n_nodes // _NODES_PER_PANEL))  # ceil division
    x0, w0 = leggauss(_NODES_PER_PANEL)
    edges = np.linspace(lo, hi, panels + 1)
    mid = (edges[1:] + edges[:-1]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    nodes = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    weights = (half[:, None] * w0[None, :]).ravel()
    return nodes, weights


def _quadrature_row(cfg: ArrayConfig, profile: AngularProfile, link: Link,
                    n_nodes: int) -> np.ndarray:
    nodes, weights = _composite_gl_nodes(*profile.support, n_nodes)
    masses = weights * pas_density(profile, nodes)
    # Row 1 of E[a(phi) a(phi)^H]: entry m carries the conjugated element phase.
    m = np.arange(cfg.m)
    ratio = cfg.d / cfg.wavelength(link)
    phases = np.exp(-2j * np.pi * ratio * np.outer(m, np.sin(nodes)))
    row = phases @ masses
    # The quadrature mass is entry 0 (real by construction); dividing by it
    # pins the diagonal to exactly 1 and cancels residual normalization error.
    return row / row[0].real


def ccm_first_row(cfg: ArrayConfig, profile: AngularProfile, link: Link,
                  n_nodes: int = DEFAULT_QUAD_NODES,
                  convergence_tol: float = 1e-9) -> CovarianceFirstRow:
    """Synthesize the covariance first row by integrating the PAS.

    Entry m is the integral of p(phi) times the conjugate array phase of
    element m over the angular support.  The integral is evaluated twice, at
    ``n_nodes`` and at twice that, and the finer result is returned.

    Raises
    ------
    QuadratureNotConverged
        If doubling the node count moves any entry by more than
        ``convergence_tol``.
    """
    coarse = _quadrature_row(cfg, profile, link, n_nodes)
    fine = _quadrature_row(cfg, profile, link, 2 * n_nodes)
    drift = np.max(np.abs(fine - coarse))
    if drift > convergence_tol:
        raise QuadratureNotConverged(
            f"entries moved {drift:.3e} (> {convergence_tol:.1e}) when doubling "
            f"{n_nodes} quadrature nodes; increase n_nodes"
        )
    return CovarianceFirstRow(entries=fine, link=link)


def to_feature(row: CovarianceFirstRow) -> np.ndarray:
    """Real feature vector of length 2M-1: all real parts, then the
    imaginary parts of entries 2..M."""
    return np.concatenate([row.entries.real, row.entries[1:].imag])


def from_feature(values: np.ndarray, link: Link) -> CovarianceFirstRow:
    """Inverse of :func:`to_feature`; exact round trip."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 3 or values.size % 2 == 0:
        raise DimensionMismatch(
            f"feature vector length must be odd and >= 3, got shape {values.shape}"
        )
    m = (values.size + 1) // 2
    entries = values[:m].astype(complex)
    entries[1:] += 1j * values[m:]
    return CovarianceFirstRow(entries=entries, link=link)


def expand_toeplitz(row: CovarianceFirstRow) -> np.ndarray:
    """Expand a first row to the full M x M Hermitian Toeplitz matrix."""
    return toeplitz(np.conj(row.entries), row.entries)
