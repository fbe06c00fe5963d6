"""MMSE downlink channel estimation with true and estimated covariances.

The downstream task: a base station sounds the channel with orthonormal-row
pilots under a total power budget, then forms the Bayes-optimal linear
estimate from the received symbols and a covariance prior.  Feeding the
estimator an *estimated* covariance instead of the true one quantifies how
much a covariance estimation method costs in channel estimation quality.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import dft

from .array_model import CovarianceFirstRow, Link, expand_toeplitz, from_feature
from .dataset import Dataset, sample_channels
from .errors import SolveFailed, TooManyPilots

RANK_THRESHOLD = 1e-8


class PilotStyle(str, enum.Enum):
    DFT_ROWS = "dft"
    RANDOM_UNITARY = "random_unitary"


@dataclass(frozen=True)
class PilotConfig:
    """Pilot signaling setup: count, power budget, and noise level.

    ``n_pilots = None`` defers the pilot count to the numerical rank of each
    true covariance.  The pilot matrix has orthonormal rows scaled so its
    total power is exactly ``total_power``; the pilot noise power is
    total_power / 10^(pilot_snr_db / 10).
    """

    pilot_snr_db: float = 20.0
    n_pilots: int | None = None
    total_power: float = 1.0
    style: PilotStyle = PilotStyle.RANDOM_UNITARY

    def __post_init__(self):
        if self.n_pilots is not None and self.n_pilots < 1:
            raise ValueError("n_pilots must be >= 1")
        if self.total_power <= 0:
            raise ValueError("total pilot power must be positive")

    @property
    def noise_power(self) -> float:
        return self.total_power / 10.0 ** (self.pilot_snr_db / 10.0)


def make_pilots(n_pilots: int, m: int, total_power: float = 1.0,
                style: PilotStyle = PilotStyle.DFT_ROWS,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Build an (n_pilots, m) pilot matrix with orthonormal rows, scaled so
    trace(X X^H) equals ``total_power`` exactly.

    DFT style takes the first rows of the unitary DFT matrix and is fully
    deterministic; random-unitary style orthonormalizes a complex Gaussian
    draw and needs ``rng``.
    """
    if n_pilots > m:
        raise TooManyPilots(f"{n_pilots} pilots exceed {m} antennas")
    if style == PilotStyle.DFT_ROWS:
        base = dft(m, scale="sqrtn")[:n_pilots]
    else:
        if rng is None:
            raise ValueError("random-unitary pilots need an rng")
        g = rng.standard_normal((m, n_pilots)) + 1j * rng.standard_normal((m, n_pilots))
        q, _ = np.linalg.qr(g)
        base = q.conj().T
    return math.sqrt(total_power / n_pilots) * base


def _gram(r: np.ndarray, x: np.ndarray, sigma_p2: float) -> np.ndarray:
    g = x @ r @ x.conj().T
    g[np.diag_indices_from(g)] += sigma_p2
    return g


def _estimator_filter(r: np.ndarray, x: np.ndarray, sigma_p2: float) -> np.ndarray:
    """W = R X^H (X R X^H + sigma^2 I)^-1, so the estimate is W y."""
    try:
        return np.linalg.solve(_gram(r, x, sigma_p2), x @ r).conj().T
    except np.linalg.LinAlgError as err:
        raise SolveFailed(f"pilot Gram matrix is singular: {err}") from err


def mmse_estimate(r: np.ndarray, x: np.ndarray, sigma_p2: float,
                  y: np.ndarray) -> np.ndarray:
    """MMSE channel estimate R X^H (X R X^H + sigma^2 I)^-1 y.

    With the true covariance this is the Bayes-optimal estimator; with an
    estimated covariance it is the imperfect variant of the same filter.
    """
    if sigma_p2 <= 0:
        raise ValueError("pilot noise power must be positive")
    return _estimator_filter(r, x, sigma_p2) @ y


def mmse_mse_closed_form(r: np.ndarray, x: np.ndarray, sigma_p2: float) -> float:
    """Closed-form MSE of the MMSE estimator:
    trace(R - R X^H (X R X^H + sigma^2 I)^-1 X R)."""
    b = x @ r
    z = np.linalg.solve(_gram(r, x, sigma_p2), b)
    mse = float(np.real(np.trace(r)) - np.real(np.sum(np.conj(b) * z)))
    if mse < -1e-9:
        raise SolveFailed(f"closed-form MSE came out negative: {mse:.3e}")
    return mse


def numerical_rank(r: np.ndarray, threshold: float = RANK_THRESHOLD) -> int:
    """Count singular values above ``threshold`` times the largest."""
    sv = np.linalg.svd(r, compute_uv=False)
    return max(1, int(np.sum(sv > threshold * sv[0])))


def channel_experiment(dataset: Dataset,
                       method_estimates: dict[str, np.ndarray],
                       pilot_cfg: PilotConfig,
                       n_realizations: int = 100,
                       rng: np.random.Generator | None = None
                       ) -> dict[str, np.ndarray]:
    """Channel-estimation NMSE of the perfect-covariance estimator and of
    each method's imperfect estimator, per test point.

    For every test user: draw ``n_realizations`` channels from the *true* DL
    covariance, observe them through the pilots, and score
    ||h - h_hat||^2 / ||h||^2 averaged over realizations.  Pilot count is
    ``pilot_cfg.n_pilots`` or, when None, the numerical rank of the true
    covariance of each test point.  Returns per-test-point NMSE arrays keyed
    by method name, with "perfect" always included.
    """
    if n_realizations < 1:
        raise ValueError("need at least one channel realization")
    if rng is None:
        rng = np.random.default_rng()
    n_test = len(dataset.test)
    for name, est in method_estimates.items():
        if np.atleast_2d(est).shape[0] != n_test:
            raise ValueError(f"method {name!r} supplies {len(est)} estimates "
                             f"for {n_test} test points")

    m = dataset.cfg.m
    sigma_p2 = pilot_cfg.noise_power
    out = {name: np.empty(n_test) for name in ["perfect", *method_estimates]}

    for t, user in enumerate(dataset.test):
        true_row = from_feature(user.dl_true, Link.DL)
        r_true = expand_toeplitz(true_row)
        n_pilots = pilot_cfg.n_pilots or min(m, numerical_rank(r_true))
        x = make_pilots(n_pilots, m, pilot_cfg.total_power, pilot_cfg.style, rng)

        h = sample_channels(true_row, n_realizations, rng)
        noise = math.sqrt(sigma_p2 / 2.0) * (
            rng.standard_normal((n_realizations, n_pilots))
            + 1j * rng.standard_normal((n_realizations, n_pilots))
        )
        y = h @ x.T + noise
        h_energy = np.sum(np.abs(h) ** 2, axis=1)

        filters = {"perfect": _estimator_filter(r_true, x, sigma_p2)}
        for name, est in method_estimates.items():
            r_est = expand_toeplitz(from_feature(np.atleast_2d(est)[t], Link.DL))
            filters[name] = _estimator_filter(r_est, x, sigma_p2)
        for name, w in filters.items():
            h_hat = y @ w.T
            err = np.sum(np.abs(h - h_hat) ** 2, axis=1)
            out[name][t] = float(np.mean(err / h_energy))
    return out
