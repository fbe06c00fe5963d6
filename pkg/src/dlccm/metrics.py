"""Covariance estimation error metrics and the dictionary baseline.

Three complementary metrics: a normalized Frobenius error (scale sensitive),
the correlation matrix distance (direction only), and a deviation metric that
measures how much beamforming gain is lost by pointing along the estimate's
principal eigenvector instead of the true one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .array_model import CovarianceFirstRow, Link, expand_toeplitz, from_feature
from .errors import DegenerateSpectrum, EmptyDictionary, ZeroReference


def nmse(r_true: np.ndarray, r_est: np.ndarray) -> float:
    """Squared Frobenius error normalized by the reference energy."""
    if r_true.shape != r_est.shape:
        raise ValueError(f"shape mismatch: {r_true.shape} vs {r_est.shape}")
    ref = np.linalg.norm(r_true)
    if ref == 0.0:
        raise ZeroReference("reference covariance is zero")
    return float(np.linalg.norm(r_true - r_est) ** 2 / ref**2)


def cmd(r_true: np.ndarray, r_est: np.ndarray) -> float:
    """Correlation matrix distance: 1 - <A, B> / (||A|| ||B||).

    Zero iff the estimate is a positive multiple of the truth; symmetric in
    its arguments and scale invariant.
    """
    ref = np.linalg.norm(r_true)
    est = np.linalg.norm(r_est)
    if ref == 0.0 or est == 0.0:
        raise ZeroReference("cannot compare a zero covariance")
    inner = np.real(np.trace(r_true @ r_est))
    return float(1.0 - inner / (ref * est))


def dm(r_true: np.ndarray, r_est: np.ndarray) -> float:
    """Deviation metric: Rayleigh-quotient loss of the estimated principal
    eigenvector against the true top eigenvalue.

    If the estimate is indefinite, the eigenvector of its largest signed
    eigenvalue is used.
    """
    gamma = np.linalg.eigvalsh(r_true)[-1]
    if gamma <= 1e-12:
        raise DegenerateSpectrum("reference covariance has no positive eigenvalue")
    _, vecs = np.linalg.eigh(r_est)
    v = vecs[:, -1]
    return float(1.0 - np.real(v.conj() @ r_true @ v) / gamma)


@dataclass
class MetricReport:
    """Per-sample metric values and their means over an evaluation set."""

    nmse_values: np.ndarray
    cmd_values: np.ndarray
    dm_values: np.ndarray

    @property
    def nmse(self) -> float:
        return float(np.mean(self.nmse_values))

    @property
    def cmd(self) -> float:
        return float(np.mean(self.cmd_values))

    @property
    def dm(self) -> float:
        return float(np.mean(self.dm_values))


def _expand_feature(feature: np.ndarray) -> np.ndarray:
    return expand_toeplitz(from_feature(feature, Link.DL))


def evaluate_features(true_features: np.ndarray,
                      est_features: np.ndarray) -> MetricReport:
    """Expand DL feature vectors into covariance matrices and score all
    three metrics per sample."""
    true_features = np.atleast_2d(true_features)
    est_features = np.atleast_2d(est_features)
    if true_features.shape != est_features.shape:
        raise ValueError("true/estimated feature sets differ in shape")
    vals = np.empty((true_features.shape[0], 3))
    for i, (tf, ef) in enumerate(zip(true_features, est_features)):
        rt, re = _expand_feature(tf), _expand_feature(ef)
        vals[i] = (nmse(rt, re), cmd(rt, re), dm(rt, re))
    return MetricReport(nmse_values=vals[:, 0], cmd_values=vals[:, 1],
                        dm_values=vals[:, 2])


def dictionary_bandwidth(train_ul: np.ndarray, k: int = 10) -> float:
    """Default dictionary bandwidth: median distance to the k-th nearest
    neighbor among the training UL features."""
    d = cdist(train_ul, train_ul)
    d.sort(axis=1)
    kth = d[:, min(k, d.shape[1] - 1)]
    bw = float(np.median(kth))
    if bw <= 0.0:
        raise ValueError("degenerate dictionary: duplicate UL features everywhere")
    return bw


def dictionary_estimate(train_ul: np.ndarray, train_dl: np.ndarray,
                        x: np.ndarray, k: int = 10,
                        bandwidth: float | None = None) -> np.ndarray:
    """Kernel-weighted k-nearest-neighbor estimate of a DL feature vector.

    The k training UL features closest to ``x`` get Gaussian weights
    exp(-d^2 / bandwidth^2), normalized to sum to 1; the estimate is the
    weighted average of their DL features, rescaled to unit leading entry.
    This is a deliberately simple stand-in for projection-based dictionary
    methods ("dictionary (kernel-weighted kNN)" in all outputs).
    """
    train_ul = np.asarray(train_ul, dtype=float)
    train_dl = np.asarray(train_dl, dtype=float)
    if train_ul.size == 0 or train_dl.size == 0:
        raise EmptyDictionary("no training pairs supplied")
    n = train_ul.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds dictionary size {n}")
    if bandwidth is None:
        bandwidth = dictionary_bandwidth(train_ul, k)

    single = np.asarray(x).ndim == 1
    queries = np.atleast_2d(np.asarray(x, dtype=float))
    sq = cdist(queries, train_ul, "sqeuclidean")
    out = np.empty((queries.shape[0], train_dl.shape[1]))
    for i, row in enumerate(sq):
        nearest = np.argpartition(row, k - 1)[:k]
        d2 = row[nearest]
        # Shift by the minimum before exponentiating so weights never all
        # underflow; the normalization cancels the shift exactly.
        w = np.exp(-(d2 - d2.min()) / bandwidth**2)
        w /= w.sum()
        est = w @ train_dl[nearest]
        out[i] = est / est[0]
    return out[0] if single else out
