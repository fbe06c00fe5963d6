"""Distance-ratio constants and error-bound components for the interpolator.

For uniform angular profiles with a shared spread, the ratio of DL to UL
squared feature distances of two users with nearly equal mean angles is
governed by a ratio of sine sums depending only on the carrier ratio, the
antenna count, and the effective angular width.  Its supremum bounds how much
the DL geometry can stretch relative to the UL geometry, and enters the test
error bound next to the interpolator's Lipschitz constant.

Note on the constant's scale: the sine ratio bounds the ratio of *squared*
norms, so the distance-ratio constant reported here is the supremum of its
square root.  (At small widths the ratio tends to the squared carrier ratio,
and the constant to the carrier ratio itself.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import DegenerateDenominator, EmptyNeighborhood
from .learner import TrainedInterpolator, lipschitz_bound, predict_raw

_TINY = 1e-300


@dataclass(frozen=True)
class KQuery:
    """Search domain for the distance-ratio constant.

    The width variable b = cos(mean angle) * sin(spread) ranges over
    (0, sin(delta)]; the antenna count ranges over ``m_range`` inclusive.
    """

    f_r: float
    delta: float
    m_range: tuple[int, int] = (2, 1000)
    b_grid: int = 20000

    def __post_init__(self):
        if self.f_r <= 0:
            raise ValueError("carrier ratio must be positive")
        if not 0.0 < self.delta < math.pi / 2:
            raise ValueError("spread must lie in (0, pi/2)")
        lo, hi = self.m_range
        if not 2 <= lo <= hi <= 10_000:
            raise ValueError(f"m_range {self.m_range} outside [2, 10000]")
        if self.b_grid < 1:
            raise ValueError("b_grid must be >= 1")


def _sin_sq_pi(x: np.ndarray) -> np.ndarray:
    # sin^2(pi x) has period 1 in x; reducing first makes integer x exactly 0.
    return np.sin(np.pi * np.fmod(x, 1.0)) ** 2


def sine_ratio(f_r: float, m: int, delta_sin: float) -> float:
    """Ratio of DL to UL sine sums at effective width ``delta_sin``.

    Even in ``delta_sin``; tends to f_r^2 as the width goes to zero.

    Raises
    ------
    DegenerateDenominator
        When every denominator term vanishes (width an exact multiple of 2,
        making all denominator angles multiples of pi).
    """
    if m < 2:
        raise ValueError("antenna count must be >= 2")
    if not 0.0 < abs(delta_sin) <= 2.0:
        raise ValueError(f"delta_sin must be in (0, 2], got {delta_sin}")
    half = abs(delta_sin) / 2.0
    idx = np.arange(m)
    den_terms = _sin_sq_pi(idx * half)
    if not np.any(den_terms >= _TINY):
        raise DegenerateDenominator(
            f"every denominator term vanished at delta_sin={delta_sin}"
        )
    num_terms = _sin_sq_pi(f_r * idx * half)
    return float(num_terms.sum() / den_terms.sum())


def k_constant(query: KQuery) -> float:
    """Distance-ratio constant: sup over antenna counts and widths of the
    square root of the sine ratio.

    Evaluates every integer antenna count in ``m_range`` against a uniform
    grid of ``b_grid`` widths in (0, sin(delta)] via cumulative sums, so the
    whole sweep costs O(b_grid * m_hi).
    """
    m_lo, m_hi = query.m_range
    b_max = math.sin(query.delta)
    b_all = b_max * np.arange(1, query.b_grid + 1) / query.b_grid
    idx = np.arange(m_hi)

    best = 0.0
    chunk = max(1, int(2e6 / m_hi))
    for start in range(0, b_all.size, chunk):
        b = b_all[start:start + chunk, None]
        num = np.cumsum(_sin_sq_pi(query.f_r * idx * b), axis=1)[:, m_lo - 1:]
        den = np.cumsum(_sin_sq_pi(idx * b), axis=1)[:, m_lo - 1:]
        ratio = num / den
        best = max(best, float(ratio.max()))
    return math.sqrt(best)


@dataclass
class BoundReport:
    """Evaluated components of the test-error bound at one test point.

    The bound's right-hand side is the mean training error over the
    delta-neighborhood plus (L + K) delta plus sqrt(2M-1) epsilon; the
    observed error of the raw interpolator is reported alongside for
    comparison.
    """

    neighborhood_error: float
    lipschitz_term: float
    slack_term: float
    total: float
    observed_test_error: float
    n_neighbors: int


def bound_components(model: TrainedInterpolator, dataset: Dataset,
                     test_index: int, delta: float, epsilon: float,
                     k: float) -> BoundReport:
    """Evaluate the error-bound components for one test point.

    ``delta`` is the neighborhood radius in UL feature space, ``epsilon`` the
    concentration slack, and ``k`` the distance-ratio constant (see
    :func:`k_constant`).  All errors are of the raw (unnormalized)
    interpolator output.

    Raises
    ------
    EmptyNeighborhood
        If no training sample lies strictly within ``delta`` of the test
        point's UL feature.
    """
    if delta <= 0 or epsilon <= 0:
        raise ValueError("delta and epsilon must be positive")
    x_test = dataset.test[test_index].ul_observed
    train_ul = dataset.train_inputs()
    dists = np.linalg.norm(train_ul - x_test, axis=1)
    inside = dists < delta
    if not np.any(inside):
        raise EmptyNeighborhood(
            f"no training sample within {delta:.3g} of test point {test_index} "
            f"(nearest at {dists.min():.3g})"
        )
    preds = predict_raw(model, train_ul[inside])
    targets = dataset.train_targets()[inside]
    neighborhood_error = float(np.mean(np.linalg.norm(targets - preds, axis=1)))

    lipschitz_term = (lipschitz_bound(model) + k) * delta
    slack_term = math.sqrt(model.n_features) * epsilon
    observed = float(np.linalg.norm(
        dataset.test[test_index].dl_true - predict_raw(model, x_test)
    ))
    return BoundReport(
        neighborhood_error=neighborhood_error,
        lipschitz_term=lipschitz_term,
        slack_term=slack_term,
        total=neighborhood_error + lipschitz_term + slack_term,
        observed_test_error=observed,
        n_neighbors=int(inside.sum()),
    )
