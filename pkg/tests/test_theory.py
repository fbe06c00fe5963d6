"""Distance-ratio constant and error-bound component tests."""

import math

import mpmath
import numpy as np
import pytest

from dlccm.array_model import ArrayConfig
from dlccm.dataset import NoiseSpec, build_dataset
from dlccm.errors import DegenerateDenominator, EmptyNeighborhood
from dlccm.learner import lipschitz_bound, predict_raw, train
from dlccm.theory import KQuery, bound_components, k_constant, sine_ratio

FR = 1.0974


class TestSineRatio:
    def test_unit_carrier_ratio_is_one(self):
        for m, ds in [(2, 0.3), (17, 0.9), (64, 1.4)]:
            assert sine_ratio(1.0, m, ds) == 1.0

    def test_small_width_limit_is_squared_ratio(self):
        val = sine_ratio(FR, 64, 1e-6)
        assert val == pytest.approx(FR**2, rel=1e-4)

    def test_against_arbitrary_precision_oracle(self):
        m, ds = 64, 0.1
        with mpmath.workdps(50):
            half = mpmath.mpf("0.05")
            fr = mpmath.mpf("1.0974")
            num = mpmath.fsum(mpmath.sin(fr * k * mpmath.pi * half) ** 2
                              for k in range(m))
            den = mpmath.fsum(mpmath.sin(k * mpmath.pi * half) ** 2
                              for k in range(m))
            oracle = float(num / den)
        assert sine_ratio(FR, m, ds) == pytest.approx(oracle, rel=1e-12)

    def test_even_in_width(self):
        assert sine_ratio(FR, 32, 0.7) == sine_ratio(FR, 32, -0.7)

    def test_degenerate_denominator(self):
        with pytest.raises(DegenerateDenominator):
            sine_ratio(FR, 16, 2.0)

    def test_rejects_out_of_range_width(self):
        with pytest.raises(ValueError):
            sine_ratio(FR, 16, 0.0)
        with pytest.raises(ValueError):
            sine_ratio(FR, 16, 2.5)


class TestKConstant:
    def test_unit_carrier_ratio_gives_one(self):
        q = KQuery(f_r=1.0, delta=math.radians(30), m_range=(2, 64), b_grid=500)
        assert k_constant(q) == 1.0

    def test_small_spread_equals_carrier_ratio(self):
        q = KQuery(f_r=FR, delta=math.radians(5), m_range=(2, 200), b_grid=2000)
        assert k_constant(q) == pytest.approx(FR, abs=1e-3)

    def test_wide_spread_tabulated_value(self):
        q = KQuery(f_r=FR, delta=math.radians(45), m_range=(2, 1000), b_grid=8000)
        assert k_constant(q) == pytest.approx(1.1317, abs=2e-3)

    def test_nondecreasing_in_spread(self):
        # slack covers the b-grid discretization: at small spreads the
        # supremum sits at the b -> 0 end, sampled at sin(delta)/b_grid
        deltas = [math.radians(d) for d in (5, 15, 30, 45, 60, 75)]
        values = [k_constant(KQuery(f_r=FR, delta=d, m_range=(2, 300), b_grid=2000))
                  for d in deltas]
        assert all(b >= a - 1e-6 for a, b in zip(values, values[1:]))

    def test_rejects_bad_queries(self):
        with pytest.raises(ValueError):
            KQuery(f_r=FR, delta=0.0)
        with pytest.raises(ValueError):
            KQuery(f_r=FR, delta=math.radians(10), m_range=(1, 50))


@pytest.fixture(scope="module")
def noiseless_model():
    ds = build_dataset(ArrayConfig(m=16), n_users=120,
                       noise=NoiseSpec(snr_db=math.inf, n_ch=1), seed=77)
    model, _ = train(ds)
    return ds, model


class TestBoundComponents:
    def test_empty_neighborhood(self, noiseless_model):
        ds, model = noiseless_model
        with pytest.raises(EmptyNeighborhood):
            bound_components(model, ds, 0, delta=1e-9, epsilon=1e-3, k=1.1)

    def test_component_arithmetic(self, noiseless_model):
        ds, model = noiseless_model
        delta = 2.0
        rep = bound_components(model, ds, 0, delta=delta, epsilon=0.01, k=1.2)
        assert rep.lipschitz_term == pytest.approx(
            (lipschitz_bound(model) + 1.2) * delta, rel=1e-12)
        assert rep.slack_term == pytest.approx(
            math.sqrt(31) * 0.01, rel=1e-12)
        assert rep.total == pytest.approx(
            rep.neighborhood_error + rep.lipschitz_term + rep.slack_term, rel=1e-12)
        assert rep.n_neighbors >= 1

        x_test = ds.test[0].ul_observed
        observed = np.linalg.norm(ds.test[0].dl_true - predict_raw(model, x_test))
        assert rep.observed_test_error == pytest.approx(observed, rel=1e-12)

    def test_bound_holds_for_most_test_points(self, noiseless_model):
        # the bound is probabilistic: allow a small failure fraction
        ds, model = noiseless_model
        train_ul = ds.train_inputs()
        d = np.linalg.norm(train_ul[:, None] - train_ul[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        delta = 2.0 * float(np.median(d.min(axis=1)))
        k = k_constant(KQuery(f_r=ds.cfg.f_r, delta=ds.spread_hi,
                              m_range=(2, 200), b_grid=2000))
        held = skipped = 0
        for idx in range(len(ds.test)):
            try:
                rep = bound_components(model, ds, idx, delta, 1e-6, k)
            except EmptyNeighborhood:
                skipped += 1
                continue
            held += rep.total >= rep.observed_test_error
        evaluated = len(ds.test) - skipped
        assert evaluated >= len(ds.test) // 2
        assert held >= 0.95 * evaluated
