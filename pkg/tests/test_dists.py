import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from skipprice import dists
from skipprice.dists import (
    Empirical,
    EqualRevenue,
    Exponential,
    FlattenedTailImpatienceExponential,
    ImpatienceExponential,
    Lomax,
    Scaled,
    TwoPointDiscrete,
    UniformUnit,
    impatience_view,
    is_mhr,
    marginal_value_dist,
    truncate,
)

CONTINUOUS_KINDS = [
    UniformUnit(),
    ImpatienceExponential(1.0),
    ImpatienceExponential(3.0),
    ImpatienceExponential(10.0),
    FlattenedTailImpatienceExponential(10.0, 0.25),
    FlattenedTailImpatienceExponential(10.0, 0.35),
    Exponential(1.0),
    Exponential(5.0),
    Lomax(3.0),
    EqualRevenue(),
]

MHR_KINDS = [
    UniformUnit(),
    Exponential(1.0),
    Exponential(3.0),
    ImpatienceExponential(2.0),
    dists.ImpatienceView(ImpatienceExponential(3.0)),
]

APP_E_TYPE_DISTS = [
    UniformUnit(),
    ImpatienceExponential(1.0),
    ImpatienceExponential(2.0),
    ImpatienceExponential(3.0),
]


def numeric_cdf(d, x):
    lo, _ = d.support
    val, _ = integrate.quad(d.pdf, lo, x, limit=400)
    return val


class TestCdf:
    def test_uniform_identity(self):
        assert UniformUnit().cdf(0.5) == 0.5

    def test_impatience_full_support(self):
        assert impatience_view(ImpatienceExponential(1.0)).cdf(1.0) == pytest.approx(1.0)

    def test_impatience_exponential_half(self):
        # oracle: direct numeric integration of the impatience density
        view = impatience_view(ImpatienceExponential(1.0))
        expected = numeric_cdf(view, 0.5)
        assert expected == pytest.approx((1 - math.exp(-0.5)) / (1 - math.exp(-1)), abs=1e-9)
        assert view.cdf(0.5) == pytest.approx(expected, abs=1e-9)

    def test_clamps_outside_support(self):
        d = ImpatienceExponential(3.0)
        assert d.cdf(-1.0) == 0.0
        assert d.cdf(2.0) == 1.0

    @pytest.mark.parametrize("d", CONTINUOUS_KINDS)
    def test_monotone_and_normalized(self, d):
        lo, hi = d.support
        if math.isinf(hi):
            hi = float(d.quantile(1.0 - 1e-5))
        xs = np.linspace(lo, hi, 500)
        cs = np.asarray(d.cdf(xs))
        assert np.all(np.diff(cs) >= -1e-12)
        assert abs(float(d.cdf(lo)) - 0.0) < 1e-9
        mass, _ = integrate.quad(d.pdf, lo, hi, limit=800)
        assert mass == pytest.approx(float(d.cdf(hi)), abs=1e-4)
        assert float(d.cdf(hi)) == pytest.approx(1.0, abs=1e-4)


class TestInverseHazard:
    def test_uniform(self):
        assert UniformUnit().inverse_hazard(0.25) == pytest.approx(0.75)

    def test_exponential_memoryless(self):
        d = Exponential(2.0)
        for x in (0.0, 0.7, 3.0):
            assert d.inverse_hazard(x) == pytest.approx(0.5)

    def test_lomax_numeric_oracle(self):
        d = Lomax(3.0)
        f = 3.0 * 2.0 ** (-4.0)
        expected = (1 - (1 - 2.0 ** (-3.0))) / f
        assert expected == pytest.approx(2.0 / 3.0)
        assert d.inverse_hazard(1.0) == pytest.approx(expected)

    def test_zero_density_raises(self):
        with pytest.raises(dists.ZeroDensity):
            UniformUnit().inverse_hazard(2.0)


class TestIsMhr:
    def test_uniform_true(self):
        rep = is_mhr(UniformUnit(), 1000)
        assert rep.is_mhr and rep.worst_violation <= 1e-9

    def test_equal_revenue_false(self):
        # inverse hazard equals x, strictly increasing
        rep = is_mhr(EqualRevenue(), 1000)
        assert not rep.is_mhr
        assert rep.worst_violation > 0

    def test_truncated_exponential_true(self):
        rep = is_mhr(truncate(Exponential(1.0), 0.2, 0.9), 10_000)
        assert rep.is_mhr

    def test_lomax_not_mhr(self):
        assert not is_mhr(Lomax(3.0), 1000).is_mhr


class TestTruncate:
    def test_identity(self):
        t = truncate(UniformUnit(), 0.0, 1.0)
        xs = np.linspace(0, 1, 11)
        assert np.allclose(t.cdf(xs), xs)

    def test_uniform_half(self):
        t = truncate(UniformUnit(), 0.5, 1.0)
        assert t.cdf(0.75) == pytest.approx(0.5)

    def test_exponential_numeric_oracle(self):
        t = truncate(Exponential(1.0), 0.0, 2.0)
        expected = numeric_cdf(t, 1.0)
        assert expected == pytest.approx(
            (1 - math.exp(-1)) / (1 - math.exp(-2)), abs=1e-8
        )
        assert t.cdf(1.0) == pytest.approx(expected, abs=1e-8)

    def test_empty_mass(self):
        with pytest.raises(dists.EmptyMass):
            truncate(UniformUnit(), 2.0, 3.0)


class TestMarginalValueDist:
    def test_uniform_types(self):
        m = marginal_value_dist(UniformUnit(), 1.0)
        assert m.cdf(0.3) == pytest.approx(0.3)
        assert m.support == (0.0, 1.0)

    def test_uniform_scaled(self):
        m = marginal_value_dist(UniformUnit(), 2.0)
        assert m.support == (0.0, 2.0)
        assert m.cdf(1.0) == pytest.approx(0.5)

    def test_matches_impatience_cdf(self):
        types = ImpatienceExponential(10.0)
        m = marginal_value_dist(types, 1.0)
        assert m.cdf(0.1) == pytest.approx(impatience_view(types).cdf(0.1))

    def test_monte_carlo_ks(self):
        types = ImpatienceExponential(10.0)
        m = marginal_value_dist(types, 1.0)
        rng = np.random.default_rng(7)
        gammas = types.sample(rng, 1_000_000)
        draws = (1.0 - gammas) * 1.0
        ks = stats.kstest(draws, lambda x: np.asarray(m.cdf(x))).statistic
        assert ks < 0.005


class TestSample:
    def test_empty(self):
        assert UniformUnit().sample(np.random.default_rng(0), 0).size == 0

    def test_uniform_mean(self):
        x = UniformUnit().sample(np.random.default_rng(1), 1_000_000)
        assert abs(x.mean() - 0.5) < 0.002

    def test_impatience_exponential_ks(self):
        d = ImpatienceExponential(3.0)
        x = d.sample(np.random.default_rng(2), 1_000_000)
        ks = stats.kstest(x, lambda t: np.asarray(d.cdf(t))).statistic
        assert ks < 0.005

    def test_deterministic(self):
        a = Exponential(2.0).sample(np.random.default_rng(5), 100)
        b = Exponential(2.0).sample(np.random.default_rng(5), 100)
        assert np.array_equal(a, b)


class TestCondExpectAbove:
    def test_uniform_unconditional(self):
        assert UniformUnit().cond_expect_above(0.0) == pytest.approx(0.5)

    def test_uniform_half(self):
        assert UniformUnit().cond_expect_above(0.5) == pytest.approx(0.75)

    def test_impatience_exponential_in_range(self):
        val = ImpatienceExponential(1.0).cond_expect_above(0.5)
        assert 0.5 < val < 1.0
        # independent panel-integration oracle
        d = ImpatienceExponential(1.0)
        xs = np.linspace(0.5, 1.0, 100_001)
        num = np.trapezoid(xs * np.asarray(d.pdf(xs)), xs)
        assert val == pytest.approx(num / (1 - d.cdf(0.5)), rel=1e-6)

    def test_empty_tail(self):
        with pytest.raises(dists.EmptyTail):
            UniformUnit().cond_expect_above(1.0)


class TestProperties:
    @pytest.mark.parametrize("d", APP_E_TYPE_DISTS)
    def test_reflection(self, d):
        view = impatience_view(d)
        xs = np.linspace(0.0, 1.0, 201)
        assert np.allclose(
            np.asarray(view.cdf(xs)) + np.asarray(d.cdf(1.0 - xs)), 1.0, atol=1e-9
        )

    @pytest.mark.parametrize("d", MHR_KINDS)
    def test_truncation_preserves_mhr(self, d):
        rng = np.random.default_rng(42)
        lo, hi = d.support
        if math.isinf(hi):
            hi = float(d.quantile(0.999))
        for _ in range(20):
            a, b = np.sort(rng.uniform(lo, hi, size=2))
            if float(d.cdf(b)) - float(d.cdf(a)) < 1e-3:
                continue
            assert is_mhr(truncate(d, a, b), 2000).is_mhr

    @pytest.mark.parametrize("d", MHR_KINDS)
    @pytest.mark.parametrize("c", [0.1, 2.0, 7.0])
    def test_scaling_preserves_mhr(self, d, c):
        assert is_mhr(Scaled(d, c), 2000).is_mhr

    @pytest.mark.parametrize("d", APP_E_TYPE_DISTS)
    def test_marginal_value_inherits_mhr(self, d):
        assert is_mhr(impatience_view(d), 2000).is_mhr
        assert is_mhr(marginal_value_dist(d, 1.0), 2000).is_mhr

    @pytest.mark.parametrize("d", CONTINUOUS_KINDS)
    def test_quantile_roundtrip(self, d):
        us = np.linspace(0.005, 0.995, 100)
        xs = np.asarray(d.quantile(us))
        assert np.allclose(np.asarray(d.cdf(xs)), us, atol=1e-6)
        # and quantile(cdf(x)) = x on interior points
        back = np.asarray(d.quantile(np.asarray(d.cdf(xs))))
        assert np.allclose(back, xs, atol=1e-6, rtol=1e-6)

    def test_equal_revenue_identity(self):
        d = EqualRevenue()
        for p in [1.0, 1.5, 4.0, 100.0, 1e6]:
            assert p * (1.0 - d.cdf(p)) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(
        lam=st.floats(0.2, 20.0),
        x=st.floats(0.0, 1.0),
    )
    def test_reflection_hypothesis(self, lam, x):
        d = ImpatienceExponential(lam)
        view = impatience_view(d)
        assert float(view.cdf(x)) + float(d.cdf(1.0 - x)) == pytest.approx(1.0, abs=1e-9)


class TestDiscreteAndEmpirical:
    def test_two_point(self):
        d = TwoPointDiscrete((0.25, 0.75), (0.5, 0.5))
        assert d.cdf(0.5) == 0.5
        assert d.mean() == 0.5
        with pytest.raises(dists.UnsupportedQuery):
            d.pdf(0.5)

    def test_empirical_step_cdf(self):
        d = Empirical([1.0, 2.0, 2.0, 4.0])
        assert d.cdf(2.0) == pytest.approx(0.75)
        assert d.cdf(0.5) == 0.0
        assert d.quantile(0.5) == 2.0
        with pytest.raises(dists.UnsupportedQuery):
            d.pdf(1.0)

    def test_flattened_tau_one_matches_base(self):
        flat = FlattenedTailImpatienceExponential(10.0, 1.0)
        base = ImpatienceExponential(10.0)
        xs = np.linspace(0, 1, 101)
        assert np.allclose(np.asarray(flat.cdf(xs)), np.asarray(base.cdf(xs)), atol=1e-9)
