import math

import numpy as np
import pytest

from skipprice.dists import ImpatienceExponential, UniformUnit
from skipprice.valuefn import (
    CLinear,
    Insensitive,
    NonMonotone,
    NotDifferentiable,
    PriceSensitivePoly,
    check_shape,
    clinear_build,
    insensitive_projection,
)

FIG2B = PriceSensitivePoly(k=4, p_bar=1.0)


class TestEval:
    def test_anchored_origin(self):
        assert FIG2B.eval(0.0) == 0.0

    def test_no_sale_point(self):
        # 1 - (p - 1)^4 at p = 1
        assert FIG2B.eval(1.0) == pytest.approx(1.0)

    def test_halfway(self):
        assert FIG2B.eval(0.5) == pytest.approx(1.0 - 0.5**4)
        assert FIG2B.eval(0.5) == pytest.approx(0.9375)

    def test_plateau(self):
        assert FIG2B.eval(3.0) == pytest.approx(1.0)

    def test_insensitive_step(self):
        vf = Insensitive(level=2.0, threshold=0.5)
        assert vf.eval(0.4) == 0.0
        assert vf.eval(0.6) == 2.0


class TestDerivative:
    def test_flat_at_plateau(self):
        assert FIG2B.derivative(1.0) == 0.0

    def test_slope_at_origin(self):
        # 4 (1 - p)^3 at p = 0
        assert FIG2B.derivative(0.0) == pytest.approx(4.0)

    def test_clinear_sqrt_slope(self):
        # uniform types give v(p) = sqrt(p); slope 1/(2 sqrt(p))
        vf = clinear_build(1.0, UniformUnit(), 20_000)
        assert vf.derivative(0.25) == pytest.approx(1.0, rel=1e-4)

    def test_insensitive_raises(self):
        with pytest.raises(NotDifferentiable):
            Insensitive(level=1.0).derivative(0.5)


class TestCLinearBuild:
    def test_uniform_gives_sqrt(self):
        vf = clinear_build(1.0, UniformUnit(), 20_000)
        assert vf.eval(0.25) == pytest.approx(0.5, rel=1e-5)
        ps = np.linspace(0.01, 1.0, 50)
        assert np.allclose(np.asarray(vf.eval(ps)), np.sqrt(ps), rtol=1e-4)

    def test_uniform_nosale_price(self):
        vf = clinear_build(1.0, UniformUnit(), 20_000)
        assert vf.p_nosale == pytest.approx(1.0, abs=1e-9)

    def test_zero_price_zero_value(self):
        for dist in (UniformUnit(), ImpatienceExponential(3.0)):
            vf = clinear_build(1.0, dist)
            assert vf.eval(0.0) == 0.0

    def test_consistency_equation(self):
        # c (1 - F(1 - p / v(p))) = v(p) on a price grid
        for dist in (UniformUnit(), ImpatienceExponential(5.0)):
            vf = clinear_build(1.0, dist, 50_000)
            ps = np.linspace(0.02, vf.p_nosale * 0.999, 100)
            vs = np.asarray(vf.eval(ps))
            lhs = 1.0 - np.asarray(dist.cdf(1.0 - ps / vs))
            assert np.allclose(lhs, vs, atol=1e-5)


class TestInsensitiveProjection:
    def test_fig2b_closed_form(self):
        proj = insensitive_projection(FIG2B)
        assert proj.p_star == pytest.approx(1.0 - 4.0 ** (-1.0 / 3.0), abs=1e-6)
        assert proj.v_const == pytest.approx(1.0 - 4.0 ** (-4.0 / 3.0), abs=1e-6)

    def test_sqrt_projection(self):
        vf = clinear_build(1.0, UniformUnit(), 50_000)
        proj = insensitive_projection(vf)
        assert proj.p_star == pytest.approx(0.25, abs=1e-3)
        assert proj.v_const == pytest.approx(0.5, abs=1e-3)
        assert proj.rev_ratio_bound == pytest.approx(0.5, abs=1e-3)

    def test_insensitive_input_raises(self):
        with pytest.raises(NotDifferentiable):
            insensitive_projection(Insensitive(level=1.0))

    def test_buyer_utility_dominance(self):
        proj = insensitive_projection(FIG2B)
        ps = np.linspace(proj.p_star, FIG2B.p_nosale, 200)
        assert np.all(np.asarray(FIG2B.eval(ps)) - ps >= proj.v_const - ps - 1e-12)


class TestShape:
    @pytest.mark.parametrize(
        "vf",
        [
            FIG2B,
            PriceSensitivePoly(k=2, p_bar=0.7),
            clinear_build(1.0, UniformUnit()),
            clinear_build(1.0, ImpatienceExponential(10.0)),
            clinear_build(1.0, ImpatienceExponential(1.0)),
        ],
    )
    def test_monotone_concave(self, vf):
        check_shape(vf, 1000)

    def test_derivative_at_zero_exceeds_one(self):
        for vf in (FIG2B, clinear_build(1.0, UniformUnit())):
            assert vf.derivative(0.0) > 1.0 or math.isinf(vf.derivative(0.0))

    def test_nonmonotone_detection(self):
        bad = CLinear(1.0, UniformUnit(), [0.0, 0.5, 1.0], [0.0, 0.9, 0.5])
        with pytest.raises(NonMonotone):
            check_shape(bad, 100)
