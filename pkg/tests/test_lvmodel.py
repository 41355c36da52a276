import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from lvqmc.fixedpoint import FixedPointOverflow, FxFormat, FxNum
from lvqmc.lvmodel import (
    EnumerationBudgetExceeded,
    FixedStepTables,
    LvModel,
    MonotonicityError,
    PayoffSpec,
    bs_call_price,
    dupire_local_vol,
    euler_step,
    fixed_point_paths,
    implied_vol,
    inverse_euler_step,
    local_vol,
    monotonicity_check,
    payoff_eval,
    price_enumerated,
    price_sampled,
    sn_grid,
    sn_value_raw,
)
from lvqmc.normal import norm_cdf
from lvqmc.prng import PermutationSpec, PrnStream

from conftest import SMALL_LCG, rn_desk_model


def flat(sigma, dt=0.25, n_t=1, proportional=False):
    return LvModel.constant(100.0, sigma, dt * n_t, n_t, proportional)


class TestModel:
    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            LvModel(1.0, (0, 1), ((2.0, 1.0),), ((0, 0, 0),), ((1, 1, 1),))
        with pytest.raises(ValueError, match="times"):
            LvModel(1.0, (0, 1, 1), ((),) * 2, ((0,),) * 2, ((1,),) * 2)
        with pytest.raises(ValueError, match="slope"):
            LvModel(1.0, (0, 1), ((1.0,),), ((0,),), ((1,),))

    def test_rejects_nonpositive_volatility(self):
        with pytest.raises(ValueError, match="not positive"):
            LvModel(1.0, (0, 1), ((1.0,),), ((0.0, 0.0),), ((0.2, -0.1),))
        with pytest.raises(ValueError, match="not positive"):
            LvModel(1.0, (0, 1), ((),), ((-0.1,),), ((5.0,),))

    def test_local_vol(self):
        assert local_vol(flat(20.0), 1, 57.0) == 20.0
        assert local_vol(flat(0.2, proportional=True), 1, 100.0) == pytest.approx(20.0)
        m = LvModel(1.0, (0, 1), ((1.0, 2.0),), ((0, 0, 0),), ((0.1, 0.2, 0.3),))
        # grid points belong to the interval on their right
        assert local_vol(m, 1, 1.0) == 0.2
        assert local_vol(m, 1, 2.0) == 0.3
        assert local_vol(m, 1, 0.999) == 0.1
        with pytest.raises(IndexError):
            local_vol(m, 2, 1.0)


class TestEulerStep:
    def test_examples(self):
        m = flat(20.0)
        assert euler_step(m, 1, 100.0, 1.0) == pytest.approx(110.0)
        assert euler_step(m, 1, 100.0, -1.0) == pytest.approx(90.0)
        assert euler_step(m, 1, 100.0, 0.0) == 100.0
        assert inverse_euler_step(m, 1, 110.0, 1.0) == pytest.approx(100.0)
        assert inverse_euler_step(m, 1, 123.0, 0.0) == 123.0

    @given(st.floats(0.5, 4.0), st.floats(-4.0, 4.0), st.integers(1, 2))
    def test_inverse_round_trip(self, S, w, j):
        m = rn_desk_model()
        assert inverse_euler_step(m, j, euler_step(m, j, S, w), w) == pytest.approx(S, abs=1e-12)

    @given(st.integers(0, 2**11 - 1), st.integers(0, 40))
    def test_fixed_inverse_round_trip(self, s_raw, w_raw):
        fmt = FxFormat(6, 6)
        m = LvModel(2.0, (0, 0.25), ((),), ((0.3,),), ((0.1,),))
        tables = FixedStepTables.build(m, None, fmt)
        S, w = FxNum(s_raw, fmt), FxNum(w_raw, fmt)
        try:
            S1 = euler_step(m, 1, S, w, tables=tables)
        except FixedPointOverflow:
            assume(False)
        assert inverse_euler_step(m, 1, S1, w, tables=tables).raw == s_raw

    def test_fixed_matches_float_within_truncation(self):
        m = rn_desk_model()
        fmt = FxFormat(6, 16)
        for S in np.linspace(0.5, 4, 15):
            for w in np.linspace(-3, 3, 13):
                exact = euler_step(m, 1, float(S), float(w))
                fx = euler_step(m, 1, float(S), float(w), fmt)
                # three truncated products, each under n ulps, plus input encoding
                assert abs(fx.value - exact) < 4 * fmt.n * fmt.resolution


class TestMonotonicity:
    def test_constant_vol_passes(self):
        assert monotonicity_check(flat(20.0, dt=1e4), -8, 8)

    def test_steep_slope_fails(self):
        m = LvModel.constant(100.0, 0.2, 400.0, 1, proportional=True)
        report = monotonicity_check(m, -4, 4)
        assert not report
        assert any("<= 0" in v for v in report.violations)
        with pytest.raises(MonotonicityError):
            inverse_euler_step(m, 1, 50.0, -4.0)

    def test_discontinuity_fails(self):
        m = LvModel(1.0, (0, 1), ((1.0,),), ((0.0, 0.0),), ((0.2, 0.3),))
        report = monotonicity_check(m, -4, 4)
        assert not report and "discontinuous" in report.violations[0]

    def test_desk_models_pass(self):
        assert monotonicity_check(rn_desk_model(), -4, 4)


class TestPayoff:
    def test_examples(self):
        call = PayoffSpec((1.0,), (-100.0,), (None,), (0.0,))
        assert payoff_eval(call, 1, 110.0) == 10.0
        assert payoff_eval(call, 1, 90.0) == 0.0
        capped = PayoffSpec((1.0,), (-100.0,), (5.0,), (0.0,))
        assert payoff_eval(capped, 1, 110.0) == 5.0

    def test_validation(self):
        with pytest.raises(ValueError):
            PayoffSpec((1.0,), (0.0,), (1.0,), (2.0,))
        with pytest.raises(ValueError):
            PayoffSpec((1.0, 1.0), (0.0,), (None,), (None,))

    def test_european_call_pays_last_date_only(self):
        spec = PayoffSpec.european_call(1.0, 3)
        assert [payoff_eval(spec, d, 2.0) for d in (1, 2, 3)] == [0.0, 0.0, 1.0]


class TestFixedTables:
    @given(st.floats(-7.0, 7.0), st.integers(-128, 127))
    def test_threshold_encoding_is_exact_comparison(self, s, raw):
        fmt = FxFormat(4, 4)
        m = LvModel(s + 1.0 if s < 0 else 1.0, (0, 1), ((s,),), ((0.0, 0.0),), ((0.5, 0.5),))
        thr = FixedStepTables.build(m, None, fmt).thresholds[0][0]
        assert (raw >= thr) == (raw / 16 >= s)

    def test_encoding_loss_reported(self):
        m = LvModel(1.03, (0, 1), ((),), ((0.0,),), ((0.2,),))
        t = FixedStepTables.build(m, None, FxFormat(4, 4))
        assert 0 < t.encoding_loss < 1 / 16


class TestSnGrid:
    def test_two_points(self):
        g = sn_grid(-4, 4, 2)
        exact = float(mpmath.ncdf(0) - mpmath.ncdf(-4))
        assert g.probabilities[0] == pytest.approx(exact, abs=1e-15)
        assert g.probabilities[0] == pytest.approx(0.499968, abs=1e-6)
        assert g.probabilities[0] == pytest.approx(g.probabilities[1], abs=1e-15)

    @pytest.mark.parametrize("n", [1, 3, 8, 64])
    def test_symmetry_and_total(self, n):
        g = sn_grid(-4, 4, n)
        p = np.asarray(g.probabilities)
        assert np.allclose(p, p[::-1], atol=1e-16)
        assert math.fsum(p) == pytest.approx(norm_cdf(4.0) - norm_cdf(-4.0), abs=1e-15)
        assert math.fsum(g.normalized().probabilities) == pytest.approx(1.0, abs=1e-15)
        assert g.points[0] == -4 and g.step == pytest.approx(8 / n)


class TestPricing:
    def test_two_term_enumeration(self):
        sigma, dt = 0.3, 0.5
        m = LvModel(1.0, (0, dt), ((),), ((0.0,),), ((sigma,),))
        linear = PayoffSpec((1.0,), (0.0,), (None,), (None,))
        g = sn_grid(-4, 4, 2).normalized()
        x, p = g.points, g.probabilities
        expect = 1.0 + sigma * math.sqrt(dt) * (p[0] * x[0] + p[1] * x[1])
        assert price_enumerated(m, linear, g) == pytest.approx(expect, abs=1e-15)

    def test_fixed_enumeration_uses_encoded_draws(self):
        m = LvModel(1.0, (0, 0.25), ((),), ((0.0,),), ((0.5,),))
        linear = PayoffSpec((1.0,), (0.0,), (None,), (None,))
        fmt = FxFormat(4, 8)
        g = sn_grid(-4, 4, 4).normalized()
        raws = [sn_value_raw(i, g, fmt) for i in range(4)]
        assert [fmt.decode(r) for r in raws] == [-4.0, -2.0, 0.0, 2.0]
        expect = sum(pi * (1.0 + 0.25 * fmt.decode(r)) for pi, r in zip(g.probabilities, raws))
        assert price_enumerated(m, linear, g, fmt) == pytest.approx(expect, abs=1e-12)

    def test_zero_payoff_and_budget(self, icdf_approx):
        m = rn_desk_model()
        zero = PayoffSpec.zero(2)
        assert price_enumerated(m, zero, sn_grid(-4, 4, 8)) == 0.0
        stream = PrnStream(SMALL_LCG, PermutationSpec.default(12), 5, 8)
        assert price_sampled(m, zero, stream, icdf_approx, 16).price == 0.0
        with pytest.raises(EnumerationBudgetExceeded):
            price_enumerated(m, zero, sn_grid(-4, 4, 64), max_patterns=1000)

    def test_degenerate_zero_volatility(self, icdf_approx):
        m = LvModel(1.5, (0, 0.5, 1.0), ((),) * 2, ((0.0,),) * 2, ((0.0,),) * 2)
        call = PayoffSpec.european_call(1.0, 2)
        stream = PrnStream(seed=3, n_dig=16)
        est = price_sampled(m, call, stream, icdf_approx, 64)
        assert est.price == payoff_eval(call, 2, 1.5) and est.std_error == 0.0

    def test_fixed_point_pricing_matches_paths(self, icdf_approx):
        m = rn_desk_model()
        call = PayoffSpec.european_call(2.0, 2)
        stream = PrnStream(SMALL_LCG, PermutationSpec.default(12), 11, 8)
        fmt = FxFormat(6, 10)
        values, traj = fixed_point_paths(m, call, stream, icdf_approx, 32, fmt)
        est = price_sampled(m, call, stream, icdf_approx, 32, fmt)
        assert est.price == pytest.approx(values.mean(), abs=0)
        assert all(len(t) == 3 and t[0] == fmt.encode_raw(2.0) for t in traj)
        flt = price_sampled(m, call, stream, icdf_approx, 32)
        assert abs(flt.price - est.price) < 0.05

    def test_validation(self, icdf_approx):
        stream = PrnStream(seed=1)
        with pytest.raises(ValueError):
            price_sampled(rn_desk_model(), PayoffSpec.zero(3), stream, icdf_approx, 4)
        with pytest.raises(ValueError):
            price_sampled(rn_desk_model(), PayoffSpec.zero(2), stream, icdf_approx, 0)


class TestBlackScholes:
    def test_reference_value(self):
        vol = mpmath.mpf("0.2")
        d1 = vol / 2
        oracle = 100 * (mpmath.ncdf(d1) - mpmath.ncdf(d1 - vol))
        assert bs_call_price(1.0, 100.0, 100.0, 0.2) == pytest.approx(float(oracle), abs=1e-10)
        assert bs_call_price(1.0, 100.0, 100.0, 0.2) == pytest.approx(7.9656, abs=1e-4)

    def test_zero_strike_and_vega(self):
        assert bs_call_price(1.0, 0.0, 42.0, 0.3) == 42.0
        prices = [bs_call_price(1.0, 100.0, 100.0, s) for s in np.linspace(0.05, 1.0, 40)]
        assert all(b > a for a, b in zip(prices, prices[1:]))
        with pytest.raises(ValueError):
            bs_call_price(0.0, 1.0, 1.0, 0.2)

    def test_implied_vol(self):
        v = bs_call_price(1.0, 90.0, 100.0, 0.2)
        assert implied_vol(1.0, 90.0, 100.0, v) == pytest.approx(0.2, abs=1e-8)
        with pytest.raises(ValueError):
            implied_vol(1.0, 90.0, 100.0, 10.0)
        vols = [implied_vol(1.0, 100.0, 100.0, p) for p in np.linspace(2, 30, 15)]
        assert all(b > a for a, b in zip(vols, vols[1:]))

    @pytest.mark.parametrize("K", [80.0, 100.0, 125.0])
    def test_dupire_recovers_proportional_vol(self, K):
        surface = lambda T, k: bs_call_price(T, k, 100.0, 0.2)
        got = dupire_local_vol(surface, 1.0, K, 1e-3, 0.5)
        assert got == pytest.approx(0.2 * K, rel=1e-3)
        assert dupire_local_vol(surface, 1.0, K, -1e-3, -0.5) == got

    def test_dupire_rejects_concave_surface(self):
        with pytest.raises(ValueError):
            dupire_local_vol(lambda T, k: T - k * k, 1.0, 1.0, 0.1, 0.1)
