import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from lvqmc.fixedpoint import FxFormat, FxNum
from lvqmc.icdf import (
    DEFAULT_DOMAIN,
    IcdfApprox,
    IcdfFitError,
    InverseNormalCDF,
    approximation_error,
    eval_icdf,
    fit_cubic,
    fit_icdf,
    icdf_fixed,
    quantize_icdf,
)
from lvqmc.normal import norm_cdf, norm_ppf

mpmath.mp.dps = 30


def mp_quantile(u: float) -> float:
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(u) - 1))


def test_default_fit_meets_tolerance_against_high_precision_oracle(icdf_approx):
    lo, hi = DEFAULT_DOMAIN
    assert icdf_approx.domain == (lo, hi)
    assert 64 <= icdf_approx.n_intervals <= 128
    # dense sample per interval plus the extreme tails, checked with mpmath
    bp = np.asarray(icdf_approx.breakpoints)
    us = np.concatenate([np.linspace(a, b, 9) for a, b in zip(bp[:-1], bp[1:])])
    err = max(abs(eval_icdf(icdf_approx, float(u)) - mp_quantile(float(u))) for u in us)
    assert err <= 1e-6


def test_reported_error_agrees_with_independent_check(icdf_approx):
    dense = approximation_error(icdf_approx)
    assert dense <= 1e-6
    assert icdf_approx.max_err <= icdf_approx.target_err


def test_known_quantiles(icdf_approx):
    assert abs(eval_icdf(icdf_approx, 0.5)) <= 1e-6
    assert abs(eval_icdf(icdf_approx, 0.975) - mp_quantile(0.975)) <= 1e-6
    assert abs(mp_quantile(0.975) - 1.959964) < 1e-6


def test_round_trip_through_normal_cdf(icdf_approx):
    x = np.linspace(-4, 4, 10_000)
    back = eval_icdf(icdf_approx, norm_cdf(x))
    assert np.max(np.abs(back - x)) <= 2e-6


def test_single_cubic_suffices_near_median():
    _, err = fit_cubic(0.45, 0.55)
    assert err <= 1e-6
    assert fit_icdf((0.45, 0.55)).n_intervals == 1


def test_degenerate_and_invalid_domains():
    with pytest.raises(ValueError):
        fit_icdf((0.3, 0.3))
    with pytest.raises(ValueError):
        fit_icdf((0.0, 0.5))
    with pytest.raises(IcdfFitError):
        fit_icdf(max_intervals=8)


def test_greedy_strategy_uses_fewer_pieces(icdf_approx):
    greedy = fit_icdf(strategy="greedy")
    assert greedy.max_err <= 1e-6
    assert greedy.n_intervals <= icdf_approx.n_intervals


def test_outside_domain_clamps(icdf_approx):
    lo, hi = icdf_approx.domain
    assert eval_icdf(icdf_approx, 0.0) == pytest.approx(eval_icdf(icdf_approx, lo), abs=1e-12)
    assert eval_icdf(icdf_approx, 1.0) == pytest.approx(eval_icdf(icdf_approx, hi), abs=1e-9)


def test_serialization_round_trip(tmp_path, icdf_approx):
    path = tmp_path / "icdf.json"
    icdf_approx.save(path)
    again = IcdfApprox.load(path)
    assert again.breakpoints == icdf_approx.breakpoints
    assert again.coeffs == icdf_approx.coeffs


@pytest.mark.parametrize("n_dig,fmt", [(16, FxFormat(4, 16)), (12, FxFormat(4, 12)), (8, FxFormat(4, 4))])
def test_fixed_point_quantile_error_bound(icdf_approx, n_dig, fmt):
    table = quantize_icdf(icdf_approx, n_dig, fmt)
    U = np.arange(1 << n_dig)
    got = fmt.decode(table.all_outputs())
    want = eval_icdf(icdf_approx, U / (1 << n_dig))
    # three truncated products lose under n_dig ulps each; four coefficients under one ulp
    bound = (3 * n_dig + 4) * fmt.resolution + 1e-9
    assert np.max(np.abs(got - want)) <= bound
    mid = icdf_fixed(icdf_approx, FxNum(1 << (n_dig - 1), FxFormat(1, n_dig)), fmt)
    assert abs(mid.value) <= bound


@given(st.integers(0, (1 << 16) - 1))
def test_fixed_evaluation_is_scalar_vector_consistent(u):
    table = quantize_icdf(fit_icdf(), 16, FxFormat(4, 16))
    assert table.evaluate_raw(u) == int(table.evaluate_raw(np.array([u]))[0])


def test_table_structure(icdf_approx):
    table = quantize_icdf(icdf_approx, 8, FxFormat(4, 4))
    assert table.starts[0] == 0
    assert table.thresholds == table.starts[1:]
    assert table.coef_fmt.n_frac == 4 and table.coef_fmt.n_int >= 4
    with pytest.raises(ValueError):
        table.evaluate_raw(256)


def test_scipy_quantile_matches_mpmath():
    for u in (1e-5, 0.01, 0.3, 0.5, 0.77, 0.999):
        assert abs(norm_ppf(u) - mp_quantile(u)) < 1e-12


class TestEstimator:
    def test_transform_and_inverse(self):
        est = InverseNormalCDF().fit()
        X = np.array([[0.025, 0.5], [0.975, 0.8]])
        Z = est.transform(X)
        assert Z.shape == X.shape
        assert abs(Z[1, 0] - 1.959964) < 1e-5
        assert np.allclose(est.inverse_transform(Z), X, atol=1e-6)
        assert est.n_intervals_ == est.approx_.n_intervals

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            InverseNormalCDF().transform([[0.5]])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            InverseNormalCDF().fit().transform([[1.5]])

    def test_params_and_clone(self):
        est = InverseNormalCDF(target_err=1e-5, strategy="greedy")
        assert est.get_params()["target_err"] == 1e-5
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "approx_")

    def test_in_pipeline(self):
        pipe = make_pipeline(InverseNormalCDF(target_err=1e-5))
        out = pipe.fit_transform(np.array([[0.5], [0.8413447460685429]]))
        assert abs(out[0, 0]) < 1e-5 and abs(out[1, 0] - 1.0) < 1e-5

    def test_table(self):
        table = InverseNormalCDF().fit().table(8, FxFormat(4, 4))
        assert table.n_dig == 8 and math.isclose(table.fmt.resolution, 1 / 16)
