"""Hazard / cumulative hazard oracles: Weibull closed forms, additivity."""

import numpy as np
import pytest

from dynjoint import (DomainError, HazardContext, ModelSpec, ParameterState,
                      SubjectRecord, cumulative_hazard,
                      cumulative_hazard_increment, log_hazard, log_survival,
                      make_hazard_context)


def make_params(log_rate=0.0, log_shape=0.0, surv=(), assoc=(0.0, 0.0)):
    return ParameterState(
        alpha=np.array([0.0, 0.0]), scale_diag=np.array([1.0, 1.0]),
        corr_chol=np.eye(2), sigma=1.0,
        weibull_log_rate=log_rate, weibull_log_shape=log_shape,
        surv_coefs=np.asarray(surv), assoc=np.asarray(assoc))


def null_ctx(r=0):
    return HazardContext(covariates=np.zeros(r), marker_const=0.0, marker_slope=0.0)


class TestLogHazard:
    def test_constant_hazard_identity(self):
        params = make_params()
        for t in [0.2, 1.0, 7.5]:
            assert log_hazard(t, null_ctx(), params) == pytest.approx(0.0, abs=1e-14)

    def test_rate_scaling(self):
        params = make_params(log_rate=np.log(2.0))
        assert log_hazard(5.0, null_ctx(), params) == pytest.approx(np.log(2.0))

    def test_link_through_marker_value(self):
        # assoc_value = 1, Y*(t) = alpha_1 constant: symbolic substitution
        alpha1, lam, nu = 0.7, 1.3, 1.8
        params = make_params(np.log(lam), np.log(nu), assoc=(1.0, 0.0))
        ctx = HazardContext(covariates=np.zeros(0), marker_const=alpha1,
                            marker_slope=0.0)
        t = 2.4
        expected = np.log(lam) + np.log(nu) + (nu - 1) * np.log(t) + alpha1
        assert log_hazard(t, ctx, params) == pytest.approx(expected, rel=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            log_hazard(0.0, null_ctx(), make_params())
        with pytest.raises(DomainError):
            log_hazard(-1.0, null_ctx(), make_params())


class TestCumulativeHazard:
    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    @pytest.mark.parametrize("nu", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("T", [0.1, 1.0, 10.0])
    def test_weibull_closed_form(self, lam, nu, T):
        params = make_params(np.log(lam), np.log(nu))
        exact = lam * T ** nu
        got = cumulative_hazard(T, null_ctx(), params)
        assert abs(got - exact) <= 1e-10 * exact

    def test_zero_at_origin(self):
        params = make_params(np.log(2.0), np.log(1.5))
        assert cumulative_hazard(0.0, null_ctx(), params) == 0.0

    def test_split_interval_additivity(self):
        # smooth association factor, unit shape: quadrature near-exact, so
        # H(T) = H(T/2) + int_{T/2}^T h to 1e-9
        params = make_params(np.log(0.8), 0.0, assoc=(0.5, 0.3))
        ctx = HazardContext(covariates=np.zeros(0), marker_const=0.4,
                            marker_slope=0.2)
        T = 3.0
        whole = cumulative_hazard(T, ctx, params)
        first = cumulative_hazard(T / 2, ctx, params)
        second = cumulative_hazard_increment(T / 2, T, ctx, params)
        assert abs(whole - (first + second)) < 1e-9

    def test_more_panels_against_scipy(self):
        from scipy.integrate import quad
        params = make_params(np.log(0.5), np.log(1.7), assoc=(0.8, 0.0))
        ctx = HazardContext(covariates=np.zeros(0), marker_const=-0.2,
                            marker_slope=0.35)

        def h(t):
            return np.exp(log_hazard(t, ctx, params))

        T = 4.0
        exact, _ = quad(h, 0, T, limit=400)
        errs = [abs(cumulative_hazard(T, ctx, params, panels=k) - exact) / exact
                for k in (1, 8, 32)]
        assert errs[-1] < 1e-7
        assert errs[0] < 1e-4 and errs[2] < errs[0]

    def test_monotone_in_T(self):
        params = make_params(np.log(0.6), np.log(1.3), assoc=(0.4, 0.1))
        ctx = HazardContext(covariates=np.zeros(0), marker_const=0.1,
                            marker_slope=0.2)
        ts = np.linspace(0.1, 6.0, 40)
        vals = cumulative_hazard(ts, ctx, params)
        assert np.all(np.diff(vals) > 0)


class TestLogSurvival:
    def test_unit_exponential(self):
        params = make_params(0.0, 0.0)
        assert log_survival(1.0, null_ctx(), params) == pytest.approx(-1.0, rel=1e-12)

    def test_monotone_and_bounded(self):
        params = make_params(np.log(0.7), np.log(1.4), assoc=(0.3, 0.0))
        ctx = HazardContext(covariates=np.zeros(0), marker_const=0.2,
                            marker_slope=0.1)
        ts = np.linspace(0.05, 8.0, 30)
        ls = log_survival(ts, ctx, params)
        assert np.all(np.diff(ls) < 0)
        surv = np.exp(ls)
        assert np.all((surv > 0) & (surv <= 1.0))


class TestHazardContext:
    def test_slope_equals_alpha2_plus_b2(self):
        spec = ModelSpec(regime="nn")
        rec = SubjectRecord("a", [0.5], [1.0], {}, 2.0, 1)
        alpha = np.array([0.9, 0.31])
        b_i = np.array([-0.2, 0.07])
        ctx = make_hazard_context(rec, spec, alpha, b_i)
        assert ctx.marker_slope == alpha[1] + b_i[1]
        assert ctx.marker_derivative(3.3) == alpha[1] + b_i[1]
        assert ctx.marker_value(2.0) == pytest.approx(
            alpha[0] + b_i[0] + 2.0 * (alpha[1] + b_i[1]), rel=1e-14)

    def test_survival_covariates_enter_loglinearly(self):
        spec = ModelSpec(regime="nn", survival_covariates=("age", "flag"))
        rec = SubjectRecord("a", [0.5], [1.0], {"age": 1.5, "flag": 1.0}, 2.0, 1)
        ctx = make_hazard_context(rec, spec, np.zeros(2), np.zeros(2))
        params = make_params(surv=(0.4, -0.3), assoc=(0.0, 0.0))
        got = log_hazard(1.0, ctx, params)
        assert got == pytest.approx(0.4 * 1.5 - 0.3 * 1.0, rel=1e-14)
