"""Distribution-kernel oracle tests.

Expected values are either closed forms evaluated by independent means
(mpmath / scipy.integrate quadrature) or algebraic identities.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from dynjoint import DomainError
from dynjoint.kernels import (cauchy_log_density, half_cauchy_log_density,
                              inverse_gamma_log_density, lkj_log_density,
                              mvnormal_log_density, normal_log_density,
                              student_t_log_density)


class TestNormal:
    def test_standard_normal_at_zero(self):
        # -0.5 * ln(2*pi) via mpmath oracle: -0.91893853320467274
        assert normal_log_density(0.0, 0.0, 1.0) == pytest.approx(
            -0.9189385332046727, abs=1e-12)

    def test_zero_exponent_any_scale(self):
        for m, s in [(3.2, 0.5), (-1.0, 7.0), (0.0, 0.01)]:
            assert normal_log_density(m, m, s) == pytest.approx(
                -np.log(s) - 0.5 * np.log(2 * np.pi), rel=1e-14)

    @given(y=st.floats(-30, 30), mean=st.floats(-5, 5),
           sd=st.floats(0.01, 50))
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, y, mean, sd):
        left = normal_log_density(y, mean, sd)
        right = normal_log_density(2 * mean - y, mean, sd)
        assert left == pytest.approx(right, rel=1e-12, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            normal_log_density(0.0, 0.0, 0.0)
        with pytest.raises(DomainError):
            normal_log_density(0.0, 0.0, -1.0)


class TestInverseGamma:
    def test_direct_point(self):
        # v=1, shape=1, rate=1: log f = -1 - lgamma(1) = -1
        assert inverse_gamma_log_density(1.0, 1.0, 1.0) == pytest.approx(-1.0, abs=1e-13)

    def test_mode_at_rate_over_shape_plus_one(self):
        shape, rate = 2.5, 3.0
        mode = rate / (shape + 1.0)
        grid = np.linspace(mode * 0.5, mode * 1.5, 501)
        dens = inverse_gamma_log_density(grid, shape, rate)
        assert grid[np.argmax(dens)] == pytest.approx(mode, rel=5e-3)

    @pytest.mark.parametrize("shape,rate", [(0.5, 0.5), (2.0, 2.0), (5.0, 1.5)])
    def test_integrates_to_one(self, shape, rate):
        total, err = integrate.quad(
            lambda v: np.exp(inverse_gamma_log_density(v, shape, rate)),
            0.0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_domain(self):
        for bad in [(0.0, 1, 1), (1, 0.0, 1), (1, 1, -2.0)]:
            with pytest.raises(DomainError):
                inverse_gamma_log_density(*bad)


class TestStudentT:
    def test_normal_limit(self):
        # df = 100 stays within 5e-3 of the Normal density for |z| <= 3
        # (on the log scale the tails still differ by ~0.15 at z = 3)
        for z in np.linspace(-3, 3, 25):
            t_val = student_t_log_density(z, 0.0, 1.0, 100.0)
            n_val = normal_log_density(z, 0.0, 1.0)
            assert abs(np.exp(t_val) - np.exp(n_val)) < 5e-3
        center = np.linspace(-1, 1, 21)
        log_diff = np.abs(student_t_log_density(center, 0.0, 1.0, 100.0)
                          - normal_log_density(center, 0.0, 1.0))
        assert log_diff.max() < 5e-3

    @pytest.mark.parametrize("df", [2.5, 4.0, 10.0, 30.0])
    def test_scale_mixture_identity(self, df):
        # f_t(y) must equal int Normal(y; loc, w sigma^2) IG(w; df/2, df/2) dw
        loc, scale = 0.3, 1.7
        for y in [-2.0, 0.0, 0.5, 3.0]:
            def integrand(w):
                return np.exp(normal_log_density(y, loc, np.sqrt(w) * scale)
                              + inverse_gamma_log_density(w, df / 2, df / 2))
            mix, err = integrate.quad(integrand, 0.0, np.inf, limit=400)
            direct = np.exp(student_t_log_density(y, loc, scale, df))
            assert abs(mix - direct) < 1e-6

    def test_symmetry_about_loc(self):
        loc = 1.2
        for y in [0.0, 0.4, 2.9]:
            a = student_t_log_density(loc + y, loc, 0.8, 5.0)
            b = student_t_log_density(loc - y, loc, 0.8, 5.0)
            assert a == pytest.approx(b, rel=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            student_t_log_density(0.0, 0.0, -1.0, 5.0)
        with pytest.raises(DomainError):
            student_t_log_density(0.0, 0.0, 1.0, 2.0)

    def test_matches_scipy(self):
        val = student_t_log_density(1.1, 0.2, 2.0, 7.0)
        assert val == pytest.approx(stats.t.logpdf(1.1, 7.0, loc=0.2, scale=2.0),
                                    rel=1e-12)


class TestCauchy:
    def test_mode_density(self):
        # alpha_1 = 0 under Cauchy(0, 20): -ln(20 pi)
        assert cauchy_log_density(0.0, 20.0) == pytest.approx(
            -np.log(20 * np.pi), rel=1e-14)

    def test_half_cauchy_is_doubled(self):
        assert half_cauchy_log_density(2.5, 5.0) == pytest.approx(
            np.log(2) + cauchy_log_density(2.5, 5.0), rel=1e-14)
        with pytest.raises(DomainError):
            half_cauchy_log_density(-1.0, 5.0)

    def test_matches_scipy(self):
        assert cauchy_log_density(3.0, 5.0) == pytest.approx(
            stats.cauchy.logpdf(3.0, scale=5.0), rel=1e-12)


class TestMVNormal:
    def test_matches_scipy(self):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        chol = np.linalg.cholesky(cov)
        y = np.array([0.3, -1.2])
        assert mvnormal_log_density(y, chol) == pytest.approx(
            stats.multivariate_normal.logpdf(y, mean=np.zeros(2), cov=cov),
            rel=1e-12)

    def test_batched(self):
        chol = np.linalg.cholesky(np.array([[1.0, 0.2], [0.2, 0.5]]))
        ys = np.random.default_rng(0).normal(size=(7, 2))
        vals = mvnormal_log_density(ys, chol)
        singles = [mvnormal_log_density(y, chol) for y in ys]
        np.testing.assert_allclose(vals, singles, rtol=1e-13)


class TestLKJ:
    def test_identity_q2_equals_normalizer(self):
        # density of rho under LKJ(eta) is (1-rho^2)^(eta-1)/(2^(2eta-1) B(eta,eta));
        # at the identity matrix the kernel is 1, so only the constant remains
        from scipy.special import betaln
        eta = 2.0
        expected = -(2 * eta - 1) * np.log(2.0) - betaln(eta, eta)
        assert lkj_log_density(np.eye(2), eta) == pytest.approx(expected, rel=1e-13)

    def test_integrates_to_one_q2(self):
        eta = 2.0

        def dens(rho):
            corr = np.array([[1.0, rho], [rho, 1.0]])
            return np.exp(lkj_log_density(corr, eta))

        total, _ = integrate.quad(dens, -1, 1, limit=200)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_q1_is_zero(self):
        assert lkj_log_density(np.eye(1), 2.0) == 0.0

    def test_rejects_bad_matrix(self):
        with pytest.raises(DomainError):
            lkj_log_density(np.array([[1.0, 2.0], [2.0, 1.0]]), 2.0)
        with pytest.raises(DomainError):
            lkj_log_density(np.array([[2.0, 0.0], [0.0, 1.0]]), 2.0)
