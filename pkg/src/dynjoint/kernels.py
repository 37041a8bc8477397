"""Log-density kernels used by the model, in plain numpy/scipy.

These are the reference implementations: exact formulas with domain
checking.  The sampler evaluates the same expressions through its traced
fast path; tests pin the two against each other and against independent
oracles.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaln, gammaln

from .errors import DomainError

LOG_2PI = float(np.log(2.0 * np.pi))


def normal_log_density(y, mean, sd):
    """Univariate Normal log density; ``sd`` must be positive."""
    y, mean, sd = np.asarray(y, float), np.asarray(mean, float), np.asarray(sd, float)
    if np.any(sd <= 0):
        raise DomainError("normal sd must be > 0")
    z = (y - mean) / sd
    return -0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z


def inverse_gamma_log_density(v, shape, rate):
    """Inverse-Gamma(shape, rate) log density: mode at rate / (shape + 1)."""
    v, shape, rate = np.asarray(v, float), np.asarray(shape, float), np.asarray(rate, float)
    if np.any(v <= 0) or np.any(shape <= 0) or np.any(rate <= 0):
        raise DomainError("inverse-gamma arguments must be positive")
    return shape * np.log(rate) - gammaln(shape) - (shape + 1.0) * np.log(v) - rate / v


def student_t_log_density(y, loc, scale, df):
    """Location-scale Student-t log density.

    Equals the integral over w of Normal(loc, w * scale^2) against
    InverseGamma(df/2, df/2) mixing.  The degrees of freedom are restricted
    to > 2 so the variance exists, matching the model's prior support.
    """
    y, loc, scale, df = (np.asarray(a, float) for a in (y, loc, scale, df))
    if np.any(scale <= 0):
        raise DomainError("t scale must be > 0")
    if np.any(df <= 2.0):
        raise DomainError("t degrees of freedom must exceed 2")
    z = (y - loc) / scale
    return (gammaln((df + 1.0) / 2.0) - gammaln(df / 2.0)
            - 0.5 * np.log(df * np.pi) - np.log(scale)
            - 0.5 * (df + 1.0) * np.log1p(z * z / df))


def cauchy_log_density(y, scale):
    """Zero-centred Cauchy log density."""
    y, scale = np.asarray(y, float), np.asarray(scale, float)
    if np.any(scale <= 0):
        raise DomainError("cauchy scale must be > 0")
    return -np.log(np.pi * scale) - np.log1p((y / scale) ** 2)


def half_cauchy_log_density(y, scale):
    """Cauchy folded onto the positive half line."""
    y = np.asarray(y, float)
    if np.any(y <= 0):
        raise DomainError("half-cauchy support is (0, inf)")
    return np.log(2.0) + cauchy_log_density(y, scale)


def mvnormal_log_density(y, chol_cov):
    """Zero-mean multivariate Normal log density from a Cholesky factor."""
    y = np.atleast_1d(np.asarray(y, float))
    chol = np.atleast_2d(np.asarray(chol_cov, float))
    q = y.shape[-1]
    diag = np.diagonal(chol)
    if np.any(diag <= 0):
        raise DomainError("cholesky factor must have positive diagonal")
    sol = solve_triangular(chol, y.T, lower=True).T
    return -0.5 * q * LOG_2PI - np.sum(np.log(diag)) - 0.5 * np.sum(sol * sol, axis=-1)


def lkj_log_density(corr, shape):
    """LKJ log density of a correlation matrix, normalized for q <= 2.

    For q = 1 the density is a point mass at [[1.]] (log density 0).  For
    q = 2 the implied correlation has density
    (1 - rho^2)^(shape-1) / (2^(2*shape-1) * B(shape, shape)).  Larger
    dimensions are supported unnormalized (constant offset only), which is
    all posterior sampling requires.
    """
    corr = np.atleast_2d(np.asarray(corr, float))
    if shape <= 0:
        raise DomainError("lkj shape must be > 0")
    q = corr.shape[0]
    if not np.allclose(np.diagonal(corr), 1.0, atol=1e-10):
        raise DomainError("correlation matrix must have unit diagonal")
    sign, logdet = np.linalg.slogdet(corr)
    if sign <= 0:
        raise DomainError("correlation matrix must be positive definite")
    unnorm = (shape - 1.0) * logdet
    if q == 1:
        return 0.0
    if q == 2:
        return unnorm - (2.0 * shape - 1.0) * np.log(2.0) - betaln(shape, shape)
    return unnorm


def uniform_log_density(y, lower, upper):
    y = np.asarray(y, float)
    out = np.where((y >= lower) & (y <= upper), -np.log(upper - lower), -np.inf)
    return out if out.ndim else float(out)
