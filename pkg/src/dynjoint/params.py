"""Constrained parameter state of a joint model.

The random-effect covariance is carried as ``scale_diag`` (positive
standard deviations) together with the lower Cholesky factor of the
correlation matrix, which keeps reconstruction of the full covariance
positive definite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .modelspec import DF_LOWER


@dataclass
class ParameterState:
    """One point in the constrained parameter space.

    ``assoc`` stacks the association coefficients present in the model in
    the order (current value, current slope).  ``b``, ``v``, ``w`` are the
    per-subject random effects and mixing variables; for Normal regimes the
    corresponding mixing variables are identically 1.
    """

    alpha: np.ndarray
    scale_diag: np.ndarray
    corr_chol: np.ndarray
    sigma: float
    weibull_log_rate: float
    weibull_log_shape: float
    surv_coefs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    assoc: np.ndarray = field(default_factory=lambda: np.zeros(2))
    phi: float | None = None
    delta: float | None = None
    b: np.ndarray | None = None       # (n, q)
    v: np.ndarray | None = None       # (n,)
    w: list[np.ndarray] | None = None  # per subject, (m_i,)

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.scale_diag = np.atleast_1d(np.asarray(self.scale_diag, dtype=float))
        self.corr_chol = np.atleast_2d(np.asarray(self.corr_chol, dtype=float))
        self.surv_coefs = np.atleast_1d(np.asarray(self.surv_coefs, dtype=float))
        self.assoc = np.atleast_1d(np.asarray(self.assoc, dtype=float))
        if np.any(self.scale_diag <= 0):
            raise DomainError("random-effect scales must be positive")
        if self.sigma <= 0:
            raise DomainError("error scale sigma must be positive")
        for name, value in (("phi", self.phi), ("delta", self.delta)):
            if value is not None and value <= DF_LOWER:
                raise DomainError(f"{name} must exceed {DF_LOWER}")

    @property
    def q(self) -> int:
        return self.scale_diag.size

    @property
    def sigma_matrix(self) -> np.ndarray:
        """Random-effect covariance R * (L L') * R, symmetric by construction."""
        corr = self.corr_chol @ self.corr_chol.T
        return self.scale_diag[:, None] * corr * self.scale_diag[None, :]

    @property
    def cov_chol(self) -> np.ndarray:
        """Lower Cholesky factor of the random-effect covariance."""
        return self.scale_diag[:, None] * self.corr_chol


def corr_chol_from_matrix(corr: np.ndarray) -> np.ndarray:
    corr = np.asarray(corr, dtype=float)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise DomainError("correlation matrix is not positive definite") from exc
