"""Censoring-aware accuracy metrics for dynamic predictions.

Discrimination and calibration are estimated with inverse probability of
censoring weighting (IPCW).  The censoring survival function G is the
Kaplan-Meier estimator with the event indicator reversed; weights use the
left-limit G(t-) so ties between events and censorings cannot zero a
weight.  All metrics evaluate one vector of predictions, so mapping them
over posterior draws yields their MC distributions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError


@dataclass
class CensoringEstimate:
    """Product-limit estimate of the censoring survival function.

    ``times`` are the ordered distinct censoring times, ``values`` the
    estimate just after each time; evaluation is right-continuous with
    ``left_limit`` giving G(t-).
    """

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, float)
        idx = np.searchsorted(self.times, t, side="right")
        vals = np.concatenate([[1.0], self.values])
        return vals[idx]

    def left_limit(self, t):
        t = np.asarray(t, float)
        idx = np.searchsorted(self.times, t, side="left")
        vals = np.concatenate([[1.0], self.values])
        return vals[idx]


def censoring_km(event_time, event) -> CensoringEstimate:
    """Kaplan-Meier with censorings treated as the events of interest."""
    t = np.asarray(event_time, float)
    e = np.asarray(event, int)
    order = np.argsort(t, kind="stable")
    t_sorted = t[order]
    cens_sorted = 1 - e[order]
    n = t.size
    distinct, start = np.unique(t_sorted, return_index=True)
    values = []
    surv = 1.0
    for k, u in enumerate(distinct):
        stop = start[k + 1] if k + 1 < distinct.size else n
        d = cens_sorted[start[k]:stop].sum()
        at_risk = n - start[k]
        if d:
            surv *= 1.0 - d / at_risk
        values.append(surv)
    return CensoringEstimate(times=distinct, values=np.asarray(values))


def km_event_prob(event_time, event, horizon_time) -> float:
    """1 - KM survival of the event process at ``horizon_time``."""
    t = np.asarray(event_time, float)
    e = np.asarray(event, int)
    order = np.argsort(t, kind="stable")
    t_sorted, e_sorted = t[order], e[order]
    n = t.size
    surv = 1.0
    distinct, start = np.unique(t_sorted, return_index=True)
    for k, u in enumerate(distinct):
        if u > horizon_time:
            break
        stop = start[k + 1] if k + 1 < distinct.size else n
        d = e_sorted[start[k]:stop].sum()
        at_risk = n - start[k]
        if d:
            surv *= 1.0 - d / at_risk
    return 1.0 - surv


def _at_risk_views(pi, event_time, event, s):
    pi = np.asarray(pi, float)
    t = np.asarray(event_time, float)
    e = np.asarray(event, int)
    keep = t > s
    return pi[keep], t[keep], e[keep]


def auc_ipcw(pi, event_time, event, s, u, cens: CensoringEstimate) -> float:
    """IPCW time-dependent AUC over (s, s+u].

    Cases are subjects with an observed event in the window, weighted by
    1/G(T-); controls survive beyond s+u, weighted by 1/G(s+u).  Prediction
    ties count one half.
    """
    pi, t, e = _at_risk_views(pi, event_time, event, s)
    case = (t > s) & (t <= s + u) & (e == 1)
    control = t > s + u
    if not case.any() or not control.any():
        raise MetricUndefinedError(
            f"AUC undefined at s={s}, u={u}: {case.sum()} cases, "
            f"{control.sum()} controls")
    w_case = 1.0 / cens.left_limit(t[case])
    w_control = np.full(control.sum(), 1.0 / max(float(cens(s + u)), 1e-300))
    pi_case = pi[case]
    pi_control = pi[control]
    greater = (pi_case[:, None] > pi_control[None, :]).astype(float)
    ties = (pi_case[:, None] == pi_control[None, :]).astype(float)
    weight = w_case[:, None] * w_control[None, :]
    numer = np.sum(weight * (greater + 0.5 * ties))
    denom = np.sum(w_case) * np.sum(w_control)
    return float(numer / denom)


def brier_ipcw(pi, event_time, event, s, u, cens: CensoringEstimate) -> float:
    """IPCW Brier score over (s, s+u], averaged over the at-risk subjects."""
    pi, t, e = _at_risk_views(pi, event_time, event, s)
    if pi.size == 0:
        raise MetricUndefinedError(f"no subjects at risk at s={s}")
    case = (t <= s + u) & (e == 1)
    control = t > s + u
    w = np.zeros(pi.size)
    w[case] = 1.0 / cens.left_limit(t[case])
    w[control] = 1.0 / max(float(cens(s + u)), 1e-300)
    outcome = case.astype(float)
    return float(np.mean(w * (outcome - pi) ** 2))


def marginal_failure_prob(event_time, event, s, u,
                          cens: CensoringEstimate) -> float:
    """IPCW estimate of the covariate-free failure probability over (s, s+u]."""
    t = np.asarray(event_time, float)
    e = np.asarray(event, int)
    keep = t > s
    t, e = t[keep], e[keep]
    if t.size == 0:
        raise MetricUndefinedError(f"no subjects at risk at s={s}")
    case = (t <= s + u) & (e == 1)
    w = 1.0 / cens.left_limit(t[case])
    return float(np.sum(w) / t.size)


def r2_criterion(pi, event_time, event, s, u, cens: CensoringEstimate) -> float:
    """1 - BS(model)/BS(reference); the reference predicts the marginal risk.

    Negative values indicate doing worse than ignoring the subject data.
    """
    pi0 = marginal_failure_prob(event_time, event, s, u, cens)
    bs_model = brier_ipcw(pi, event_time, event, s, u, cens)
    n_risk = int(np.sum(np.asarray(event_time) > s))
    bs_ref = brier_ipcw(np.full(n_risk, pi0), event_time, event, s, u, cens)
    if bs_ref == 0.0:
        raise MetricUndefinedError("reference Brier score is zero")
    return float(1.0 - bs_model / bs_ref)


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@dataclass
class CalibrationTable:
    """Decile calibration for one prediction vector."""

    mean_predicted: np.ndarray   # (10,)
    observed: np.ndarray         # (10,) KM event probability at s+u per bin
    slope: float
    intercept: float


def calibration_deciles(pi, event_time, event, s, u) -> CalibrationTable:
    """Bin at-risk subjects by prediction deciles; observe KM risk per bin.

    The slope is the unweighted least-squares slope of observed risk on
    mean predicted risk across the 10 points.
    """
    pi, t, e = _at_risk_views(pi, event_time, event, s)
    if pi.size < 10:
        raise MetricUndefinedError("need at least 10 at-risk subjects")
    if np.unique(pi).size < 10:
        warnings.warn("fewer than 10 distinct prediction values; "
                      "decile bins are degenerate")
    edges = np.quantile(pi, np.linspace(0, 1, 11))
    edges[0], edges[-1] = -np.inf, np.inf
    bins = np.clip(np.searchsorted(edges, pi, side="right") - 1, 0, 9)
    mean_pred = np.zeros(10)
    observed = np.zeros(10)
    for k in range(10):
        members = bins == k
        if not members.any():
            mean_pred[k] = np.nan
            observed[k] = np.nan
            continue
        mean_pred[k] = pi[members].mean()
        observed[k] = km_event_prob(t[members] - s, e[members], u)
    ok = np.isfinite(mean_pred) & np.isfinite(observed)
    xs, ys = mean_pred[ok], observed[ok]
    x_bar, y_bar = xs.mean(), ys.mean()
    denom = np.sum((xs - x_bar) ** 2)
    slope = float(np.sum((xs - x_bar) * (ys - y_bar)) / denom) if denom > 0 else np.nan
    intercept = float(y_bar - slope * x_bar) if np.isfinite(slope) else np.nan
    return CalibrationTable(mean_predicted=mean_pred, observed=observed,
                            slope=slope, intercept=intercept)


# --------------------------------------------------------------------------
# marginal-residual diagnostics
# --------------------------------------------------------------------------

def marginal_residual_qq(values, x_rows, d_rows, alpha, sigma_matrix, sigma):
    """Ordered (theoretical, empirical) quantiles of standardized residuals.

    Residual j is (Y_j - x_j'alpha) / sqrt(d_j' Sigma d_j + sigma^2); the
    theoretical coordinates are standard-Normal quantiles at the usual
    (i - 0.5)/n plotting positions.  Under a Normal-Normal fit to Normal
    data the points hug the identity line; heavy-tailed data bend the ends.
    """
    from scipy.stats import norm

    y = np.asarray(values, float)
    x = np.atleast_2d(np.asarray(x_rows, float))
    d = np.atleast_2d(np.asarray(d_rows, float))
    alpha = np.asarray(alpha, float)
    sig = np.atleast_2d(np.asarray(sigma_matrix, float))
    marg_var = np.einsum("ij,jk,ik->i", d, sig, d) + sigma ** 2
    resid = (y - x @ alpha) / np.sqrt(marg_var)
    empirical = np.sort(resid)
    n = empirical.size
    theoretical = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return theoretical, empirical
