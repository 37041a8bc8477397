"""Joint log posterior over unconstrained coordinates, with exact gradient.

Parameter blocks are packed into one flat vector.  Positive parameters are
log-transformed, degrees of freedom are mapped through a scaled logistic
onto their uniform support, the random-effect correlation goes through the
tanh / canonical-partial-correlation Cholesky construction, and random
effects are non-centered: b_i = sqrt(v_i) * R L z_i with z_i standard
Normal.  Every transform contributes its log-Jacobian, so the density is
the exact pushforward of the constrained-scale model.

Differentiation is reverse-mode via jax; the finite-difference oracle in
the test suite pins the gradient at random points for all four regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._jax import jax, jnp
from .design import CohortDesign, stack_cohort
from .errors import NumericalError
from .modelspec import ModelSpec
from .params import ParameterState
from .quadrature import panel_nodes
from .records import SubjectRecord

LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# layout of the unconstrained vector
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamLayout:
    """Slice map of the flat unconstrained vector for one model + cohort."""

    p: int
    q: int
    r: int
    link_value: bool
    link_slope: bool
    t_ranef: bool
    t_error: bool
    n_subjects: int
    n_obs: int
    df_lo: float
    df_hi: float
    lkj_shape: float
    slices: dict
    dim: int
    names: tuple

    @property
    def n_corr(self) -> int:
        return self.q * (self.q - 1) // 2

    def slice_of(self, block: str) -> slice:
        return self.slices[block]


def build_layout(spec: ModelSpec, n_subjects: int, n_obs: int) -> ParamLayout:
    blocks = [
        ("alpha", spec.p),
        ("log_sd", spec.q),
        ("corr_raw", spec.q * (spec.q - 1) // 2),
        ("log_sigma", 1),
        ("phi_raw", 1 if spec.t_ranef else 0),
        ("delta_raw", 1 if spec.t_error else 0),
        ("wb_log_rate", 1),
        ("wb_log_shape", 1),
        ("surv", spec.r),
        ("assoc", spec.n_assoc),
        ("z", n_subjects * spec.q),
        ("log_v", n_subjects if spec.t_ranef else 0),
        ("log_w", n_obs if spec.t_error else 0),
    ]
    slices = {}
    names = []
    offset = 0
    for name, size in blocks:
        slices[name] = slice(offset, offset + size)
        if size == 1:
            names.append(name)
        else:
            names.extend(f"{name}[{k + 1}]" for k in range(size))
        offset += size
    lo, hi = spec.priors.df_bounds
    return ParamLayout(
        p=spec.p, q=spec.q, r=spec.r,
        link_value=spec.link_value, link_slope=spec.link_slope,
        t_ranef=spec.t_ranef, t_error=spec.t_error,
        n_subjects=n_subjects, n_obs=n_obs,
        df_lo=lo, df_hi=hi, lkj_shape=spec.priors.lkj_shape,
        slices=slices, dim=offset, names=tuple(names),
    )


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def _log1m_tanh_sq(y):
    # log(1 - tanh(y)^2), stable for large |y|
    return 2.0 * (math.log(2.0) - y - jax.nn.softplus(-2.0 * y))


def corr_chol_from_raw(raw, q):
    """Lower Cholesky factor of a correlation matrix from q(q-1)/2 reals.

    Returns (L, jac_to_chol, jac_tanh) where the Jacobian pieces are the
    log-determinants of the canonical-partial-correlation-to-Cholesky map
    and of the tanh map.
    """
    if q == 1:
        return jnp.ones((1, 1)), 0.0, 0.0
    z = jnp.tanh(raw)
    jac_tanh = jnp.sum(_log1m_tanh_sq(raw))
    rows = [jnp.zeros(q).at[0].set(1.0)]
    jac_chol = 0.0
    k = 0
    for i in range(1, q):
        row = jnp.zeros(q)
        sumsq = 0.0
        for j in range(i):
            if j > 0:
                jac_chol = jac_chol + 0.5 * jnp.log1p(-sumsq)
            ent = z[k] * jnp.sqrt(1.0 - sumsq)
            row = row.at[j].set(ent)
            sumsq = sumsq + ent * ent
            k += 1
        row = row.at[i].set(jnp.sqrt(1.0 - sumsq))
        rows.append(row)
    return jnp.stack(rows), jac_chol, jac_tanh


def _df_from_raw(raw, lo, hi):
    s = jax.nn.sigmoid(raw)
    df = lo + (hi - lo) * s
    # d df / d raw = (hi-lo) * s * (1-s)
    jac = math.log(hi - lo) - jax.nn.softplus(-raw) - jax.nn.softplus(raw)
    return df, jac


def _cauchy_lpdf(x, scale):
    return -math.log(math.pi * scale) - jnp.log1p((x / scale) ** 2)


def _half_cauchy_lpdf(x, scale):
    return math.log(2.0) + _cauchy_lpdf(x, scale)


def _inv_gamma_lpdf(x, shape, rate):
    return (shape * jnp.log(rate) - jax.scipy.special.gammaln(shape)
            - (shape + 1.0) * jnp.log(x) - rate / x)


# --------------------------------------------------------------------------
# data bundle for the traced functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FitArrays:
    """Cohort tensors the traced density closes over (all jnp, x64)."""

    y: jnp.ndarray
    subj: jnp.ndarray
    x: jnp.ndarray
    d: jnp.ndarray
    x_const: jnp.ndarray
    d_const: jnp.ndarray
    x_tflag: jnp.ndarray
    d_tflag: jnp.ndarray
    c: jnp.ndarray
    event_time: jnp.ndarray
    event: jnp.ndarray
    quad_rho: jnp.ndarray
    quad_w: jnp.ndarray


def fit_arrays(designs: CohortDesign, panels: int = 1) -> FitArrays:
    rho, w = panel_nodes(panels)
    return FitArrays(
        y=jnp.asarray(designs.y),
        subj=jnp.asarray(designs.subj),
        x=jnp.asarray(designs.x),
        d=jnp.asarray(designs.d),
        x_const=jnp.asarray(designs.x_const),
        d_const=jnp.asarray(designs.d_const),
        x_tflag=jnp.asarray(designs.x_tflag),
        d_tflag=jnp.asarray(designs.d_tflag),
        c=jnp.asarray(designs.c),
        event_time=jnp.asarray(designs.event_time),
        event=jnp.asarray(designs.event),
        quad_rho=jnp.asarray(rho),
        quad_w=jnp.asarray(w),
    )


# --------------------------------------------------------------------------
# constrained view of one unconstrained point
# --------------------------------------------------------------------------

def constrain(u, lay: ParamLayout):
    """Named constrained parameters plus reuseable intermediates."""
    sl = lay.slice_of
    alpha = u[sl("alpha")]
    log_sd = u[sl("log_sd")]
    sd = jnp.exp(log_sd)
    corr_raw = u[sl("corr_raw")]
    L, jac_chol, jac_tanh = corr_chol_from_raw(corr_raw, lay.q)
    log_sigma = u[sl("log_sigma")][0]
    sigma = jnp.exp(log_sigma)
    out = {
        "alpha": alpha, "sd": sd, "log_sd": log_sd, "corr_chol": L,
        "jac_corr_chol": jac_chol, "jac_corr_tanh": jac_tanh,
        "sigma": sigma, "log_sigma": log_sigma,
        "wb_log_rate": u[sl("wb_log_rate")][0],
        "wb_log_shape": u[sl("wb_log_shape")][0],
        "surv": u[sl("surv")],
        "assoc": u[sl("assoc")],
    }
    if lay.t_ranef:
        phi, jac_phi = _df_from_raw(u[sl("phi_raw")][0], lay.df_lo, lay.df_hi)
        out["phi"], out["jac_phi"] = phi, jac_phi
    if lay.t_error:
        delta, jac_delta = _df_from_raw(u[sl("delta_raw")][0], lay.df_lo, lay.df_hi)
        out["delta"], out["jac_delta"] = delta, jac_delta
    z = u[sl("z")].reshape(lay.n_subjects, lay.q)
    out["z"] = z
    if lay.t_ranef:
        log_v = u[sl("log_v")]
        out["log_v"] = log_v
        out["v"] = jnp.exp(log_v)
    else:
        out["v"] = jnp.ones(lay.n_subjects)
    if lay.t_error:
        log_w = u[sl("log_w")]
        out["log_w"] = log_w
        out["w"] = jnp.exp(log_w)
    else:
        out["w"] = jnp.ones(lay.n_obs)
    # b_i = sqrt(v_i) * (R L) z_i
    scale_chol = sd[:, None] * L
    out["scale_chol"] = scale_chol
    out["b"] = jnp.sqrt(out["v"])[:, None] * (z @ scale_chol.T)
    return out


def _assoc_coefs(cp, lay: ParamLayout):
    assoc = cp["assoc"]
    if lay.link_value and lay.link_slope:
        return assoc[0], assoc[1]
    if lay.link_value:
        return assoc[0], 0.0
    return 0.0, assoc[0]


# --------------------------------------------------------------------------
# the five density components (traced)
# --------------------------------------------------------------------------

def _component_longitudinal(cp, arr: FitArrays):
    mu = arr.x @ cp["alpha"] + jnp.sum(arr.d * cp["b"][arr.subj], axis=1)
    var = cp["w"] * cp["sigma"] ** 2
    resid = arr.y - mu
    return jnp.sum(-0.5 * (LOG_2PI + jnp.log(var)) - 0.5 * resid ** 2 / var)


def _marker_line(cp, arr: FitArrays):
    """Per-subject marker line Y*(t) = a + b t under current parameters."""
    a = arr.x_const @ cp["alpha"] + jnp.sum(arr.d_const * cp["b"], axis=1)
    b = jnp.dot(arr.x_tflag, cp["alpha"]) + cp["b"] @ arr.d_tflag
    return a, b


def _component_survival(cp, arr: FitArrays, lay: ParamLayout):
    wlr, wls = cp["wb_log_rate"], cp["wb_log_shape"]
    shape = jnp.exp(wls)
    rate = jnp.exp(wlr)
    a_mark, b_mark = _marker_line(cp, arr)
    eta_v, eta_s = _assoc_coefs(cp, lay)
    cov_lin = arr.c @ cp["surv"] if lay.r else jnp.zeros(lay.n_subjects)
    const = cov_lin + eta_v * a_mark + eta_s * b_mark
    lin = eta_v * b_mark
    T = arr.event_time
    log_h = wlr + wls + (shape - 1.0) * jnp.log(T) + const + lin * T
    t_nodes = T[:, None] * arr.quad_rho[None, :] ** (1.0 / shape)
    cum = rate * T ** shape * jnp.sum(
        arr.quad_w[None, :] * jnp.exp(const[:, None] + lin[:, None] * t_nodes), axis=1)
    return jnp.sum(arr.event * log_h - cum)


def _component_latent_prior(cp, lay: ParamLayout):
    """Centered-scale latent prior: MVN(b; 0, v Sigma) + mixing densities."""
    v = cp["v"]
    scale_chol = cp["scale_chol"]
    # solve L_scale s = b_i  =>  s = sqrt(v) z exactly, but evaluate from b
    sol = jax.scipy.linalg.solve_triangular(scale_chol, cp["b"].T, lower=True).T
    quad = jnp.sum(sol ** 2, axis=1) / v
    log_det = jnp.sum(jnp.log(jnp.diag(scale_chol)))
    total = jnp.sum(-0.5 * lay.q * (LOG_2PI + jnp.log(v)) - log_det - 0.5 * quad)
    if lay.t_ranef:
        total = total + jnp.sum(_inv_gamma_lpdf(v, cp["phi"] / 2.0, cp["phi"] / 2.0))
    if lay.t_error:
        total = total + jnp.sum(_inv_gamma_lpdf(cp["w"], cp["delta"] / 2.0, cp["delta"] / 2.0))
    return total


def _lkj_chol_normalizer(q, shape):
    """Exact log normalizing constant of the LKJ density for q <= 2, else 0."""
    if q == 2:
        return -(2.0 * shape - 1.0) * math.log(2.0) - (
            math.lgamma(shape) * 2.0 - math.lgamma(2.0 * shape))
    return 0.0


def _component_prior(cp, lay: ParamLayout, spec_priors):
    pr = spec_priors
    alpha = cp["alpha"]
    total = _cauchy_lpdf(alpha[0], pr.alpha_intercept_scale)
    if lay.p > 1:
        total = total + jnp.sum(_cauchy_lpdf(alpha[1:], pr.alpha_scale))
    total = total + jnp.sum(_half_cauchy_lpdf(cp["sd"], pr.ranef_sd_scale))
    # LKJ density of the correlation matrix itself (normalized for q <= 2)
    if lay.q > 1:
        log_det_corr = 2.0 * jnp.sum(jnp.log(jnp.diag(cp["corr_chol"])[1:]))
        total = total + (lay.lkj_shape - 1.0) * log_det_corr
        total = total + _lkj_chol_normalizer(lay.q, lay.lkj_shape)
    total = total + _half_cauchy_lpdf(cp["sigma"], pr.sigma_scale)
    span = lay.df_hi - lay.df_lo
    if lay.t_ranef:
        total = total - math.log(span)
    if lay.t_error:
        total = total - math.log(span)
    total = total + _cauchy_lpdf(cp["wb_log_rate"], pr.survival_scale)
    total = total + _cauchy_lpdf(cp["wb_log_shape"], pr.survival_scale)
    if lay.r:
        total = total + jnp.sum(_cauchy_lpdf(cp["surv"], pr.survival_scale))
    total = total + jnp.sum(_cauchy_lpdf(cp["assoc"], pr.survival_scale))
    return total


def _component_jacobian(cp, lay: ParamLayout):
    """All log-Jacobians, including the z -> b change of variables."""
    total = jnp.sum(cp["log_sd"]) + cp["log_sigma"]
    if lay.q > 1:
        # d Omega / d L (free entries) plus the CPC construction and tanh maps
        diag = jnp.diag(cp["corr_chol"])
        omega_from_chol = jnp.sum(
            (lay.q - jnp.arange(2, lay.q + 1, dtype=jnp.float64))
            * jnp.log(diag[1:]))
        total = total + omega_from_chol + cp["jac_corr_chol"] + cp["jac_corr_tanh"]
    if lay.t_ranef:
        total = total + cp["jac_phi"] + jnp.sum(cp["log_v"])
    if lay.t_error:
        total = total + cp["jac_delta"] + jnp.sum(cp["log_w"])
    # z -> b: det(sqrt(v_i) R L) per subject
    log_det_chol = jnp.sum(jnp.log(jnp.diag(cp["scale_chol"])))
    total = total + lay.n_subjects * log_det_chol
    if lay.t_ranef:
        total = total + 0.5 * lay.q * jnp.sum(cp["log_v"])
    return total


def _log_posterior_parts(u, lay: ParamLayout, arr: FitArrays, spec_priors,
                         prior_only: bool):
    cp = constrain(u, lay)
    parts = {
        "longitudinal": (jnp.asarray(0.0) if prior_only
                         else _component_longitudinal(cp, arr)),
        "survival": (jnp.asarray(0.0) if prior_only
                     else _component_survival(cp, arr, lay)),
        "latent_prior": (_component_latent_prior(cp, lay)
                         if lay.n_subjects else jnp.asarray(0.0)),
        "prior": _component_prior(cp, lay, spec_priors),
        "jacobian": _component_jacobian(cp, lay),
    }
    return parts


# --------------------------------------------------------------------------
# public target
# --------------------------------------------------------------------------

@dataclass
class TargetDensity:
    """Callable bundle: value, value-and-gradient, parts and constrain maps."""

    spec: ModelSpec
    layout: ParamLayout
    arrays: FitArrays
    designs: CohortDesign | None
    prior_only: bool = False

    def __post_init__(self):
        lay, arr, priors, po = (self.layout, self.arrays, self.spec.priors,
                                self.prior_only)

        def _total(u):
            parts = _log_posterior_parts(u, lay, arr, priors, po)
            return (parts["longitudinal"] + parts["survival"]
                    + parts["latent_prior"] + parts["prior"] + parts["jacobian"])

        self._logpdf = jax.jit(_total)
        self._raw_vg = jax.value_and_grad(_total)   # traceable, for the sampler
        self._value_and_grad = jax.jit(self._raw_vg)
        self._parts = jax.jit(partial(_log_posterior_parts, lay=lay, arr=arr,
                                      spec_priors=priors, prior_only=po))
        self._constrain = jax.jit(partial(constrain, lay=lay))

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def coordinate_names(self) -> tuple:
        return self.layout.names

    def logpdf(self, u) -> float:
        return float(self._logpdf(jnp.asarray(u)))

    def value_and_grad(self, u):
        value, grad = self._value_and_grad(jnp.asarray(u))
        return float(value), np.asarray(grad)

    def gradient(self, u) -> np.ndarray:
        """Exact gradient; raises naming the first non-finite coordinate."""
        _, grad = self.value_and_grad(u)
        if not np.all(np.isfinite(grad)):
            bad = int(np.flatnonzero(~np.isfinite(grad))[0])
            raise NumericalError(
                f"non-finite gradient component for coordinate {self.layout.names[bad]!r}")
        return grad

    def parts(self, u) -> dict:
        return {k: float(v) for k, v in self._parts(jnp.asarray(u)).items()}

    def constrain_point(self, u) -> dict:
        cp = self._constrain(jnp.asarray(u))
        return {k: np.asarray(v) for k, v in cp.items()}

    def parameter_state(self, u) -> ParameterState:
        cp = self.constrain_point(u)
        n = self.layout.n_subjects
        w_flat = cp["w"]
        w_per_subject = None
        if self.designs is not None and n:
            w_per_subject = [w_flat[self.designs.subj == i] for i in range(n)]
        return ParameterState(
            alpha=cp["alpha"], scale_diag=cp["sd"], corr_chol=cp["corr_chol"],
            sigma=float(cp["sigma"]),
            weibull_log_rate=float(cp["wb_log_rate"]),
            weibull_log_shape=float(cp["wb_log_shape"]),
            surv_coefs=cp["surv"], assoc=cp["assoc"],
            phi=float(cp["phi"]) if "phi" in cp else None,
            delta=float(cp["delta"]) if "delta" in cp else None,
            b=cp["b"] if n else None,
            v=cp["v"] if n else None,
            w=w_per_subject,
        )


def build_target(records: list[SubjectRecord], spec: ModelSpec,
                 panels: int = 1) -> TargetDensity:
    designs = stack_cohort(records, spec)
    layout = build_layout(spec, designs.n_subjects, designs.n_obs)
    return TargetDensity(spec=spec, layout=layout,
                         arrays=fit_arrays(designs, panels=panels),
                         designs=designs)


def build_prior_target(spec: ModelSpec) -> TargetDensity:
    """Parameters-only target (no data, no latents): priors + Jacobians."""
    layout = build_layout(spec, 0, 0)
    rho, w = panel_nodes(1)
    empty = FitArrays(
        y=jnp.zeros(0), subj=jnp.zeros(0, dtype=int),
        x=jnp.zeros((0, spec.p)), d=jnp.zeros((0, spec.q)),
        x_const=jnp.zeros((0, spec.p)), d_const=jnp.zeros((0, spec.q)),
        x_tflag=jnp.zeros(spec.p), d_tflag=jnp.zeros(spec.q),
        c=jnp.zeros((0, spec.r)), event_time=jnp.zeros(0), event=jnp.zeros(0),
        quad_rho=jnp.asarray(rho), quad_w=jnp.asarray(w),
    )
    return TargetDensity(spec=spec, layout=layout, arrays=empty,
                         designs=None, prior_only=True)
