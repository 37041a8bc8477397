"""Dynamic prediction of conditional failure probability for new subjects.

For every retained (optionally thinned) posterior draw of the parameters,
the subject's latent variables are sampled from their conditional given
the measurements up to the landmark and survival to the landmark (a short
NUTS run on the latent block with the parameters held fixed, one chain per
draw, all chains batched through ``vmap``).  The conditional failure
probability over (s, s+u] is then 1 - exp(-(H(s+u) - H(s))) for each draw,
accumulated over consecutive horizon intervals so the curve is nondecreasing
in the horizon by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._jax import jax, jnp
from .design import survival_row, term_matrix, time_indicator
from .errors import DomainError, NumericalError
from .modelspec import ModelSpec
from .nuts import run_chain
from .quadrature import panel_nodes
from .records import NewcomerData
from .sampler import PosteriorDraws

LOG_2PI = float(np.log(2.0 * np.pi))
DEFAULT_THIN = 8
DEFAULT_LATENT_WARMUP = 200
LATENT_MAX_DEPTH = 8


# --------------------------------------------------------------------------
# structured parameter draws
# --------------------------------------------------------------------------

@dataclass
class ThetaDraws:
    """Posterior parameter draws reshaped for prediction (one row per draw)."""

    spec: ModelSpec
    alpha: np.ndarray          # (D, p)
    cov_chol: np.ndarray       # (D, q, q) Cholesky of the random-effect cov
    sigma: np.ndarray          # (D,)
    wb_log_rate: np.ndarray
    wb_log_shape: np.ndarray
    surv: np.ndarray           # (D, r)
    assoc: np.ndarray          # (D, n_assoc)
    phi: np.ndarray | None = None
    delta: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    def thin(self, step: int) -> "ThetaDraws":
        idx = np.arange(0, self.n_draws, max(int(step), 1))
        return self.take(idx)

    def take(self, idx) -> "ThetaDraws":
        pick = lambda a: None if a is None else a[idx]
        return ThetaDraws(
            spec=self.spec, alpha=self.alpha[idx], cov_chol=self.cov_chol[idx],
            sigma=self.sigma[idx], wb_log_rate=self.wb_log_rate[idx],
            wb_log_shape=self.wb_log_shape[idx], surv=self.surv[idx],
            assoc=self.assoc[idx], phi=pick(self.phi), delta=pick(self.delta))

    def eta_coefs(self):
        """(eta_value, eta_slope) arrays, zero-filled for absent links."""
        d = self.n_draws
        if self.spec.link_value and self.spec.link_slope:
            return self.assoc[:, 0], self.assoc[:, 1]
        if self.spec.link_value:
            return self.assoc[:, 0], np.zeros(d)
        return np.zeros(d), self.assoc[:, 0]

    @staticmethod
    def from_posterior(draws: PosteriorDraws, thin: int = 1) -> "ThetaDraws":
        spec = draws.spec
        idx = np.arange(0, draws.n_draws, max(int(thin), 1))

        def col(name):
            return draws.column(name)[idx]

        alpha = np.column_stack([col(f"alpha[{i + 1}]") for i in range(spec.p)])
        q = spec.q
        sig = np.zeros((idx.size, q, q))
        for i in range(q):
            for j in range(i, q):
                vals = col(f"Sigma[{i + 1},{j + 1}]")
                sig[:, i, j] = vals
                sig[:, j, i] = vals
        cov_chol = np.linalg.cholesky(sig)
        assoc_cols = []
        if spec.link_value:
            assoc_cols.append(col("assoc_value"))
        if spec.link_slope:
            assoc_cols.append(col("assoc_slope"))
        surv = (np.column_stack([col(f"surv[{name}]")
                                 for name in spec.survival_covariates])
                if spec.r else np.zeros((idx.size, 0)))
        return ThetaDraws(
            spec=spec, alpha=alpha, cov_chol=cov_chol, sigma=col("sigma"),
            wb_log_rate=col("weibull_log_rate"),
            wb_log_shape=col("weibull_log_shape"),
            surv=surv, assoc=np.column_stack(assoc_cols),
            phi=col("phi") if spec.t_ranef else None,
            delta=col("delta") if spec.t_error else None)


# --------------------------------------------------------------------------
# latent conditional target (traced per lane)
# --------------------------------------------------------------------------

def _inv_gamma_lpdf(x, shape, rate):
    return (shape * jnp.log(rate) - jax.scipy.special.gammaln(shape)
            - (shape + 1.0) * jnp.log(x) - rate / x)


def _latent_logpdf(u, theta, subj, spec: ModelSpec, quad):
    """Log density of Eq.-style latent conditional on the unconstrained block.

    ``theta`` is one parameter draw (dict of arrays), ``subj`` the padded
    subject data (dict), ``quad`` the (rho, weights) node pair.
    """
    q = spec.q
    z = u[:q]
    pos = q
    if spec.t_ranef:
        log_v = u[pos]
        v = jnp.exp(log_v)
        pos += 1
    else:
        log_v, v = 0.0, 1.0
    if spec.t_error:
        log_w = u[pos:]
        w = jnp.exp(log_w)
    else:
        log_w = jnp.zeros(subj["y"].shape)
        w = jnp.ones(subj["y"].shape)

    b = jnp.sqrt(v) * (theta["cov_chol"] @ z)
    sigma = theta["sigma"]
    mask = subj["mask"]

    mu = subj["x"] @ theta["alpha"] + subj["d"] @ b
    var = w * sigma ** 2
    ll = jnp.sum(mask * (-0.5 * (LOG_2PI + jnp.log(var))
                         - 0.5 * (subj["y"] - mu) ** 2 / var))

    # survival to the landmark: E = 0 at T = s contributes -H(s)
    shape = jnp.exp(theta["wb_log_shape"])
    rate = jnp.exp(theta["wb_log_rate"])
    a_mark = subj["x_const"] @ theta["alpha"] + subj["d_const"] @ b
    b_mark = (jnp.dot(subj["x_tflag"], theta["alpha"])
              + jnp.dot(subj["d_tflag"], b))
    cov_lin = jnp.dot(subj["c"], theta["surv"]) if spec.r else 0.0
    eta_v, eta_s = _eta_traced(theta["assoc"], spec)
    const = cov_lin + eta_v * a_mark + eta_s * b_mark
    lin = eta_v * b_mark
    rho, wq = quad
    s = subj["landmark"]
    t_nodes = s * rho ** (1.0 / shape)
    cum = rate * s ** shape * jnp.sum(wq * jnp.exp(const + lin * t_nodes))
    ll = ll - cum

    # latent priors (non-centered z; mixing variables with exp Jacobians)
    ll = ll + jnp.sum(-0.5 * z ** 2) - 0.5 * q * LOG_2PI
    if spec.t_ranef:
        half_phi = theta["phi"] / 2.0
        ll = ll + _inv_gamma_lpdf(v, half_phi, half_phi) + log_v
    if spec.t_error:
        half_delta = theta["delta"] / 2.0
        ig = _inv_gamma_lpdf(w, half_delta, half_delta) + log_w
        pad_prior = -0.5 * (LOG_2PI + log_w ** 2)
        ll = ll + jnp.sum(mask * ig + (1.0 - mask) * pad_prior)
    return ll


def _eta_traced(assoc, spec: ModelSpec):
    if spec.link_value and spec.link_slope:
        return assoc[0], assoc[1]
    if spec.link_value:
        return assoc[0], 0.0
    return 0.0, assoc[0]


def _latent_dim(spec: ModelSpec, m: int) -> int:
    return spec.q + (1 if spec.t_ranef else 0) + (m if spec.t_error else 0)


def _theta_tree(thetas: ThetaDraws):
    tree = {
        "alpha": jnp.asarray(thetas.alpha),
        "cov_chol": jnp.asarray(thetas.cov_chol),
        "sigma": jnp.asarray(thetas.sigma),
        "wb_log_rate": jnp.asarray(thetas.wb_log_rate),
        "wb_log_shape": jnp.asarray(thetas.wb_log_shape),
        "surv": jnp.asarray(thetas.surv),
        "assoc": jnp.asarray(thetas.assoc),
    }
    if thetas.phi is not None:
        tree["phi"] = jnp.asarray(thetas.phi)
    if thetas.delta is not None:
        tree["delta"] = jnp.asarray(thetas.delta)
    return tree


def _subject_tree(data: NewcomerData, spec: ModelSpec, pad_to: int) -> dict:
    m = data.times.size
    times = np.zeros(pad_to)
    values = np.zeros(pad_to)
    mask = np.zeros(pad_to)
    times[:m] = data.times
    values[:m] = data.values
    mask[:m] = 1.0
    x = term_matrix(spec.fixed_terms, times, data.baseline, "<newcomer>")
    d = term_matrix(spec.random_terms, times, data.baseline, "<newcomer>")
    x_tflag = time_indicator(spec.fixed_terms)
    d_tflag = time_indicator(spec.random_terms)
    from .records import SubjectRecord  # deferred to avoid cycle at import
    rec = SubjectRecord("<newcomer>", data.times if m else np.asarray([1.0]),
                        data.values if m else np.asarray([0.0]),
                        data.baseline, max(data.landmark, 1.0), 0)
    return {
        "y": jnp.asarray(values), "mask": jnp.asarray(mask),
        "x": jnp.asarray(x), "d": jnp.asarray(d),
        "x_const": jnp.asarray(x[0] * (1.0 - x_tflag) if pad_to else np.zeros(spec.p)),
        "d_const": jnp.asarray(d[0] * (1.0 - d_tflag) if pad_to else np.zeros(spec.q)),
        "x_tflag": jnp.asarray(x_tflag), "d_tflag": jnp.asarray(d_tflag),
        "c": jnp.asarray(survival_row(rec, spec)),
        "landmark": jnp.asarray(float(data.landmark)),
    }


# --------------------------------------------------------------------------
# latent sampling
# --------------------------------------------------------------------------

def _run_latent_chains(subj_tree: dict, theta_tree: dict, spec: ModelSpec,
                       m_pad: int, seed: int, warmup: int):
    """One latent draw per parameter draw; lanes batched with vmap."""
    dim = _latent_dim(spec, m_pad)
    quad = tuple(jnp.asarray(a) for a in panel_nodes(1))
    n_draws = int(theta_tree["sigma"].shape[0])

    def lane(theta_slice, key):
        res = run_chain(
            lambda u: jax.value_and_grad(
                lambda uu: _latent_logpdf(uu, theta_slice, subj_tree, spec,
                                          quad))(u),
            key, jnp.zeros(dim), warmup, 1,
            max_depth=LATENT_MAX_DEPTH, target_accept=0.8, adapt_mass=False)
        return res.draws[0], res.diverging[0]

    base = jax.random.PRNGKey(seed)
    keys = jax.vmap(lambda i: jax.random.fold_in(base, i))(jnp.arange(n_draws))
    runner = jax.jit(jax.vmap(lane))
    u_draws, divs = runner(theta_tree, keys)
    return np.asarray(u_draws), np.asarray(divs)


def _unpack_latents(u_draws: np.ndarray, thetas: ThetaDraws, m_pad: int):
    spec = thetas.spec
    q = spec.q
    z = u_draws[:, :q]
    pos = q
    if spec.t_ranef:
        v = np.exp(u_draws[:, pos])
        pos += 1
    else:
        v = np.ones(u_draws.shape[0])
    if spec.t_error:
        w = np.exp(u_draws[:, pos:pos + m_pad])
    else:
        w = np.ones((u_draws.shape[0], m_pad))
    b = np.sqrt(v)[:, None] * np.einsum("dij,dj->di", thetas.cov_chol, z)
    return b, v, w


def sample_newcomer_latents(data: NewcomerData, thetas: ThetaDraws,
                            seed: int = 0,
                            warmup: int = DEFAULT_LATENT_WARMUP):
    """Sample (b, v, w) from the latent conditional, one triple per draw.

    With no measurements and a zero landmark the conditional is the latent
    prior itself; that case is drawn directly and flagged.
    """
    data = data.truncated_to_landmark()
    data.validate()
    spec = thetas.spec
    m = int(data.times.size)
    if m == 0 and data.landmark == 0.0:
        warnings.warn("no data before the landmark: sampling latents from the prior")
        return _prior_latents(thetas, seed), True
    subj_tree = _subject_tree(data, spec, max(m, 1))
    u_draws, _ = _run_latent_chains(subj_tree, _theta_tree(thetas), spec,
                                    max(m, 1), seed, warmup)
    return _unpack_latents(u_draws, thetas, max(m, 1)), False


def _prior_latents(thetas: ThetaDraws, seed: int):
    rng = np.random.default_rng(seed)
    spec = thetas.spec
    d_draws = thetas.n_draws
    if spec.t_ranef:
        v = 1.0 / rng.gamma(thetas.phi / 2.0, 2.0 / thetas.phi)
    else:
        v = np.ones(d_draws)
    z = rng.standard_normal((d_draws, spec.q))
    b = np.sqrt(v)[:, None] * np.einsum("dij,dj->di", thetas.cov_chol, z)
    w = np.ones((d_draws, 1))
    return b, v, w


# --------------------------------------------------------------------------
# conditional failure probabilities
# --------------------------------------------------------------------------

def _marker_lines(thetas: ThetaDraws, data: NewcomerData, b: np.ndarray):
    """(const, slope) of each draw's marker line for this subject."""
    spec = thetas.spec
    x = term_matrix(spec.fixed_terms, np.zeros(1), data.baseline, "<newcomer>")[0]
    d = term_matrix(spec.random_terms, np.zeros(1), data.baseline, "<newcomer>")[0]
    x_tflag = time_indicator(spec.fixed_terms)
    d_tflag = time_indicator(spec.random_terms)
    const = thetas.alpha @ (x * (1 - x_tflag)) + b @ (d * (1 - d_tflag))
    slope = thetas.alpha @ x_tflag + b @ d_tflag
    return const, slope


def _hazard_exponent(thetas: ThetaDraws, data: NewcomerData, b: np.ndarray):
    spec = thetas.spec
    from .records import SubjectRecord
    rec = SubjectRecord("<newcomer>", [1.0], [0.0], data.baseline, 2.0, 0)
    c_row = survival_row(rec, spec)
    a_mark, b_mark = _marker_lines(thetas, data, b)
    eta_v, eta_s = thetas.eta_coefs()
    cov_lin = thetas.surv @ c_row if spec.r else np.zeros(thetas.n_draws)
    const = cov_lin + eta_v * a_mark + eta_s * b_mark
    lin = eta_v * b_mark
    return const, lin


def _hazard_increments(thetas: ThetaDraws, const, lin, t0: float,
                       t1_list: np.ndarray) -> np.ndarray:
    """H increments over consecutive intervals [t_{j-1}, t_j]; (D, n_int)."""
    rho, wq = panel_nodes(1)
    shape = np.exp(thetas.wb_log_shape)
    rate = np.exp(thetas.wb_log_rate)
    bounds = np.concatenate([[t0], np.asarray(t1_list, float)])
    out = np.zeros((thetas.n_draws, len(t1_list)))
    for j in range(len(t1_list)):
        m0 = bounds[j] ** shape
        m1 = bounds[j + 1] ** shape
        m_nodes = m0[:, None] + (m1 - m0)[:, None] * rho[None, :]
        t_nodes = m_nodes ** (1.0 / shape)[:, None]
        integ = np.exp(const[:, None] + lin[:, None] * t_nodes)
        if not np.all(np.isfinite(integ)):
            raise NumericalError("non-finite hazard integrand in prediction")
        out[:, j] = rate * (m1 - m0) * np.sum(wq[None, :] * integ, axis=1)
    return out


def conditional_failure_prob(data: NewcomerData, thetas: ThetaDraws,
                             b: np.ndarray, horizons=None) -> np.ndarray:
    """pi(s, u) per draw and horizon: 1 - exp(-(H(s+u) - H(s))).

    Horizons are accumulated over consecutive intervals, so for each draw
    the probabilities are nondecreasing in u and confined to [0, 1].
    """
    horizons = np.asarray(data.horizons if horizons is None else horizons, float)
    if np.any(horizons < 0):
        raise DomainError("horizons must be nonnegative")
    order = np.argsort(horizons)
    sorted_h = horizons[order]
    const, lin = _hazard_exponent(thetas, data, b)
    increments = _hazard_increments(thetas, const, lin, data.landmark,
                                    data.landmark + sorted_h)
    if np.any(increments < -1e-12):
        raise NumericalError("cumulative hazard decreased over a horizon interval")
    cum = np.cumsum(np.maximum(increments, 0.0), axis=1)
    pi_sorted = 1.0 - np.exp(-cum)
    pi = np.empty_like(pi_sorted)
    pi[:, order] = pi_sorted
    return np.clip(pi, 0.0, 1.0)


# --------------------------------------------------------------------------
# the public prediction entry points
# --------------------------------------------------------------------------

@dataclass
class LandmarkPrediction:
    """MC samples of the conditional failure probability at one landmark."""

    landmark: float
    horizons: np.ndarray
    pi_samples: np.ndarray        # (n_draws, n_horizons)
    percentiles: np.ndarray       # (n_horizons, 3): 2.5 / 50 / 97.5
    b: np.ndarray
    v: np.ndarray
    w: np.ndarray
    n_measurements_used: int
    n_dropped_after_landmark: int
    prior_only: bool


def predict_landmark(data: NewcomerData, thetas: ThetaDraws, seed: int = 0,
                     warmup: int = DEFAULT_LATENT_WARMUP) -> LandmarkPrediction:
    """Latent sampling plus failure probabilities for one landmark."""
    data.validate()
    n_before = int(data.times.size)
    used = data.truncated_to_landmark()
    dropped = n_before - int(used.times.size)
    if dropped:
        warnings.warn(f"{dropped} measurement(s) after the landmark were dropped")
    (b, v, w), prior_only = sample_newcomer_latents(used, thetas, seed=seed,
                                                    warmup=warmup)
    pi = conditional_failure_prob(used, thetas, b)
    pcts = np.percentile(pi, [2.5, 50.0, 97.5], axis=0).T
    return LandmarkPrediction(
        landmark=float(data.landmark), horizons=np.asarray(used.horizons, float),
        pi_samples=pi, percentiles=pcts, b=b, v=v, w=w,
        n_measurements_used=int(used.times.size),
        n_dropped_after_landmark=dropped, prior_only=prior_only)


def predict(data: NewcomerData, draws: PosteriorDraws | ThetaDraws,
            landmarks=None, thin: int = DEFAULT_THIN, seed: int = 0,
            warmup: int = DEFAULT_LATENT_WARMUP) -> list[LandmarkPrediction]:
    """Dynamic predictions over a landmark grid.

    Each landmark is computed by re-truncating the measurement set and
    re-sampling the latents (landmark updating).
    """
    thetas = (draws if isinstance(draws, ThetaDraws)
              else ThetaDraws.from_posterior(draws, thin=thin))
    landmarks = [data.landmark] if landmarks is None else list(landmarks)
    out = []
    for s in landmarks:
        shifted = NewcomerData(baseline=dict(data.baseline), times=data.times,
                               values=data.values, landmark=float(s),
                               horizons=tuple(data.horizons))
        out.append(predict_landmark(shifted, thetas, seed=seed, warmup=warmup))
    return out


def fitted_marker_trajectory(data: NewcomerData, thetas: ThetaDraws,
                             b: np.ndarray, times,
                             original_scale: bool = False):
    """Percentile bands of the subject's fitted marker over a time grid.

    Returns (times, (3, n_times) array of 2.5/50/97.5 percentiles).  With
    ``original_scale`` the curves are exponentiated first (the bands map
    through the monotone transform).
    """
    times = np.asarray(times, float)
    const, slope = _marker_lines(thetas, data, b)
    curves = const[:, None] + slope[:, None] * times[None, :]
    if original_scale and thetas.spec.log_scale_marker:
        curves = np.exp(curves)
    bands = np.percentile(curves, [2.5, 50.0, 97.5], axis=0)
    return times, bands


# --------------------------------------------------------------------------
# batched cohort prediction (used by validation)
# --------------------------------------------------------------------------

def predict_cohort_at_landmark(records, thetas: ThetaDraws, s: float,
                               horizons, seed: int = 0,
                               warmup: int = DEFAULT_LATENT_WARMUP):
    """pi samples for every at-risk subject of a cohort at one landmark.

    Returns (ids, pi) with pi of shape (n_at_risk, n_draws, n_horizons).
    Subjects with event_time <= s are excluded (not at risk).  All lanes
    (subject x draw) execute as one vectorized program.
    """
    spec = thetas.spec
    at_risk = [rec for rec in records if rec.event_time > s]
    skipped = len(records) - len(at_risk)
    if skipped:
        warnings.warn(f"{skipped} subject(s) not at risk at s={s} were excluded")
    if not at_risk:
        return [], np.zeros((0, thetas.n_draws, len(horizons)))

    newcomers = []
    for rec in at_risk:
        data = NewcomerData(baseline=dict(rec.baseline), times=rec.times,
                            values=rec.values, landmark=float(s),
                            horizons=tuple(horizons)).truncated_to_landmark()
        newcomers.append(data)
    m_pad = max(1, max(d.times.size for d in newcomers))
    trees = [_subject_tree(d, spec, m_pad) for d in newcomers]
    stacked = {k: jnp.stack([t[k] for t in trees]) for k in trees[0]}

    theta_tree = _theta_tree(thetas)
    quad = tuple(jnp.asarray(a) for a in panel_nodes(1))
    dim = _latent_dim(spec, m_pad)
    warm = warmup

    def lane(theta_slice, subj_slice, key):
        res = run_chain(
            lambda u: jax.value_and_grad(
                lambda uu: _latent_logpdf(uu, theta_slice, subj_slice, spec,
                                          quad))(u),
            key, jnp.zeros(dim), warm, 1,
            max_depth=LATENT_MAX_DEPTH, target_accept=0.8, adapt_mass=False)
        return res.draws[0]

    base = jax.random.PRNGKey(seed)
    n_draws = thetas.n_draws

    def subject_lanes(subj_slice, subj_key):
        keys = jax.vmap(lambda i: jax.random.fold_in(subj_key, i))(
            jnp.arange(n_draws))
        return jax.vmap(lane, in_axes=(0, None, 0))(theta_tree, subj_slice, keys)

    subj_keys = jax.vmap(lambda i: jax.random.fold_in(base, i))(
        jnp.arange(len(at_risk)))
    runner = jax.jit(jax.vmap(subject_lanes, in_axes=(0, 0)))
    u_draws = np.asarray(runner(stacked, subj_keys))   # (S, D, dim)

    ids = [rec.subject_id for rec in at_risk]
    pi = np.zeros((len(at_risk), n_draws, len(horizons)))
    for i, data in enumerate(newcomers):
        b, v, w = _unpack_latents(u_draws[i], thetas, m_pad)
        pi[i] = conditional_failure_prob(data, thetas, b)
    return ids, pi
