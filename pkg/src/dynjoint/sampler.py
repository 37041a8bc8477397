"""Multi-chain NUTS orchestration, convergence diagnostics, draw containers.

Chains are batched through ``vmap`` and executed as one compiled program;
each chain owns a private RNG stream derived from (seed, chain index), so
runs are bit-reproducible given the seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._jax import jax, jnp
from .errors import ConvergenceError, InitializationError, NumericalError
from .modelspec import ModelSpec
from .nuts import run_chain
from .posterior import TargetDensity

RHAT_WARN = 1.05
RHAT_FAIL = 1.1


@dataclass(frozen=True)
class SamplerConfig:
    """Chain protocol; the default reproduces 4 x 2,000 with half warmup."""

    chains: int = 4
    iterations: int = 2000
    warmup_fraction: float = 0.5
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    store_latents: str = "subject"   # none | subject | all
    check_gradient: bool = True

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValueError("warmup fraction must be in (0, 1)")
        if self.iterations < 2:
            raise ValueError("iterations must be >= 2")
        if self.store_latents not in ("none", "subject", "all"):
            raise ValueError("store_latents must be none|subject|all")

    @property
    def warmup(self) -> int:
        return int(self.iterations * self.warmup_fraction)

    @property
    def samples_per_chain(self) -> int:
        return self.iterations - self.warmup

    def to_dict(self) -> dict:
        return {
            "chains": self.chains, "iterations": self.iterations,
            "warmup_fraction": self.warmup_fraction,
            "target_accept": self.target_accept,
            "max_tree_depth": self.max_tree_depth, "seed": self.seed,
            "store_latents": self.store_latents,
        }


@dataclass
class PosteriorDraws:
    """Retained draws on the constrained scale plus sampler diagnostics."""

    columns: list[str]
    matrix: np.ndarray          # (chains * samples, n_cols)
    chain: np.ndarray           # (rows,) chain index of each row
    logp: np.ndarray
    divergent: np.ndarray
    tree_depth: np.ndarray
    config: SamplerConfig
    spec: ModelSpec
    rhat: dict[str, float]
    subject_ids: list[str] = field(default_factory=list)
    step_sizes: np.ndarray | None = None
    energy_error: np.ndarray | None = None
    accept_stat: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return self.matrix.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None
        return self.matrix[:, idx]

    def per_chain(self, name: str) -> np.ndarray:
        """Draws of one column grouped as (chains, samples)."""
        flat = self.column(name)
        chains = self.config.chains
        return flat.reshape(chains, -1)

    def summary(self, name: str) -> tuple[float, float, float]:
        return trace_summary(self.column(name), name)

    @property
    def divergence_rate(self) -> float:
        return float(np.mean(self.divergent))

    def scalar_columns(self) -> list[str]:
        """Columns that are model parameters (latents excluded)."""
        return [c for c in self.columns
                if not (c.startswith("b[") or c.startswith("v[")
                        or c.startswith("w["))]


# --------------------------------------------------------------------------
# scalar diagnostics
# --------------------------------------------------------------------------

def rhat(chains_draws) -> float:
    """Split-chain potential scale reduction factor for one scalar.

    Input is (chains, iterations).  Chains are split in half, so even a
    single chain yields two segments.  Zero within-segment variance is
    flagged as NaN rather than silently reported as 1.
    """
    arr = np.atleast_2d(np.asarray(chains_draws, dtype=float))
    n = arr.shape[1] // 2
    if n < 2:
        raise ValueError("need at least 4 iterations for split R-hat")
    segments = []
    for row in arr:
        segments.append(row[:n])
        segments.append(row[n:2 * n])
    seg = np.stack(segments)
    within = seg.var(axis=1, ddof=1)
    w = within.mean()
    if w == 0.0 or not np.isfinite(w):
        warnings.warn("zero or non-finite within-chain variance; R-hat undefined",
                      RuntimeWarning)
        return float("nan")
    between = seg.mean(axis=1).var(ddof=1)   # B / n in the classical notation
    var_plus = (n - 1) / n * w + between
    return float(np.sqrt(var_plus / w))


def trace_summary(draws, name: str = "") -> tuple[float, float, float]:
    """(2.5, 50, 97.5) percentiles with linear (type-7) interpolation."""
    arr = np.asarray(draws, dtype=float)
    lo, mid, hi = np.percentile(arr, [2.5, 50.0, 97.5])
    return float(lo), float(mid), float(hi)


# --------------------------------------------------------------------------
# column naming and constrained-draw extraction
# --------------------------------------------------------------------------

def _column_names(spec: ModelSpec, n_subjects: int, n_obs: int,
                  store_latents: str) -> list[str]:
    names = [f"alpha[{i + 1}]" for i in range(spec.p)]
    names += [f"sd_b[{i + 1}]" for i in range(spec.q)]
    names += [f"corr_b[{i + 1},{j + 1}]"
              for i in range(spec.q) for j in range(i)]
    names += [f"Sigma[{i + 1},{j + 1}]"
              for i in range(spec.q) for j in range(i, spec.q)]
    names += ["sigma"]
    if spec.t_ranef:
        names += ["phi"]
    if spec.t_error:
        names += ["delta"]
    names += ["weibull_log_rate", "weibull_log_shape"]
    names += [f"surv[{name}]" for name in spec.survival_covariates]
    if spec.link_value:
        names += ["assoc_value"]
    if spec.link_slope:
        names += ["assoc_slope"]
    if store_latents in ("subject", "all"):
        names += [f"b[{i + 1},{k + 1}]"
                  for i in range(n_subjects) for k in range(spec.q)]
        if spec.t_ranef:
            names += [f"v[{i + 1}]" for i in range(n_subjects)]
    if store_latents == "all" and spec.t_error:
        names += [f"w[{j + 1}]" for j in range(n_obs)]
    return names


def _constrained_matrix(target: TargetDensity, u_draws: np.ndarray,
                        store_latents: str) -> tuple[np.ndarray, list[str]]:
    spec = target.spec
    lay = target.layout
    names = _column_names(spec, lay.n_subjects, lay.n_obs, store_latents)
    constrain_batch = jax.jit(jax.vmap(target._constrain))
    blocks = []
    for start in range(0, u_draws.shape[0], 512):
        cp = constrain_batch(jnp.asarray(u_draws[start:start + 512]))
        cols = [np.asarray(cp["alpha"])]
        cols.append(np.asarray(cp["sd"]))
        corr_cols = []
        if spec.q > 1:
            corr = np.asarray(jnp.einsum("dik,djk->dij", cp["corr_chol"],
                                         cp["corr_chol"]))
            corr_cols = [corr[:, i, j] for i in range(spec.q) for j in range(i)]
        scale_chol = np.asarray(cp["scale_chol"])
        sig = np.einsum("dik,djk->dij", scale_chol, scale_chol)
        sigma_cols = [sig[:, i, j]
                      for i in range(spec.q) for j in range(i, spec.q)]
        cols.extend([np.column_stack(corr_cols)] if corr_cols else [])
        cols.append(np.column_stack(sigma_cols))
        cols.append(np.asarray(cp["sigma"])[:, None])
        if spec.t_ranef:
            cols.append(np.asarray(cp["phi"])[:, None])
        if spec.t_error:
            cols.append(np.asarray(cp["delta"])[:, None])
        cols.append(np.asarray(cp["wb_log_rate"])[:, None])
        cols.append(np.asarray(cp["wb_log_shape"])[:, None])
        if spec.r:
            cols.append(np.asarray(cp["surv"]))
        cols.append(np.asarray(cp["assoc"]))
        if store_latents in ("subject", "all") and lay.n_subjects:
            cols.append(np.asarray(cp["b"]).reshape(cp["b"].shape[0], -1))
            if spec.t_ranef:
                cols.append(np.asarray(cp["v"]))
        if store_latents == "all" and spec.t_error and lay.n_obs:
            cols.append(np.asarray(cp["w"]))
        blocks.append(np.column_stack([c for c in cols if c.size]))
    matrix = np.vstack(blocks)
    if matrix.shape[1] != len(names):
        raise NumericalError(
            f"column extraction mismatch: {matrix.shape[1]} columns for "
            f"{len(names)} names")
    return matrix, names


# --------------------------------------------------------------------------
# the sampler entry point
# --------------------------------------------------------------------------

def _finite_difference_check(target: TargetDensity, u0: np.ndarray,
                             n_coords: int = 3, h: float = 1e-5,
                             tol: float = 5e-3) -> None:
    _, grad = target.value_and_grad(u0)
    dim = u0.size
    coords = sorted({0, dim // 2, dim - 1})[:n_coords]
    for k in coords:
        e = np.zeros(dim)
        e[k] = h
        fd = (target.logpdf(u0 + e) - target.logpdf(u0 - e)) / (2 * h)
        scale = max(abs(fd), abs(grad[k]), 1.0)
        if abs(fd - grad[k]) > tol * scale:
            raise NumericalError(
                f"gradient self-test failed at coordinate "
                f"{target.coordinate_names[k]!r}: autodiff {grad[k]:.6g} vs "
                f"finite difference {fd:.6g}")


def _initial_points(target: TargetDensity, config: SamplerConfig) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    points = []
    for chain in range(config.chains):
        ok = False
        for _ in range(100):
            u0 = rng.uniform(-2.0, 2.0, size=target.dim)
            value, grad = target.value_and_grad(u0)
            if np.isfinite(value) and np.all(np.isfinite(grad)):
                ok = True
                break
        if not ok:
            raise InitializationError(
                f"no finite initial log-density found for chain {chain} "
                "after 100 attempts")
        points.append(u0)
    return np.stack(points)


def nuts_sample(target: TargetDensity, config: SamplerConfig | None = None,
                divergence_limit: float = 0.25) -> PosteriorDraws:
    """Draw from the target with the default 4-chain protocol.

    Warmup is discarded; more than ``divergence_limit`` divergent
    post-warmup iterations raises ConvergenceError.
    """
    config = config or SamplerConfig()
    u0 = _initial_points(target, config)
    if config.check_gradient:
        _finite_difference_check(target, u0[0])

    vg = target._raw_vg
    warmup, samples = config.warmup, config.samples_per_chain
    keys = jnp.stack([jax.random.fold_in(jax.random.PRNGKey(config.seed), c)
                      for c in range(config.chains)])

    def one_chain(key, u_init):
        return run_chain(vg, key, u_init, warmup, samples,
                         max_depth=config.max_tree_depth,
                         target_accept=config.target_accept)

    runner = jax.jit(jax.vmap(one_chain))
    result = runner(keys, jnp.asarray(u0))
    draws_u = np.asarray(result.draws)        # (C, S, dim)
    logp = np.asarray(result.logp)
    divergent = np.asarray(result.diverging)
    depth = np.asarray(result.depth)
    accept = np.asarray(result.accept)
    eerr = np.asarray(result.energy_error)
    step_sizes = np.asarray(result.step_size)

    flat_u = draws_u.reshape(-1, target.dim)
    matrix, columns = _constrained_matrix(target, flat_u, config.store_latents)

    chain_ids = np.repeat(np.arange(config.chains), samples)
    rhat_table = {}
    scalar_cols = [c for c in columns
                   if not (c.startswith("b[") or c.startswith("v[")
                           or c.startswith("w["))]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name in scalar_cols:
            idx = columns.index(name)
            rhat_table[name] = rhat(matrix[:, idx].reshape(config.chains, samples))
        rhat_table["lp__"] = rhat(logp)

    draws = PosteriorDraws(
        columns=columns, matrix=matrix, chain=chain_ids,
        logp=logp.reshape(-1), divergent=divergent.reshape(-1),
        tree_depth=depth.reshape(-1), config=config, spec=target.spec,
        rhat=rhat_table,
        subject_ids=list(target.designs.subject_ids) if target.designs else [],
        step_sizes=step_sizes,
        energy_error=eerr.reshape(-1),
        accept_stat=accept.reshape(-1),
    )
    if draws.divergence_rate > divergence_limit:
        raise ConvergenceError(
            f"{100 * draws.divergence_rate:.1f}% of post-warmup iterations "
            "diverged; lower the step size by raising target_accept "
            "(e.g. 0.9 or higher) or reparameterize the model")
    return draws


def convergence_verdict(draws: PosteriorDraws) -> str:
    """'ok', 'warn' or 'fail' from the R-hat table thresholds."""
    finite = [v for v in draws.rhat.values() if np.isfinite(v)]
    worst = max(finite) if finite else float("nan")
    if not np.isfinite(worst) or worst > RHAT_FAIL:
        return "fail"
    if worst > RHAT_WARN:
        return "warn"
    return "ok"
