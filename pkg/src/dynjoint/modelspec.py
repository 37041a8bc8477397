"""Model configuration: distributional regime, design formulas, priors.

The four regimes combine Normal or Student-t random effects with Normal or
Student-t error terms.  Student-t components are represented throughout by
their inverse-Gamma variance-mixture form, so a regime only decides which
mixing variables (and degree-of-freedom parameters) exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DomainError

REGIMES = ("nn", "nt", "tn", "tt")

#: Design term that evaluates to the measurement time.
TIME_TERM = "t"
#: Design term that evaluates to the constant 1.
INTERCEPT_TERM = "1"

DF_LOWER = 2.0


@dataclass(frozen=True)
class PriorSettings:
    """Scales of the independent priors.

    Cauchy scales apply to the fixed intercept / remaining fixed effects and
    to the survival-scale block (log Weibull parameters, survival covariate
    coefficients, association coefficients).  Half-Cauchy scales apply to
    the random-effect standard deviations and the error scale.  Degrees of
    freedom get a uniform prior on ``df_bounds``.
    """

    alpha_intercept_scale: float = 20.0
    alpha_scale: float = 5.0
    ranef_sd_scale: float = 5.0
    sigma_scale: float = 5.0
    lkj_shape: float = 2.0
    df_bounds: tuple[float, float] = (2.0, 100.0)
    survival_scale: float = 5.0

    def validate(self) -> None:
        for name in ("alpha_intercept_scale", "alpha_scale", "ranef_sd_scale",
                     "sigma_scale", "lkj_shape", "survival_scale"):
            if getattr(self, name) <= 0:
                raise DomainError(f"prior scale {name} must be > 0")
        lo, hi = self.df_bounds
        if lo < DF_LOWER:
            raise DomainError(
                f"df lower bound {lo} is below {DF_LOWER}; the t variance is undefined there")
        if hi <= lo:
            raise DomainError("df upper bound must exceed the lower bound")


@dataclass(frozen=True)
class ModelSpec:
    """Full description of one joint model.

    ``fixed_terms`` and ``random_terms`` are ordered tuples over the small
    term language ``{"1", "t", <covariate name>}``; the random terms must be
    a subset of the fixed ones.  ``survival_covariates`` names baseline
    covariates entering the hazard directly.  ``link_value``/``link_slope``
    switch the current-value and current-slope association terms.
    """

    regime: str = "tt"
    fixed_terms: tuple[str, ...] = (INTERCEPT_TERM, TIME_TERM)
    random_terms: tuple[str, ...] = (INTERCEPT_TERM, TIME_TERM)
    survival_covariates: tuple[str, ...] = ()
    link_value: bool = True
    link_slope: bool = True
    priors: PriorSettings = field(default_factory=PriorSettings)
    log_scale_marker: bool = True

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise DomainError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if not self.fixed_terms:
            raise DomainError("fixed_terms must not be empty")
        if not self.random_terms:
            raise DomainError("random_terms must not be empty")
        missing = [term for term in self.random_terms if term not in self.fixed_terms]
        if missing:
            raise DomainError(f"random terms {missing} are not among the fixed terms")
        if not (self.link_value or self.link_slope):
            raise DomainError("at least one of link_value/link_slope must be set")
        if self.link_slope and TIME_TERM not in self.fixed_terms:
            raise DomainError("slope link requires a time term in the fixed design")
        self.priors.validate()

    # regime predicates -------------------------------------------------
    @property
    def t_ranef(self) -> bool:
        """True when random effects are Student-t (subject mixing variables exist)."""
        return self.regime in ("tn", "tt")

    @property
    def t_error(self) -> bool:
        """True when error terms are Student-t (per-observation mixing variables exist)."""
        return self.regime in ("nt", "tt")

    @property
    def p(self) -> int:
        return len(self.fixed_terms)

    @property
    def q(self) -> int:
        return len(self.random_terms)

    @property
    def r(self) -> int:
        return len(self.survival_covariates)

    @property
    def n_assoc(self) -> int:
        return int(self.link_value) + int(self.link_slope)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "fixed_terms": list(self.fixed_terms),
            "random_terms": list(self.random_terms),
            "survival_covariates": list(self.survival_covariates),
            "link_value": self.link_value,
            "link_slope": self.link_slope,
            "log_scale_marker": self.log_scale_marker,
            "priors": {
                "alpha_intercept_scale": self.priors.alpha_intercept_scale,
                "alpha_scale": self.priors.alpha_scale,
                "ranef_sd_scale": self.priors.ranef_sd_scale,
                "sigma_scale": self.priors.sigma_scale,
                "lkj_shape": self.priors.lkj_shape,
                "df_bounds": list(self.priors.df_bounds),
                "survival_scale": self.priors.survival_scale,
            },
        }

    @staticmethod
    def from_dict(payload: dict) -> "ModelSpec":
        priors = payload.get("priors", {})
        df_bounds = tuple(priors.get("df_bounds", (2.0, 100.0)))
        return ModelSpec(
            regime=payload["regime"],
            fixed_terms=tuple(payload.get("fixed_terms", ("1", "t"))),
            random_terms=tuple(payload.get("random_terms", ("1", "t"))),
            survival_covariates=tuple(payload.get("survival_covariates", ())),
            link_value=payload.get("link_value", True),
            link_slope=payload.get("link_slope", True),
            log_scale_marker=payload.get("log_scale_marker", True),
            priors=PriorSettings(
                alpha_intercept_scale=priors.get("alpha_intercept_scale", 20.0),
                alpha_scale=priors.get("alpha_scale", 5.0),
                ranef_sd_scale=priors.get("ranef_sd_scale", 5.0),
                sigma_scale=priors.get("sigma_scale", 5.0),
                lkj_shape=priors.get("lkj_shape", 2.0),
                df_bounds=df_bounds,
                survival_scale=priors.get("survival_scale", 5.0),
            ),
        )
