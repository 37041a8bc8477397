"""Robust joint models of longitudinal and survival data.

Fits shared-random-effects joint models under Normal or Student-t random
effects and errors, samples the joint posterior with an in-package NUTS
implementation, produces dynamic predictions of conditional failure
probability for new subjects, and scores them with censoring-aware
discrimination and calibration metrics.
"""

from .errors import (CohortValidationError, ConvergenceError, DesignError,
                     DomainError, InitializationError, MetricUndefinedError,
                     NumericalError)
from .modelspec import ModelSpec, PriorSettings, REGIMES
from .params import ParameterState
from .records import NewcomerData, SubjectRecord, validate_cohort
from .design import DesignRow, build_design, stack_cohort
from .hazard import (HazardContext, cumulative_hazard,
                     cumulative_hazard_increment, log_hazard, log_survival,
                     make_hazard_context)
from .posterior import TargetDensity, build_prior_target, build_target
from .sampler import (PosteriorDraws, SamplerConfig, convergence_verdict,
                      nuts_sample, rhat, trace_summary)

__version__ = "0.1.0"

__all__ = [
    "CohortValidationError", "ConvergenceError", "DesignError", "DomainError",
    "InitializationError", "MetricUndefinedError", "NumericalError",
    "ModelSpec", "PriorSettings", "REGIMES", "ParameterState",
    "NewcomerData", "SubjectRecord", "validate_cohort",
    "DesignRow", "build_design", "stack_cohort",
    "HazardContext", "cumulative_hazard", "cumulative_hazard_increment",
    "log_hazard", "log_survival", "make_hazard_context",
    "TargetDensity", "build_prior_target", "build_target",
    "PosteriorDraws", "SamplerConfig", "convergence_verdict", "nuts_sample",
    "rhat", "trace_summary",
    "__version__",
]
