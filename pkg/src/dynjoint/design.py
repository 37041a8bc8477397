"""Design-matrix construction for the longitudinal and survival sub-models.

Terms come from a three-word language: ``"1"`` (intercept), ``"t"``
(measurement time in years) and baseline covariate names.  Because every
term is either constant in time or linear in time, the subject's fitted
marker value is affine in t, which the hazard evaluation exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DesignError
from .modelspec import INTERCEPT_TERM, TIME_TERM, ModelSpec
from .records import SubjectRecord


@dataclass
class DesignRow:
    """Design vectors for one measurement of one subject."""

    x: np.ndarray  # fixed effects, length p
    d: np.ndarray  # random effects, length q
    c: np.ndarray  # survival covariates, length r (constant across a subject)


def _term_value(term: str, t: float, baseline: dict[str, float], sid: str) -> float:
    if term == INTERCEPT_TERM:
        return 1.0
    if term == TIME_TERM:
        return float(t)
    try:
        return float(baseline[term])
    except KeyError:
        raise DesignError(
            f"covariate {term!r} is missing from subject {sid!r}") from None


def term_matrix(terms: tuple[str, ...], times: np.ndarray,
                baseline: dict[str, float], sid: str) -> np.ndarray:
    """Rows of term values evaluated at each time; shape (len(times), len(terms))."""
    cols = []
    for term in terms:
        if term == TIME_TERM:
            cols.append(np.asarray(times, dtype=float))
        else:
            cols.append(np.full(len(times), _term_value(term, 0.0, baseline, sid)))
    return np.column_stack(cols) if cols else np.zeros((len(times), 0))


def time_indicator(terms: tuple[str, ...]) -> np.ndarray:
    """d/dt of each term: 1 for the time term, 0 otherwise."""
    return np.array([1.0 if term == TIME_TERM else 0.0 for term in terms])


def survival_row(record: SubjectRecord, spec: ModelSpec) -> np.ndarray:
    return np.array([
        _term_value(name, 0.0, record.baseline, record.subject_id)
        for name in spec.survival_covariates
    ])


def build_design(record: SubjectRecord, spec: ModelSpec) -> list[DesignRow]:
    """One DesignRow per measurement; the survival row repeats across rows."""
    if record.n_measurements == 0:
        raise DesignError(
            f"subject {record.subject_id!r} has no measurements to build a design from")
    x = term_matrix(spec.fixed_terms, record.times, record.baseline, record.subject_id)
    d = term_matrix(spec.random_terms, record.times, record.baseline, record.subject_id)
    c = survival_row(record, spec)
    return [DesignRow(x=x[j], d=d[j], c=c.copy()) for j in range(record.n_measurements)]


@dataclass
class CohortDesign:
    """Stacked per-observation and per-subject arrays for a whole cohort.

    Observation-level arrays are flat over all measurements with ``subj``
    giving the owning subject's index.  ``x_const``/``d_const`` hold the
    time-free part of the design rows (the time column zeroed) so the
    marker value at arbitrary t is ``const + slope * t``.
    """

    subject_ids: list[str]
    y: np.ndarray          # (N,)
    t_obs: np.ndarray      # (N,)
    subj: np.ndarray       # (N,) int
    x: np.ndarray          # (N, p)
    d: np.ndarray          # (N, q)
    x_const: np.ndarray    # (n, p) design with the time column zeroed
    d_const: np.ndarray    # (n, q)
    x_tflag: np.ndarray    # (p,) indicator of the time term
    d_tflag: np.ndarray    # (q,)
    c: np.ndarray          # (n, r)
    event_time: np.ndarray  # (n,)
    event: np.ndarray      # (n,) float 0/1
    m: np.ndarray          # (n,) measurements per subject

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_obs(self) -> int:
        return int(self.y.size)


def stack_cohort(records: list[SubjectRecord], spec: ModelSpec) -> CohortDesign:
    """Build the flat arrays the posterior evaluates over."""
    ys, ts, subj, xs, ds = [], [], [], [], []
    x_const, d_const, cs, t_ev, ev, ms = [], [], [], [], [], []
    x_tflag = time_indicator(spec.fixed_terms)
    d_tflag = time_indicator(spec.random_terms)
    for i, rec in enumerate(records):
        if rec.n_measurements == 0:
            raise DesignError(f"subject {rec.subject_id!r} has no measurements")
        x = term_matrix(spec.fixed_terms, rec.times, rec.baseline, rec.subject_id)
        d = term_matrix(spec.random_terms, rec.times, rec.baseline, rec.subject_id)
        ys.append(rec.values)
        ts.append(rec.times)
        subj.append(np.full(rec.n_measurements, i, dtype=int))
        xs.append(x)
        ds.append(d)
        x_const.append(x[0] * (1.0 - x_tflag))
        d_const.append(d[0] * (1.0 - d_tflag))
        cs.append(survival_row(rec, spec))
        t_ev.append(rec.event_time)
        ev.append(float(rec.event))
        ms.append(rec.n_measurements)
    return CohortDesign(
        subject_ids=[rec.subject_id for rec in records],
        y=np.concatenate(ys),
        t_obs=np.concatenate(ts),
        subj=np.concatenate(subj),
        x=np.vstack(xs),
        d=np.vstack(ds),
        x_const=np.vstack(x_const),
        d_const=np.vstack(d_const),
        x_tflag=x_tflag,
        d_tflag=d_tflag,
        c=np.vstack(cs) if cs and cs[0].size else np.zeros((len(records), 0)),
        event_time=np.asarray(t_ev, dtype=float),
        event=np.asarray(ev, dtype=float),
        m=np.asarray(ms, dtype=int),
    )
