"""Subject-level data containers and their structural validation.

A cohort is a plain list of :class:`SubjectRecord`.  Times are years since
the follow-up origin and must be strictly positive; the event time closes
the observation window, so every measurement used for fitting must not lie
beyond it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CohortValidationError


@dataclass
class SubjectRecord:
    """One subject: repeated marker values plus right-censored event info.

    Parameters
    ----------
    subject_id : str
        Opaque identifier, unique within a cohort.
    times : array (m,)
        Measurement times in years, strictly positive and nondecreasing.
    values : array (m,)
        Marker values (e.g. log serum creatinine) at ``times``.
    baseline : dict
        Named baseline covariates (real or 0/1 coded).
    event_time : float
        Years from origin to event or censoring.
    event : int
        1 if the event was observed, 0 if censored.
    """

    subject_id: str
    times: np.ndarray
    values: np.ndarray
    baseline: dict[str, float] = field(default_factory=dict)
    event_time: float = np.nan
    event: int = 0

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.times.size == 0:
            self.times = self.times.reshape(0)
            self.values = self.values.reshape(0)

    @property
    def n_measurements(self) -> int:
        return int(self.times.size)

    def validate(self, role: str = "fit") -> None:
        """Check structural invariants.

        ``role="fit"`` additionally requires at least one measurement and a
        finite event time; ``role="predict"`` allows a measurement-free
        record (latents then come from their prior).
        """
        sid = self.subject_id
        if self.times.size != self.values.size:
            raise CohortValidationError(
                f"subject {sid!r}: {self.times.size} times vs {self.values.size} values")
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.values)):
            raise CohortValidationError(f"subject {sid!r}: non-finite measurement entries")
        if self.times.size and np.any(self.times <= 0):
            raise CohortValidationError(f"subject {sid!r}: measurement times must be > 0")
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise CohortValidationError(f"subject {sid!r}: measurement times must be nondecreasing")
        for name, value in self.baseline.items():
            if not np.isfinite(value):
                raise CohortValidationError(f"subject {sid!r}: covariate {name!r} is not finite")
        if role == "fit":
            if self.times.size == 0:
                raise CohortValidationError(
                    f"subject {sid!r}: at least one measurement is required for fitting")
            if not np.isfinite(self.event_time) or self.event_time <= 0:
                raise CohortValidationError(f"subject {sid!r}: event time must be positive")
            if self.event not in (0, 1):
                raise CohortValidationError(f"subject {sid!r}: event indicator must be 0 or 1")
            if self.times.size and self.event_time < self.times.max() - 1e-12:
                raise CohortValidationError(
                    f"subject {sid!r}: event time {self.event_time} precedes last "
                    f"measurement at {self.times.max()}")


@dataclass
class NewcomerData:
    """Data for a subject receiving a dynamic prediction.

    The subject is assumed event-free at the landmark ``s``; measurements
    with timestamps after ``s`` are excluded before latent sampling
    (timestamps exactly equal to ``s`` are kept).
    """

    baseline: dict[str, float]
    times: np.ndarray
    values: np.ndarray
    landmark: float
    horizons: tuple[float, ...] = (5.0,)

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))

    def validate(self) -> None:
        if self.landmark < 0:
            raise CohortValidationError("landmark must be nonnegative")
        if self.times.size != self.values.size:
            raise CohortValidationError("times and values differ in length")
        if self.times.size and np.any(self.times <= 0):
            raise CohortValidationError("measurement times must be > 0")
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise CohortValidationError("measurement times must be nondecreasing")
        if any(u < 0 for u in self.horizons):
            raise CohortValidationError("horizons must be nonnegative")

    def truncated_to_landmark(self) -> "NewcomerData":
        """Return a copy with measurements after the landmark dropped."""
        keep = self.times <= self.landmark + 1e-12
        return NewcomerData(
            baseline=dict(self.baseline),
            times=self.times[keep],
            values=self.values[keep],
            landmark=self.landmark,
            horizons=tuple(self.horizons),
        )


def validate_cohort(records: list[SubjectRecord], role: str = "fit") -> None:
    """Validate every record and cross-record uniqueness of ids."""
    seen = set()
    for rec in records:
        if rec.subject_id in seen:
            raise CohortValidationError(f"duplicate subject id {rec.subject_id!r}")
        seen.add(rec.subject_id)
        rec.validate(role=role)
