"""Core survival types: time grid, subjects, cohorts, survival curves.

Time is measured in days. A survival curve S is a step function on the grid
boundaries t_0 < t_1 < ... < t_T with S(t_0) = 1; the per-interval hazard is
lambda(t_l) = (S(t_{l-1}) - S(t_l)) / S(t_l) by default, with the standard
denominator S(t_{l-1}) available as an alternate mode.

All types are immutable after construction (backing arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing interval boundaries t_0 < ... < t_T (whole days).

    ``observation_cut`` is the index u of the boundary separating the
    observation window (t_0, t_u] from the prediction window (t_u, t_T].
    """

    boundaries: np.ndarray
    observation_cut: int = 0

    def __post_init__(self):
        b = _frozen(np.asarray(self.boundaries, dtype=np.int64))
        object.__setattr__(self, "boundaries", b)
        if b.ndim != 1 or b.size < 2:
            raise DataError("bad_grid", "grid needs at least 2 boundaries")
        if b[0] < 0:
            raise DataError("bad_grid", "grid boundaries must be non-negative")
        if np.any(np.diff(b) <= 0):
            raise DataError("bad_grid", "grid boundaries must be strictly increasing")
        if not 0 <= self.observation_cut < self.num_intervals + 1:
            raise DataError("bad_grid", f"observation cut {self.observation_cut} outside [0, T)")

    @property
    def num_intervals(self) -> int:
        """T: number of intervals (t_{l-1}, t_l]."""
        return self.boundaries.size - 1

    @classmethod
    def daily(cls, max_time: float, observation_cut: int = 0) -> "TimeGrid":
        """Daily-resolution grid 0, 1, ..., ceil(max_time), at least [0, 1]."""
        top = max(1, int(np.ceil(max_time)))
        return cls(np.arange(top + 1), observation_cut)


@dataclass(frozen=True)
class CovariateSequence:
    """Fixed-length sequence of L dense vectors, ordered oldest -> most recent.

    ``present_mask[l]`` is False for zero-padded slots; padded slots must be
    exact zero vectors and at least one slot must be present.
    """

    vectors: np.ndarray
    present_mask: np.ndarray

    def __post_init__(self):
        v = _frozen(np.asarray(self.vectors, dtype=np.float64))
        m = _frozen(np.asarray(self.present_mask, dtype=bool))
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "present_mask", m)
        if v.ndim != 2 or v.shape[1] < 1:
            raise DataError("bad_sequence", "covariates must be an (L, d) matrix with d >= 1")
        if m.shape != (v.shape[0],):
            raise DataError("bad_sequence", "present mask length must equal sequence length")
        if not m.any():
            raise DataError("bad_sequence", "at least one sequence slot must be present")
        if v[~m].any():
            raise DataError("bad_sequence", "padded slots must be exact zero vectors")

    @property
    def length(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def flattened(self) -> np.ndarray:
        """Slot-major flatten, oldest slot first: shape (L*d,)."""
        return self.vectors.reshape(-1)


@dataclass(frozen=True)
class Subject:
    """One subject: opaque id, time-to-event z in days, event flag, covariates."""

    id: str
    time_to_event: float
    event: bool
    covariates: CovariateSequence

    def __post_init__(self):
        if not np.isfinite(self.time_to_event) or self.time_to_event < 0:
            raise DataError("negative_time", f"subject {self.id!r}: negative time-to-event")


@dataclass(frozen=True)
class Cohort:
    """Immutable set of subjects sharing covariate dimension d, length L, and a grid."""

    subjects: tuple
    dimension: int
    sequence_length: int
    grid: TimeGrid
    # dense views, built once for vectorized consumers
    _X: np.ndarray = field(init=False, repr=False, compare=False)
    _present: np.ndarray = field(init=False, repr=False, compare=False)
    _times: np.ndarray = field(init=False, repr=False, compare=False)
    _events: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        object.__setattr__(self, "subjects", subjects)
        if not subjects:
            raise DataError("empty_cohort", "cohort has no subjects")
        X = np.stack([s.covariates.vectors for s in subjects])
        present = np.stack([s.covariates.present_mask for s in subjects])
        times = np.array([s.time_to_event for s in subjects], dtype=np.float64)
        events = np.array([s.event for s in subjects], dtype=bool)
        object.__setattr__(self, "_X", _frozen(X))
        object.__setattr__(self, "_present", _frozen(present))
        object.__setattr__(self, "_times", _frozen(times))
        object.__setattr__(self, "_events", _frozen(events))

    @classmethod
    def from_subjects(cls, subjects: Sequence[Subject], grid: TimeGrid | None = None) -> "Cohort":
        """Build a cohort, inferring d, L, and (if omitted) a daily grid."""
        subjects = tuple(subjects)
        if not subjects:
            raise DataError("empty_cohort", "cohort has no subjects")
        d = subjects[0].covariates.dimension
        L = subjects[0].covariates.length
        if grid is None:
            grid = TimeGrid.daily(max(s.time_to_event for s in subjects))
        return cls(subjects, d, L, grid)

    @property
    def size(self) -> int:
        return len(self.subjects)

    @property
    def num_events(self) -> int:
        return int(self._events.sum())

    def covariate_tensor(self) -> np.ndarray:
        """(n, L, d) float64 view of all covariate sequences."""
        return self._X

    def present_matrix(self) -> np.ndarray:
        """(n, L) bool matrix of present slots."""
        return self._present

    def times(self) -> np.ndarray:
        return self._times

    def events(self) -> np.ndarray:
        return self._events

    def subset(self, indices: np.ndarray) -> "Cohort":
        """Sub-cohort of the given subject indices, sharing the parent grid."""
        picked = tuple(self.subjects[int(i)] for i in np.asarray(indices))
        return Cohort(picked, self.dimension, self.sequence_length, self.grid)


@dataclass(frozen=True)
class SurvivalCurve:
    """Per-subject survival step function S(t_l) on the grid boundaries."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.boundaries.size,):
            raise DataError("bad_curve", "curve needs one value per grid boundary")
        if v[0] != 1.0:
            raise DataError("bad_curve", "survival curve must start at 1")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise DataError("bad_curve", "survival values must lie in [0, 1]")
        if np.any(np.diff(v) > 0.0):
            raise DataError("bad_curve", "survival curve must be non-increasing")


def validate_cohort(cohort: Cohort) -> Cohort:
    """Check every cohort invariant; returns the cohort unchanged if valid.

    Raises DataError with codes: dimension_mismatch, negative_time, no_events,
    bad_grid, uninformative_subject. Idempotent: called at every ingestion
    boundary.
    """
    for s in cohort.subjects:
        if s.covariates.dimension != cohort.dimension or s.covariates.length != cohort.sequence_length:
            raise DataError(
                "dimension_mismatch",
                f"subject {s.id!r} has shape ({s.covariates.length}, {s.covariates.dimension}), "
                f"cohort expects ({cohort.sequence_length}, {cohort.dimension})",
            )
        if s.time_to_event < 0:
            raise DataError("negative_time", f"subject {s.id!r}: negative time-to-event")
        # z = 0 deaths are kept (death on report day); z = 0 censored rows
        # carry no information for the partial likelihood.
        if s.time_to_event == 0 and not s.event:
            raise DataError("uninformative_subject", f"subject {s.id!r}: censored at time 0")
    if cohort.num_events == 0:
        raise DataError("no_events", "no events in cohort; partial likelihood undefined")
    if np.any(np.diff(cohort.grid.boundaries) <= 0):
        raise DataError("bad_grid", "grid boundaries must be strictly increasing")
    return cohort


def discrete_hazard(curve: SurvivalCurve, denominator: str = "current") -> np.ndarray:
    """Per-interval hazard rates lambda(t_l) for l = 1..T.

    ``denominator="current"`` divides the decrement by S(t_l) (the default);
    ``"previous"`` divides by S(t_{l-1}), the standard discrete hazard. Where
    the denominator is zero the rate is reported as +inf from that index on.
    """
    s = curve.values
    dec = s[:-1] - s[1:]
    if denominator == "current":
        den = s[1:]
    elif denominator == "previous":
        den = s[:-1]
    else:
        raise ValueError(f"unknown denominator mode {denominator!r}")
    out = np.empty(dec.shape, dtype=np.float64)
    dead = den == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~dead] = dec[~dead] / den[~dead]
    if dead.any():
        out[int(np.argmax(dead)):] = np.inf
    return out


def survival_from_hazard(hazards: np.ndarray, grid: TimeGrid) -> SurvivalCurve:
    """Inverse of the default discrete_hazard: S(t_l) = S(t_{l-1}) / (1 + lambda(t_l)).

    Round-trips with ``discrete_hazard(..., denominator="current")`` to within
    1e-12 relative error for finite non-negative hazards.
    """
    lam = np.asarray(hazards, dtype=np.float64)
    if lam.shape != (grid.num_intervals,):
        raise DataError("bad_curve", "need one hazard per grid interval")
    if np.any(lam < 0) or np.any(np.isnan(lam)):
        raise DataError("bad_curve", "hazards must be non-negative")
    values = np.empty(grid.num_intervals + 1, dtype=np.float64)
    values[0] = 1.0
    for l, h in enumerate(lam, start=1):
        values[l] = 0.0 if np.isinf(h) else values[l - 1] / (1.0 + h)
    return SurvivalCurve(grid, values)
