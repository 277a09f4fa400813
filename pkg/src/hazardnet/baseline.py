"""Breslow baseline hazard and Kaplan-Meier estimation.

The fitted log-risks psi determine each subject's curve only up to the shared
baseline; the Breslow estimator supplies it:

    dLambda0(t_l) = |U_l| / sum_{j in R_l} exp(psi_j)

and S(t | psi) = exp(-Lambda0(t) * exp(psi)). The Kaplan-Meier product-limit
estimator is used on the censoring distribution for IPCW weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Cohort, SurvivalCurve, TimeGrid, _frozen
from .errors import DataError
from .likelihood import build_risk_sets


@dataclass(frozen=True)
class BaselineHazard:
    """Cumulative baseline hazard Lambda0 sampled at the grid boundaries."""

    grid: TimeGrid
    cumulative: np.ndarray

    def __post_init__(self):
        c = _frozen(np.asarray(self.cumulative, dtype=np.float64))
        object.__setattr__(self, "cumulative", c)
        if c.shape != (self.grid.boundaries.size,):
            raise DataError("bad_curve", "need one cumulative value per grid boundary")
        if c[0] != 0.0:
            raise DataError("bad_curve", "cumulative baseline hazard must start at 0")
        if not np.all(np.isfinite(c)) or np.any(np.diff(c) < 0):
            raise DataError("bad_curve", "cumulative baseline hazard must be finite and non-decreasing")


@dataclass(frozen=True)
class KaplanMeierCurve:
    """Product-limit estimate at each distinct observed time.

    The step function is right-continuous: survival_at(t) multiplies factors
    for event times <= t, left_limit(t) for event times < t.
    """

    times: np.ndarray
    estimates: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray

    def __post_init__(self):
        for name in ("times", "estimates", "at_risk", "n_events"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name))))

    def survival_at(self, t: np.ndarray) -> np.ndarray:
        """S-hat(t), right-continuous; 1 before the first observed time."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side="right")
        padded = np.concatenate([[1.0], self.estimates])
        return padded[idx]

    def left_limit(self, t: np.ndarray) -> np.ndarray:
        """S-hat(t-): the value just before t, as used by IPCW weights."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side="left")
        padded = np.concatenate([[1.0], self.estimates])
        return padded[idx]


def breslow_baseline(cohort: Cohort, psis: np.ndarray) -> BaselineHazard:
    """Breslow cumulative baseline hazard on the cohort grid.

    Increments |U_l| / sum_{R_l} exp(psi_j) are accumulated at the first grid
    boundary >= each event time (deaths at t_0 = 0 count toward t_1, keeping
    Lambda0(t_0) = 0); the curve is held constant beyond the last event.
    """
    psis = np.asarray(psis, dtype=np.float64)
    if psis.shape != (cohort.size,) or not np.all(np.isfinite(psis)):
        raise DataError("bad_psis", "need one finite log-risk per subject")
    index = build_risk_sets(cohort)
    boundaries = cohort.grid.boundaries
    increments = np.zeros(boundaries.size, dtype=np.float64)
    for l in range(len(index)):
        r = index.risk_set(l)
        m = psis[r].max()
        denom_log = m + np.log(np.exp(psis[r] - m).sum())
        inc = index.event_set(l).size * np.exp(-denom_log)
        slot = int(np.searchsorted(boundaries, index.event_times[l], side="left"))
        slot = min(max(slot, 1), boundaries.size - 1)
        increments[slot] += inc
    return BaselineHazard(cohort.grid, np.cumsum(increments))


def predict_survival(baseline: BaselineHazard, psi: float) -> SurvivalCurve:
    """Proportional-hazards curve S(t_l) = exp(-Lambda0(t_l) * exp(psi))."""
    if not np.isfinite(psi):
        raise DataError("bad_psis", "log-risk must be finite")
    values = np.exp(-baseline.cumulative * np.exp(float(psi)))
    return SurvivalCurve(baseline.grid, values)


def kaplan_meier(times: np.ndarray, events: np.ndarray) -> KaplanMeierCurve:
    """Product-limit estimator S-hat(t) = prod_{t_l <= t} (1 - d_l / n_l).

    For IPCW weights call this with the censoring indicator (events flipped).
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise DataError("empty_cohort", "kaplan_meier needs at least one subject")
    if np.any(times < 0):
        raise DataError("negative_time", "kaplan_meier times must be non-negative")
    uniq = np.unique(times)
    at_risk = np.empty(uniq.size, dtype=np.int64)
    n_events = np.empty(uniq.size, dtype=np.int64)
    order = np.argsort(times, kind="stable")
    sorted_times = times[order]
    for k, t in enumerate(uniq):
        at_risk[k] = times.size - np.searchsorted(sorted_times, t, side="left")
        n_events[k] = int((events & (times == t)).sum())
    estimates = np.cumprod(1.0 - n_events / at_risk)
    return KaplanMeierCurve(uniq, estimates, at_risk, n_events)


def censoring_curve(times: np.ndarray, events: np.ndarray) -> KaplanMeierCurve:
    """Kaplan-Meier estimate G-hat of the censoring distribution."""
    return kaplan_meier(times, ~np.asarray(events, dtype=bool))


def write_survival_curve(curve: SurvivalCurve, path) -> None:
    """Export a curve as two-column delimited text (time, survival)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time,survival\n")
        for t, s in zip(curve.grid.boundaries, curve.values):
            fh.write(f"{int(t)},{float(s)!r}\n")
