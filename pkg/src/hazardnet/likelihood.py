"""Average negative partial log-likelihood over event times, and its gradient.

The loss for log-risks psi is

    -(1/N) * sum_l sum_{i in U_l} [ psi_i - log sum_{j in R_l} exp(psi_j) ]

where U_l holds the subjects dying at event time t_l, R_l the subjects still
at risk (z >= t_l), and N the number of deceased subjects used for
normalization. Tied deaths share the full risk set (Breslow convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Cohort
from .errors import NumericError


@dataclass(frozen=True)
class RiskSetIndex:
    """Risk sets for each event time, built from one sort.

    ``order`` sorts subjects by time ascending; R_l is the suffix
    ``order[risk_start[l]:]``, so construction is O(n log n) and each risk set
    is a zero-copy view.
    """

    event_times: np.ndarray          # sorted unique times with >= 1 event
    event_sets: tuple                # U_l: arrays of subject indices dying at t_l
    order: np.ndarray                # argsort of times, ascending
    risk_start: np.ndarray           # offset into `order` where z >= t_l begins
    num_subjects: int
    num_events: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "num_events", int(sum(u.size for u in self.event_sets)))

    def risk_set(self, l: int) -> np.ndarray:
        """R_l: indices of subjects with z >= event_times[l]."""
        return self.order[self.risk_start[l]:]

    def event_set(self, l: int) -> np.ndarray:
        """U_l: indices of subjects with an event at event_times[l]."""
        return self.event_sets[l]

    def __len__(self) -> int:
        return self.event_times.size


def risk_set_index(times: np.ndarray, events: np.ndarray) -> RiskSetIndex:
    """Build the risk-set index from raw time/event arrays.

    Zero-event inputs yield an empty index (used by mini-batch training,
    where event-free batches are skipped).
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    order = np.argsort(times, kind="stable")
    sorted_times = times[order]
    event_times = np.unique(times[events])
    risk_start = np.searchsorted(sorted_times, event_times, side="left")
    event_sets = []
    for t in event_times:
        event_sets.append(np.flatnonzero((times == t) & events))
    return RiskSetIndex(
        event_times=event_times,
        event_sets=tuple(event_sets),
        order=order,
        risk_start=risk_start,
        num_subjects=times.size,
    )


def build_risk_sets(cohort: Cohort) -> RiskSetIndex:
    """Risk-set index for a validated cohort (>= 1 event guaranteed)."""
    return risk_set_index(cohort.times(), cohort.events())


def _logsumexp(x: np.ndarray) -> float:
    m = x.max()
    return float(m + np.log(np.exp(x - m).sum()))


def neg_avg_partial_log_likelihood(psis: np.ndarray, index: RiskSetIndex, N: int) -> float:
    """Average negative partial log-likelihood of the given log-risks.

    ``N`` is the deceased count used for normalization: the index's own event
    count for full-cohort losses, the whole-dataset count in mini-batch mode
    (so that summing an epoch's batch losses matches the full normalization).
    """
    psis = np.asarray(psis, dtype=np.float64)
    if np.isnan(psis).any():
        raise NumericError("NaN log-risk passed to partial likelihood")
    if N <= 0:
        raise NumericError("partial likelihood needs N >= 1 deceased subjects")
    total = 0.0
    for l in range(len(index)):
        lse = _logsumexp(psis[index.risk_set(l)])
        u = index.event_set(l)
        total += psis[u].sum() - u.size * lse
    return -total / N


def partial_likelihood_gradient(psis: np.ndarray, index: RiskSetIndex, N: int) -> np.ndarray:
    """d loss / d psi_i, matching neg_avg_partial_log_likelihood.

    For each event time l, every i in R_l receives |U_l| * softmax_{R_l}(psi)_i
    and every i in U_l receives -1, all scaled by 1/N.
    """
    psis = np.asarray(psis, dtype=np.float64)
    if np.isnan(psis).any():
        raise NumericError("NaN log-risk passed to partial likelihood")
    grad = np.zeros_like(psis)
    for l in range(len(index)):
        r = index.risk_set(l)
        z = psis[r] - psis[r].max()
        w = np.exp(z)
        w /= w.sum()
        u = index.event_set(l)
        grad[r] += u.size * w
        grad[u] -= 1.0
    grad /= N
    return grad
