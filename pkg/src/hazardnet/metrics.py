"""Concordance and time-dependent AUC metrics with fold aggregation.

The C-index is computed with strict inequalities,

    C = sum_{i,j} I(T_i > T_j) I(R_i < R_j) d_j / sum_{i,j} I(T_i > T_j) d_j,

so tied risk scores contribute 0 to the numerator by default; ``ties="half"``
awards them 0.5 for compatibility with common library conventions. Both the
O(n log n) sweep and the O(n^2) reference count identical integers, so they
agree exactly, ties included.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .baseline import KaplanMeierCurve
from .core import _frozen
from .errors import DataError, NumericError


@dataclass(frozen=True)
class RiskScoreSet:
    """Per-subject risk scores (higher = more at risk), times, and event flags."""

    scores: np.ndarray
    times: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        s = _frozen(np.asarray(self.scores, dtype=np.float64))
        t = _frozen(np.asarray(self.times, dtype=np.float64))
        e = _frozen(np.asarray(self.events, dtype=bool))
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "events", e)
        if not (s.shape == t.shape == e.shape) or s.ndim != 1:
            raise DataError("bad_scores", "scores, times, events must be equal-length vectors")
        if not np.all(np.isfinite(s)):
            raise DataError("bad_scores", "risk scores must be finite")


@dataclass(frozen=True)
class MetricReport:
    """A metric's per-fold values with mean and 95% CI half-width."""

    metric: str
    fold_values: np.ndarray
    mean: float
    ci_half_width: float
    n_folds: int

    def __post_init__(self):
        object.__setattr__(self, "fold_values", _frozen(np.asarray(self.fold_values, dtype=np.float64)))
        if self.ci_half_width < 0:
            raise DataError("bad_report", "CI half-width must be non-negative")


class _Fenwick:
    """Binary indexed tree over score ranks; integer counts only."""

    def __init__(self, n: int):
        self.tree = [0] * (n + 1)
        self.total = 0

    def add(self, rank: int) -> None:
        self.total += 1
        i = rank + 1
        while i < len(self.tree):
            self.tree[i] += 1
            i += i & (-i)

    def count_below(self, rank: int) -> int:
        """Number of inserted items with rank < rank."""
        s = 0
        i = rank
        while i > 0:
            s += self.tree[i]
            i -= i & (-i)
        return s


def _concordance_counts_fast(scores: RiskScoreSet, tau: float, ties: str) -> tuple[int, int]:
    """(2x numerator, denominator) over pairs with d_j = 1 and T_j <= tau."""
    t, r, d = scores.times, scores.scores, scores.events
    uniq_scores, ranks = np.unique(r, return_inverse=True)
    n_ranks = uniq_scores.size
    order_desc = np.argsort(-t, kind="stable")
    event_times = np.unique(t[d & (t <= tau)])[::-1]
    bit = _Fenwick(n_ranks)
    numer2 = 0
    denom = 0
    p = 0
    for et in event_times:
        while p < order_desc.size and t[order_desc[p]] > et:
            bit.add(int(ranks[order_desc[p]]))
            p += 1
        for j in np.flatnonzero(d & (t == et)):
            denom += bit.total
            below = bit.count_below(int(ranks[j]))
            numer2 += 2 * below
            if ties == "half":
                at = bit.count_below(int(ranks[j]) + 1) - below
                numer2 += at
    return numer2, denom


def _concordance_counts_reference(scores: RiskScoreSet, tau: float, ties: str) -> tuple[int, int]:
    """O(n^2) pair enumeration of the same integer counts."""
    t, r, d = scores.times, scores.scores, scores.events
    numer2 = 0
    denom = 0
    for j in np.flatnonzero(d & (t <= tau)):
        later = t > t[j]
        denom += int(later.sum())
        numer2 += 2 * int((later & (r < r[j])).sum())
        if ties == "half":
            numer2 += int((later & (r == r[j])).sum())
    return numer2, denom


def harrell_c_index(scores: RiskScoreSet, ties: str = "strict", method: str = "fast") -> float:
    """All-time C-index in [0, 1].

    ``method="fast"`` is the O(n log n) sweep, ``"reference"`` the O(n^2)
    enumeration; they agree exactly. Raises NumericError when no comparable
    pair (T_i > T_j with d_j = 1) exists.
    """
    return truncated_c_index(scores, np.inf, ties=ties, method=method)


def truncated_c_index(scores: RiskScoreSet, tau: float, ties: str = "strict", method: str = "fast") -> float:
    """C-index restricted to pairs whose event time T_j is <= tau."""
    if ties not in ("strict", "half"):
        raise ValueError(f"unknown ties mode {ties!r}")
    if method == "fast":
        numer2, denom = _concordance_counts_fast(scores, tau, ties)
    elif method == "reference":
        numer2, denom = _concordance_counts_reference(scores, tau, ties)
    else:
        raise ValueError(f"unknown method {method!r}")
    if denom == 0:
        raise NumericError("no comparable pairs")
    return numer2 / (2 * denom)


def cumulative_dynamic_auc(
    scores: RiskScoreSet,
    tau: float,
    censoring: KaplanMeierCurve,
    ties: str = "strict",
) -> float:
    """IPCW cumulative/dynamic AUC at horizon tau.

    Cases are subjects with an event by tau, controls survive past tau; each
    case is weighted by 1 / G-hat(T_i-) with G-hat the censoring Kaplan-Meier
    curve. Cases whose weight is undefined (G-hat(T-) = 0) are dropped with a
    warning.
    """
    if ties not in ("strict", "half"):
        raise ValueError(f"unknown ties mode {ties!r}")
    t, r, d = scores.times, scores.scores, scores.events
    case = d & (t <= tau)
    control = t > tau
    if not case.any() or not control.any():
        raise NumericError(f"no cases or no controls at horizon {tau}")
    g = censoring.left_limit(t[case])
    if np.any(g == 0.0):
        warnings.warn(
            f"dropping {int((g == 0).sum())} case(s) with zero censoring-survival weight",
            RuntimeWarning,
            stacklevel=2,
        )
        keep = g > 0.0
        if not keep.any():
            raise NumericError(f"all cases at horizon {tau} have undefined IPCW weight")
        case_scores = r[case][keep]
        w = 1.0 / g[keep]
    else:
        case_scores = r[case]
        w = 1.0 / g
    ctrl_sorted = np.sort(r[control])
    below = np.searchsorted(ctrl_sorted, case_scores, side="left").astype(np.float64)
    if ties == "half":
        at = np.searchsorted(ctrl_sorted, case_scores, side="right") - below
        below = below + 0.5 * at
    numer = float(np.dot(w, below))
    denom = float(w.sum()) * ctrl_sorted.size
    return numer / denom


def aggregate_folds(metric: str, values) -> MetricReport:
    """Mean +/- 1.96 * (sample std / sqrt(k)) across >= 2 fold values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise DataError("too_few_folds", "aggregation needs at least 2 folds")
    mean = float(values.mean())
    half = 1.96 * float(values.std(ddof=1)) / math.sqrt(values.size)
    return MetricReport(metric, values, mean, half, int(values.size))


def single_value_report(metric: str, value: float) -> MetricReport:
    """Degenerate one-fold report (no CI) for standalone evaluations."""
    return MetricReport(metric, np.array([value]), float(value), 0.0, 1)


def write_metric_reports(reports, path, model: str) -> None:
    """Emit reports as delimited text: one row per fold plus an aggregate row."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,metric,fold,value,mean,ci_low,ci_high\n")
        for rep in reports:
            lo = rep.mean - rep.ci_half_width
            hi = rep.mean + rep.ci_half_width
            for k, v in enumerate(rep.fold_values):
                fh.write(f"{model},{rep.metric},{k},{float(v)!r},{float(rep.mean)!r},{float(lo)!r},{float(hi)!r}\n")
            fh.write(f"{model},{rep.metric},all,{float(rep.mean)!r},{float(rep.mean)!r},{float(lo)!r},{float(hi)!r}\n")


def read_metric_reports(path) -> tuple[str, list[MetricReport]]:
    """Parse a file written by write_metric_reports."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "model,metric,fold,value,mean,ci_low,ci_high":
            raise DataError("corrupt_header", f"{path}: not a metric report file")
        model = None
        folds: dict[str, list[float]] = {}
        stats: dict[str, tuple[float, float]] = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise DataError("corrupt_header", f"{path}: malformed row {line!r}")
            row_model, metric, fold, value, mean, lo, hi = parts
            if model is None:
                model = row_model
            elif row_model != model:
                raise DataError("corrupt_header", f"{path}: mixed models in one file")
            if fold == "all":
                stats[metric] = (float(mean), (float(hi) - float(lo)) / 2.0)
            else:
                folds.setdefault(metric, []).append(float(value))
    if model is None or not stats:
        raise DataError("corrupt_header", f"{path}: no metric rows")
    reports = []
    for metric, (mean, half) in stats.items():
        values = folds.get(metric, [mean])
        reports.append(MetricReport(metric, np.array(values), mean, half, len(values)))
    return model, reports
