"""Adam optimization of risk models with early stopping, CV, and grid search.

Epochs are 1-indexed. Mini-batch losses keep the full training cohort's event
count as the normalizer, so the summed per-epoch training loss is comparable
to the full-cohort loss.
All randomness flows from integer seed tuples through numpy Generators, so
(seed, config, cohort) determines every output bit-for-bit, including under
--jobs parallelism (each fold or grid cell owns a derived stream).
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import censoring_curve
from .core import Cohort, _frozen
from .errors import DataError, NumericError
from .likelihood import build_risk_sets, neg_avg_partial_log_likelihood, partial_likelihood_gradient, risk_set_index
from .metrics import (
    MetricReport,
    RiskScoreSet,
    aggregate_folds,
    cumulative_dynamic_auc,
    harrell_c_index,
    truncated_c_index,
)
from .models import build_model, get_state, risk_scores, set_state

logger = logging.getLogger("hazardnet.training")

METRIC_NAMES = ("c_index", "c_index_30", "auc_30", "auc_365")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 100
    early_stop_patience: int = 10
    min_delta: float = 1e-5
    dropout_rate: float = 0.6
    full_risk_sets: bool = False
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    train_fraction: float = 0.70
    val_fraction: float = 0.10
    test_fraction: float = 0.20
    folds: int = 5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.folds < 2:
            raise ValueError("batch_size, max_epochs >= 1 and folds >= 2 required")
        if self.early_stop_patience < 0 or self.min_delta < 0:
            raise ValueError("early_stop_patience and min_delta must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be positive and sum to 1, got {fr}")


@dataclass(frozen=True)
class TrainHistory:
    train_loss: np.ndarray
    val_loss: np.ndarray
    stopped_epoch: int
    best_epoch: int

    def __post_init__(self):
        object.__setattr__(self, "train_loss", _frozen(np.asarray(self.train_loss, dtype=np.float64)))
        object.__setattr__(self, "val_loss", _frozen(np.asarray(self.val_loss, dtype=np.float64)))
        if self.train_loss.shape != self.val_loss.shape:
            raise ValueError("train and validation loss traces must have equal length")
        if self.stopped_epoch != self.train_loss.size:
            raise ValueError("stopped_epoch must equal the number of recorded epochs")
        if not 1 <= self.best_epoch <= self.stopped_epoch:
            raise ValueError("best_epoch out of range")


class TrainingDiverged(NumericError):
    """Loss became non-finite; carries the history recorded so far."""

    def __init__(self, message: str, history: TrainHistory | None):
        super().__init__(message)
        self.history = history


class AdamState:
    """First/second moment accumulators plus the step counter."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}
        self.t = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update, applied to params in place."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at step {state.t} (block {name})")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


def _eval_loss(model, cohort: Cohort, index) -> float:
    psis = risk_scores(model, cohort)
    return neg_avg_partial_log_likelihood(psis, index, cohort.num_events)


def train(model, train_cohort: Cohort, val_cohort: Cohort, config: TrainConfig, rng=None):
    """Fit model by mini-batch Adam on the partial-likelihood loss.

    Per epoch: shuffle subjects, step over batches (risk sets rebuilt within
    each batch, losses normalized by the cohort's event count), then score the
    validation cohort in evaluation mode. With full_risk_sets=True the epoch
    is a single full-cohort step, so risk sets are never truncated. Stops when validation loss has not
    improved by min_delta for more than early_stop_patience epochs, and always
    restores the best-epoch parameters. Returns (model, TrainHistory).
    """
    if train_cohort.dimension != val_cohort.dimension or train_cohort.sequence_length != val_cohort.sequence_length:
        raise DataError("dimension_mismatch", "train and validation cohorts disagree on d or L")
    rng = rng if rng is not None else np.random.default_rng([config.seed])
    X = train_cohort.covariate_tensor()
    present = train_cohort.present_matrix()
    times = train_cohort.times()
    events = train_cohort.events()
    n = train_cohort.size
    n_events = train_cohort.num_events
    val_index = build_risk_sets(val_cohort)
    params = model.parameters()
    state = AdamState(params)
    model.dropout_rate = config.dropout_rate
    train_trace: list[float] = []
    val_trace: list[float] = []
    best_val = np.inf
    best_epoch = 0
    best_state = get_state(model)
    since_best = 0
    stopped = 0
    step_size = n if config.full_risk_sets else config.batch_size
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(n)
            epoch_loss = 0.0
            model.training = True
            try:
                for start in range(0, n, step_size):
                    idx = order[start : start + step_size]
                    batch_index = risk_set_index(times[idx], events[idx])
                    psis, cache = model.forward_batch(X[idx], present[idx], rng)
                    epoch_loss += neg_avg_partial_log_likelihood(psis, batch_index, n_events)
                    dpsi = partial_likelihood_gradient(psis, batch_index, n_events)
                    grads = model.backward_batch(cache, dpsi)
                    adam_step(params, grads, state, config)
            finally:
                model.training = False
            val_loss = _eval_loss(model, val_cohort, val_index)
            if not np.isfinite(epoch_loss) or not np.isfinite(val_loss):
                raise NumericError(f"loss diverged at epoch {epoch}")
            train_trace.append(epoch_loss)
            val_trace.append(val_loss)
            logger.info("epoch %d train_loss %.6f val_loss %.6f", epoch, epoch_loss, val_loss)
            stopped = epoch
            if val_loss < best_val - config.min_delta:
                best_val = val_loss
                best_epoch = epoch
                best_state = get_state(model)
                since_best = 0
            else:
                since_best += 1
                if since_best > config.early_stop_patience:
                    break
    except NumericError as exc:
        partial = None
        if train_trace:
            partial = TrainHistory(np.array(train_trace), np.array(val_trace), stopped, max(best_epoch, 1))
        raise TrainingDiverged(str(exc), partial) from exc
    set_state(model, best_state)
    history = TrainHistory(np.array(train_trace), np.array(val_trace), stopped, best_epoch)
    return model, history


def write_history(history: TrainHistory, path) -> None:
    """Per-epoch losses as delimited text; best epoch = argmin of val_loss."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for k in range(history.stopped_epoch):
            fh.write(f"{k + 1},{float(history.train_loss[k])!r},{float(history.val_loss[k])!r}\n")


def _stratified_partition(indices: np.ndarray, fractions, rng) -> list[np.ndarray]:
    """Shuffle indices, cut at cumulative fractions (largest-part remainder)."""
    shuffled = rng.permutation(indices)
    cuts = np.floor(np.cumsum(fractions)[:-1] * indices.size + 0.5).astype(int)
    return np.split(shuffled, cuts)


def stratified_split(times, events, fractions, rng):
    """Index sets per fraction, stratified on the event flag."""
    events = np.asarray(events, dtype=bool)
    all_idx = np.arange(events.size)
    parts = [
        _stratified_partition(all_idx[events], fractions, rng),
        _stratified_partition(all_idx[~events], fractions, rng),
    ]
    out = []
    for k in range(len(list(fractions))):
        merged = np.sort(np.concatenate([parts[0][k], parts[1][k]]))
        out.append(merged)
    return tuple(out)


def stratified_folds(times, events, k: int, rng):
    """k disjoint covering test folds, each with events when num_events >= k."""
    events = np.asarray(events, dtype=bool)
    if int(events.sum()) < k:
        raise DataError("too_few_events", f"need at least {k} events for {k} folds")
    all_idx = np.arange(events.size)
    ev_chunks = np.array_split(rng.permutation(all_idx[events]), k)
    cs_chunks = np.array_split(rng.permutation(all_idx[~events]), k)
    return tuple(np.sort(np.concatenate([e, c])) for e, c in zip(ev_chunks, cs_chunks))


@dataclass(frozen=True)
class ModelSpec:
    """Variant name plus architecture knobs; builds fresh models per fold/cell."""

    kind: str
    hidden: tuple = (128,)
    hidden_size: int = 64
    mask_aware: bool = False

    def __post_init__(self):
        if self.kind not in ("linear", "mlp", "lstm"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def build(self, dimension: int, sequence_length: int, dropout_rate: float, rng):
        return build_model(
            self.kind,
            dimension,
            sequence_length,
            rng,
            hidden=self.hidden,
            hidden_size=self.hidden_size,
            dropout_rate=dropout_rate,
            mask_aware=self.mask_aware,
        )

    def param_count(self, dimension: int, sequence_length: int) -> int:
        return self.build(dimension, sequence_length, 0.0, np.random.default_rng(0)).num_parameters()


def evaluate_scores(scores: RiskScoreSet, censoring, c_horizon: float = 30.0, auc_horizons=(30.0, 365.0)) -> dict[str, float]:
    """The four standard metrics; horizons without cases/controls yield nan."""
    out = {"c_index": harrell_c_index(scores)}
    try:
        out[f"c_index_{c_horizon:g}"] = truncated_c_index(scores, c_horizon)
    except NumericError:
        out[f"c_index_{c_horizon:g}"] = float("nan")
    for tau in auc_horizons:
        try:
            out[f"auc_{tau:g}"] = cumulative_dynamic_auc(scores, tau, censoring)
        except NumericError:
            out[f"auc_{tau:g}"] = float("nan")
    return out


@dataclass(frozen=True)
class CVResult:
    reports: tuple
    fold_assignments: tuple
    histories: tuple


def _run_fold(cohort: Cohort, spec: ModelSpec, config: TrainConfig, fold_id: int, fold_idx, rest_idx):
    times = cohort.times()
    events = cohort.events()
    split_rng = np.random.default_rng([config.seed, fold_id, 0])
    tv = config.train_fraction + config.val_fraction
    tr_rel, va_rel = stratified_split(
        times[rest_idx], events[rest_idx], (config.train_fraction / tv, config.val_fraction / tv), split_rng
    )
    train_c = cohort.subset(rest_idx[tr_rel])
    val_c = cohort.subset(rest_idx[va_rel])
    test_c = cohort.subset(fold_idx)
    model = spec.build(cohort.dimension, cohort.sequence_length, config.dropout_rate, np.random.default_rng([config.seed, fold_id, 1]))
    model, history = train(model, train_c, val_c, config, rng=np.random.default_rng([config.seed, fold_id, 2]))
    held_in = np.concatenate([train_c.times(), val_c.times()])
    held_in_ev = np.concatenate([train_c.events(), val_c.events()])
    cens = censoring_curve(held_in, held_in_ev)
    psis = risk_scores(model, test_c)
    sc = RiskScoreSet(psis, test_c.times(), test_c.events())
    return evaluate_scores(sc, cens), history


def cross_validate(cohort: Cohort, spec: ModelSpec, config: TrainConfig, jobs: int = 1) -> CVResult:
    """Event-stratified k-fold CV reporting the four standard metrics.

    Each fold holds out 1/k of subjects as test; the remainder is split 7:1
    into train and validation. Fold RNG streams derive from (seed, fold_id),
    so results do not depend on jobs.
    """
    times = cohort.times()
    events = cohort.events()
    fold_rng = np.random.default_rng([config.seed, 99])
    folds = stratified_folds(times, events, config.folds, fold_rng)
    all_idx = np.arange(cohort.size)
    tasks = []
    for f, fold_idx in enumerate(folds):
        rest = np.setdiff1d(all_idx, fold_idx)
        tasks.append((cohort, spec, config, f, fold_idx, rest))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, *zip(*tasks)))
    else:
        results = [_run_fold(*t) for t in tasks]
    metric_keys = list(results[0][0].keys())
    reports = tuple(aggregate_folds(m, [r[0][m] for r in results]) for m in metric_keys)
    return CVResult(reports, folds, tuple(r[1] for r in results))


@dataclass(frozen=True)
class GridCell:
    params: tuple
    val_loss: float
    val_c_index: float
    param_count: int
    failed: bool


_SPEC_FIELDS = ("kind", "hidden", "hidden_size", "mask_aware")
_CONFIG_FIELDS = tuple(TrainConfig.__dataclass_fields__)


def _apply_cell(spec: ModelSpec, config: TrainConfig, cell: dict):
    spec_over = {k: v for k, v in cell.items() if k in _SPEC_FIELDS}
    conf_over = {k: v for k, v in cell.items() if k in _CONFIG_FIELDS}
    unknown = set(cell) - set(spec_over) - set(conf_over)
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}")
    if spec_over:
        spec = replace(spec, **spec_over)
    if conf_over:
        config = replace(config, **conf_over)
    return spec, config


def _run_cell(cohort: Cohort, spec: ModelSpec, config: TrainConfig, cell: dict, cell_id: int, split):
    tr_idx, va_idx, _ = split
    spec_c, config_c = _apply_cell(spec, config, cell)
    train_c = cohort.subset(tr_idx)
    val_c = cohort.subset(va_idx)
    model = spec_c.build(cohort.dimension, cohort.sequence_length, config_c.dropout_rate, np.random.default_rng([config.seed, 7, cell_id, 1]))
    n_params = model.num_parameters()
    key = tuple(sorted(cell.items(), key=lambda kv: kv[0]))
    try:
        model, history = train(model, train_c, val_c, config_c, rng=np.random.default_rng([config.seed, 7, cell_id, 2]))
    except TrainingDiverged:
        return GridCell(key, float("nan"), float("nan"), n_params, True)
    psis = risk_scores(model, val_c)
    sc = RiskScoreSet(psis, val_c.times(), val_c.events())
    try:
        c = harrell_c_index(sc)
    except NumericError:
        c = float("nan")
    return GridCell(key, float(history.val_loss[history.best_epoch - 1]), c, n_params, False)


def grid_search(cohort: Cohort, grid: dict[str, list], base_spec: ModelSpec, config: TrainConfig, select_on: str = "loss", jobs: int = 1):
    """Exhaustive sweep over the grid's Cartesian product on one 70/10/20 split.

    Cells are ranked by validation loss (or validation C-index with
    select_on="cindex"), ties broken by parameter count then by lexicographic
    parameter order. Failed (diverged) cells are kept in the leaderboard but
    never selected. Returns (best_cell, leaderboard).
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must be non-empty with non-empty value lists")
    if select_on not in ("loss", "cindex"):
        raise ValueError(f"unknown select_on {select_on!r}")
    keys = sorted(grid)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    split_rng = np.random.default_rng([config.seed, 7, 0])
    split = stratified_split(
        cohort.times(), cohort.events(), (config.train_fraction, config.val_fraction, config.test_fraction), split_rng
    )
    tasks = [(cohort, base_spec, config, cell, k, split) for k, cell in enumerate(cells)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, *zip(*tasks)))
    else:
        results = [_run_cell(*t) for t in tasks]

    def sort_key(cell: GridCell):
        if select_on == "loss":
            primary = np.inf if cell.failed else cell.val_loss
        else:
            primary = np.inf if cell.failed else -cell.val_c_index
        return (cell.failed, primary, cell.param_count, cell.params)

    leaderboard = sorted(results, key=sort_key)
    best = leaderboard[0]
    if best.failed:
        raise NumericError("every grid cell diverged")
    return best, leaderboard


def write_leaderboard(leaderboard, path) -> None:
    """Grid cells as delimited text, best first."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank,params,val_loss,val_c_index,param_count,status\n")
        for rank, cell in enumerate(leaderboard, start=1):
            params = ";".join(f"{k}={v}" for k, v in cell.params)
            status = "failed" if cell.failed else "ok"
            fh.write(f"{rank},{params},{float(cell.val_loss)!r},{float(cell.val_c_index)!r},{cell.param_count},{status}\n")
