"""hzrd command-line tool: simulate, train, evaluate, cv, gridsearch, report.

Exit codes are stable for scripting: 0 success, 1 usage error, 2 data error,
3 numeric failure. The HZRD_LOG environment variable (debug/info/warning/
error) controls log verbosity. All commands are deterministic given their
flags; every random stream derives from --seed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .baseline import breslow_baseline, censoring_curve, kaplan_meier, predict_survival, write_survival_curve
from .data_io import (
    SyntheticSpec,
    load_cohort,
    read_ground_truth,
    save_cohort,
    synthesize_cohort,
    write_ground_truth,
)
from .errors import DataError, NumericError
from .metrics import RiskScoreSet, read_metric_reports, single_value_report, write_metric_reports
from .models import load_model, risk_scores, save_model
from .training import (
    METRIC_NAMES,
    ModelSpec,
    TrainConfig,
    cross_validate,
    evaluate_scores,
    grid_search,
    stratified_split,
    train,
    write_history,
    write_leaderboard,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    name = os.environ.get("HZRD_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _add_train_flags(p) -> None:
    p.add_argument("--lr", type=float, default=1e-4, help="learning rate (default 1e-4)")
    p.add_argument("--batch-size", type=int, default=256, help="mini-batch size (default 256)")
    p.add_argument("--epochs", type=int, default=100, help="maximum epochs (default 100)")
    p.add_argument("--patience", type=int, default=10, help="early-stop patience in epochs (default 10)")
    p.add_argument("--min-delta", type=float, default=1e-5, help="minimum val-loss improvement (default 1e-5)")
    p.add_argument("--dropout", type=float, default=0.6, help="dropout rate (default 0.6)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random stream (default 0)")


def _add_model_flags(p) -> None:
    p.add_argument("--model", required=True, choices=("linear", "mlp", "lstm"), help="risk model variant")
    p.add_argument("--hidden", default="128", help="MLP hidden widths, comma-separated (default 128)")
    p.add_argument("--hidden-size", type=int, default=64, help="LSTM hidden size (default 64)")
    p.add_argument("--mask-aware", action="store_true", help="LSTM skips zero-padded slots")


def _config_from(args, folds: int = 5) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        min_delta=args.min_delta,
        dropout_rate=args.dropout,
        seed=args.seed,
        folds=folds,
    )


def _spec_from(args) -> ModelSpec:
    hidden = tuple(int(h) for h in str(args.hidden).split(",") if h)
    return ModelSpec(kind=args.model, hidden=hidden, hidden_size=args.hidden_size, mask_aware=args.mask_aware)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _split_parts(cohort, config: TrainConfig):
    rng = np.random.default_rng([config.seed, 5])
    fractions = (config.train_fraction, config.val_fraction, config.test_fraction)
    return stratified_split(cohort.times(), cohort.events(), fractions, rng)


def cmd_simulate(args) -> int:
    if args.beta is not None:
        beta = np.array([float(v) for v in args.beta.split(",")])
    else:
        beta = np.random.default_rng([args.seed, 17]).normal(0.0, 0.5, args.dim)
    spec = SyntheticSpec(
        n=args.n,
        dimension=args.dim,
        beta=beta,
        baseline_rate=args.lambda0,
        censor_rate=args.lambda_c,
        seed=args.seed,
        sequence_mode=args.mode,
        sequence_length=args.length,
        drift_noise=args.drift_noise,
        admin_censor_time=args.admin_censor,
    )
    cohort, truth = synthesize_cohort(spec)
    out = _outdir(args)
    manifest_path = save_cohort(cohort, out)
    write_ground_truth([s.id for s in cohort.subjects], truth, out / "ground_truth.csv")
    frac = cohort.num_events / cohort.size
    print(f"wrote {manifest_path}")
    print(f"subjects {cohort.size}, events {cohort.num_events} ({frac:.1%}), d {cohort.dimension}, L {cohort.sequence_length}")
    return 0


def cmd_train(args) -> int:
    cohort = load_cohort(args.manifest)
    config = _config_from(args)
    spec = _spec_from(args)
    tr, va, _ = _split_parts(cohort, config)
    model = spec.build(cohort.dimension, cohort.sequence_length, config.dropout_rate, np.random.default_rng([args.seed, 1]))
    model, history = train(model, cohort.subset(tr), cohort.subset(va), config, rng=np.random.default_rng([args.seed, 2]))
    out = _outdir(args)
    save_model(model, out / "checkpoint.hzrd")
    write_history(history, out / "history.csv")
    best_val = history.val_loss[history.best_epoch - 1]
    print(f"wrote {out / 'checkpoint.hzrd'}")
    print(f"stopped epoch {history.stopped_epoch}, best epoch {history.best_epoch}, val loss {best_val:.6f}")
    return 0


def _scores_from_file(path, ids):
    try:
        truth_ids, truth = read_ground_truth(path)
        by_id = dict(zip(truth_ids, truth.psi))
    except DataError:
        by_id = {}
        with open(path, "r", encoding="utf-8") as fh:
            fh.readline()
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                sid, value = line.split(",")[:2]
                by_id[sid] = float(value)
    missing = [sid for sid in ids if sid not in by_id]
    if missing:
        raise DataError("missing_subject", f"scores file lacks subject(s) {missing[:5]}")
    return np.array([by_id[sid] for sid in ids])


def cmd_evaluate(args) -> int:
    if (args.checkpoint is None) == (args.scores is None):
        raise DataError("bad_flags", "pass exactly one of --checkpoint or --scores")
    cohort = load_cohort(args.manifest)
    config = _config_from(args)
    if args.split != "full":
        parts = dict(zip(("train", "val", "test"), _split_parts(cohort, config)))
        cohort = cohort.subset(parts[args.split])
    ids = [s.id for s in cohort.subjects]
    out = _outdir(args)
    if args.checkpoint is not None:
        model = load_model(args.checkpoint)
        psis = risk_scores(model, cohort)
        name = model.variant
        base = breslow_baseline(cohort, psis)
        write_survival_curve(predict_survival(base, 0.0), out / "baseline_survival.csv")
        km = kaplan_meier(cohort.times(), cohort.events())
        with open(out / "km.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("time,survival\n")
            for t, s in zip(km.times, km.estimates):
                fh.write(f"{float(t)!r},{float(s)!r}\n")
    else:
        psis = _scores_from_file(args.scores, ids)
        name = Path(args.scores).stem
    cens = censoring_curve(cohort.times(), cohort.events())
    metrics = evaluate_scores(RiskScoreSet(psis, cohort.times(), cohort.events()), cens)
    reports = [single_value_report(k, v) for k, v in metrics.items()]
    write_metric_reports(reports, out / "metrics.csv", model=name)
    for k, v in metrics.items():
        print(f"{name} {k} {v:.6f}")
    return 0


def cmd_cv(args) -> int:
    cohort = load_cohort(args.manifest)
    config = _config_from(args, folds=args.folds)
    spec = _spec_from(args)
    result = cross_validate(cohort, spec, config, jobs=args.jobs)
    out = _outdir(args)
    write_metric_reports(result.reports, out / "metrics.csv", model=args.model)
    for rep in result.reports:
        print(f"{args.model} {rep.metric} {rep.mean:.4f} ± {rep.ci_half_width:.4f}")
    return 0


def _parse_grid_value(key: str, raw: str):
    raw = raw.strip()
    if key == "hidden":
        return tuple(int(x) for x in raw.split("x"))
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


_GRID_ALIASES = {
    "lr": "learning_rate",
    "epochs": "max_epochs",
    "patience": "early_stop_patience",
    "dropout": "dropout_rate",
}


def _parse_grid(text: str) -> dict:
    grid = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"grid entries must look like key=v1,v2 (got {part!r})")
        key, values = part.split("=", 1)
        key = _GRID_ALIASES.get(key.strip(), key.strip())
        grid[key] = [_parse_grid_value(key, v) for v in values.split(",")]
    if not grid:
        raise ValueError("empty grid")
    return grid


def cmd_gridsearch(args) -> int:
    cohort = load_cohort(args.manifest)
    config = _config_from(args)
    spec = _spec_from(args)
    grid = _parse_grid(args.grid)
    best, leaderboard = grid_search(cohort, grid, spec, config, select_on=args.select_on, jobs=args.jobs)
    out = _outdir(args)
    write_leaderboard(leaderboard, out / "leaderboard.csv")
    params = ";".join(f"{k}={v}" for k, v in best.params)
    print(f"best {params or '(base config)'} val_loss {best.val_loss:.6f} val_c_index {best.val_c_index:.4f}")
    return 0


def cmd_report(args) -> int:
    loaded = [read_metric_reports(p) for p in args.metrics]
    by_model = {}
    for model, reports in loaded:
        by_model.setdefault(model, {}).update({r.metric: r for r in reports})
    extras = sorted({m for reps in by_model.values() for m in reps} - set(METRIC_NAMES))
    columns = [m for m in METRIC_NAMES if any(m in reps for reps in by_model.values())] + extras

    def c_key(model):
        rep = by_model[model].get("c_index")
        return -(rep.mean if rep else float("-inf"))

    models = sorted(by_model, key=lambda m: (c_key(m), m))
    cells = {}
    for model in models:
        for metric in columns:
            rep = by_model[model].get(metric)
            cells[model, metric] = f"{rep.mean:.3f} ± {rep.ci_half_width:.3f}" if rep else "-"
    name_w = max(len("model"), *(len(m) for m in models))
    col_w = {c: max(len(c), *(len(cells[m, c]) for m in models)) for c in columns}
    lines = ["  ".join(["model".ljust(name_w)] + [c.ljust(col_w[c]) for c in columns])]
    for model in models:
        lines.append("  ".join([model.ljust(name_w)] + [cells[model, c].ljust(col_w[c]) for c in columns]))
    table = "\n".join(lines) + "\n"
    out = _outdir(args)
    with open(out / "report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table)
    with open(out / "plot_data.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,metric,fold,value\n")
        for model in models:
            for metric in columns:
                rep = by_model[model].get(metric)
                if rep is None:
                    continue
                for k, v in enumerate(rep.fold_values):
                    fh.write(f"{model},{metric},{k},{float(v)!r}\n")
    if args.curves:
        with open(out / "curves.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("source,time,survival\n")
            for path in args.curves:
                stem = Path(path).stem
                with open(path, "r", encoding="utf-8") as src:
                    src.readline()
                    for line in src:
                        line = line.strip()
                        if line:
                            fh.write(f"{stem},{line}\n")
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hzrd", description="Survival modeling over covariate sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="generate a synthetic cohort with ground truth", add_help=True)
    p.add_argument("--n", type=int, required=True, help="number of subjects (>= 2)")
    p.add_argument("--dim", type=int, required=True, help="covariate dimension d")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--beta", default=None, help="true coefficients, comma-separated (default: drawn from seed)")
    p.add_argument("--lambda0", type=float, default=0.004, help="baseline event rate per day (default 0.004)")
    p.add_argument("--lambda-c", dest="lambda_c", type=float, default=0.002, help="censoring rate per day (default 0.002)")
    p.add_argument("--mode", choices=("static", "drifting"), default="static")
    p.add_argument("--length", type=int, default=3, help="sequence length L (default 3)")
    p.add_argument("--drift-noise", type=float, default=1.0)
    p.add_argument("--admin-censor", type=float, default=None, help="administrative censoring time in days")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a risk model on the train/val portions of a cohort")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a cohort with a checkpoint or a scores file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--scores", default=None, help="subject_id,score file (ground-truth sidecars work)")
    p.add_argument("--split", choices=("full", "train", "val", "test"), default="full",
                   help="evaluate the whole cohort or one split (seeded like train)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="k-fold cross-validation with aggregate metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1, help="parallel fold workers")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("gridsearch", help="exhaustive hyperparameter sweep on one split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", required=True, help='e.g. "lr=0.01,0.001;hidden_size=32,64"')
    p.add_argument("--select-on", choices=("loss", "cindex"), default="loss")
    p.add_argument("--jobs", type=int, default=1, help="parallel grid-cell workers")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("report", help="summary table from metric files")
    p.add_argument("--metrics", nargs="+", required=True, help="metric csv files from evaluate/cv")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", nargs="*", default=None, help="time,survival files to bundle for plotting")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
