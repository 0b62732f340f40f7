"""Batch command line: tune, meta, predict, bv-curve, folds.

Every subcommand is deterministic given its flags and writes its outputs
atomically (temp file + rename), so repeated runs are byte-identical and
never corrupt previous results.  Exit codes: 0 success, 2 flag/usage
errors, 3 data errors, 4 numeric or fit errors.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile

import numpy as np

from .crossval import grid_report_csv, grid_search, mce, mse
from .dataset import (
    CLASSIFICATION,
    REGRESSION,
    Dataset,
    DatasetError,
    _parse_float,
    load_csv,
    read_csv_table,
    train_test_split,
)
from .folds import make_folds, make_stratified_folds
from .learners import FAMILY_PARAMS, HyperGrid, LearnerError, LearnerSpec, fit, predict
from .metalearn import (
    BEST_OVERALL,
    FIRST_BEATING_BENCHMARK,
    DgpConfig,
    MetaConfig,
    bias_variance_curve,
    bv_curve_csv,
    default_eval_points,
    meta_report_csv,
    sample_training_set,
    tune_all,
)
from . import model_io
from .model_io import ModelFormatError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEFAULT_SEED = 42

_TASK_ALIASES = {
    "regress": REGRESSION,
    "regression": REGRESSION,
    "classify": CLASSIFICATION,
    "classification": CLASSIFICATION,
}


class UsageError(Exception):
    """Flag-level problem: reported on stderr, exit code 2."""


def _write_text(path: str, text: str) -> None:
    """Atomic write: the file appears complete or not at all."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tunekit-tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_scalar(token: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def parse_axis(text: str):
    """One grid axis: ``name=v1,v2,...`` or the range form ``name=a:b:step``."""
    name, sep, body = text.partition("=")
    name = name.strip()
    if not sep or not name or not body.strip():
        raise UsageError(f"bad grid axis {text!r}; expected name=v1,v2,... or name=a:b:step")
    body = body.strip()
    if ":" in body:
        parts = body.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad range {body!r}; expected a:b:step")
        a, b, step = (_parse_scalar(t) for t in parts)
        if not all(isinstance(v, (int, float)) for v in (a, b, step)) or step <= 0 or b < a:
            raise UsageError(f"bad range {body!r}; need numeric a <= b and step > 0")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        values = [a + i * step for i in range(count)]
        if all(isinstance(v, int) for v in (a, b, step)):
            values = [int(v) for v in values]
        return name, values
    return name, [_parse_scalar(t) for t in body.split(",") if t.strip() != ""]


def _build_grid(family: str, axis_texts, task: str) -> HyperGrid:
    axes = {}
    for text in axis_texts:
        name, values = parse_axis(text)
        if name in axes:
            raise UsageError(f"grid axis {name!r} given twice")
        axes[name] = values
    try:
        return HyperGrid(family=family, axes=axes, task=task)
    except LearnerError as exc:
        raise UsageError(str(exc)) from None


def parse_roster_line(line: str, task: str) -> HyperGrid:
    """Roster mini-language: ``family axis=... axis=...`` per line."""
    parts = line.split()
    if not parts:
        raise UsageError("empty roster line")
    return _build_grid(parts[0], parts[1:], task)


def _read_roster(path: str, task: str) -> list[HyperGrid]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except FileNotFoundError:
        raise DatasetError(f"no such roster file: {path}") from None
    grids = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        grids.append(parse_roster_line(line, task))
    if not grids:
        raise UsageError(f"roster file {path} defines no learners")
    return grids


def _task(args) -> str:
    return _TASK_ALIASES[args.task]


def _load(args) -> Dataset:
    return load_csv(args.data, args.target, _task(args))


def _check_kfolds(n_folds: int, n: int) -> None:
    if n_folds < 2 or n_folds > n:
        raise UsageError(f"--kfolds {n_folds} is out of range for {n} rows")


def _out(args, name: str) -> str:
    return os.path.join(args.outdir, name)


def _metric_name(task: str) -> str:
    return "mce" if task == CLASSIFICATION else "mse"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------
def cmd_tune(args) -> int:
    task = _task(args)
    grid = _build_grid(args.learner, args.grid, task)  # flags first, data later
    data = _load(args)
    train = data
    test = None
    if args.test_fraction is not None:
        train, test = train_test_split(data, args.test_fraction, args.seed)
    _check_kfolds(args.kfolds, train.n)

    report = grid_search(grid, train, args.kfolds, args.seed, one_se=args.one_se, jobs=args.jobs)
    best = report.best
    model = fit(best.spec, train, args.seed)
    _write_text(_out(args, "grid_report.csv"), grid_report_csv(report))
    _write_text(_out(args, "best_model.txt"), model_io.dumps(model))

    params = " ".join(f"{k}={v!r}" for k, v in best.spec.params.items())
    print(
        f"winner: family={best.spec.family} {params} "
        f"{report.metric}={best.cv_estimate!r} std_error={best.std_error!r}"
    )
    if test is not None:
        preds = predict(model, test.features)
        err = mce(test.target, preds) if task == CLASSIFICATION else mse(test.target, preds)
        print(f"holdout_{_metric_name(task)}={err!r} (n_test={test.n})")
    return EXIT_OK


def cmd_meta(args) -> int:
    task = _task(args)
    strategy = BEST_OVERALL if args.strategy == "best" else FIRST_BEATING_BENCHMARK
    if strategy == FIRST_BEATING_BENCHMARK and args.benchmark is None:
        raise UsageError("--strategy first requires --benchmark")
    roster = _read_roster(args.roster, task)
    data = _load(args)
    _check_kfolds(args.kfolds, data.n)
    config = MetaConfig(
        roster=tuple(roster),
        n_folds=args.kfolds,
        seed=args.seed,
        strategy=strategy,
        benchmark=args.benchmark,
        ensemble=args.ensemble,
        ensemble_size=args.ensemble_size,
    )
    report = tune_all(config, data, jobs=args.jobs)
    _write_text(_out(args, "meta_report.csv"), meta_report_csv(report))
    win = report.selected_result
    _write_text(_out(args, "winner_model.txt"), model_io.dumps(win.model))
    for rank, idx in enumerate(report.ensemble_members):
        member = report.results[idx]
        _write_text(
            _out(args, f"ensemble_member_{rank}_{member.family}.txt"),
            model_io.dumps(member.model),
        )
    print(
        f"winner: family={win.family} cv_estimate={win.cv_estimate!r} "
        f"reason={report.stopping_reason!r} tuned={len(report.results)}"
    )
    return EXIT_OK


def _predict_frame(args, model):
    header, rows = read_csv_table(args.data)
    target_idx = None
    if args.target is not None:
        if args.target not in header:
            raise DatasetError(f"target column {args.target!r} not found in {args.data}")
        target_idx = header.index(args.target)
    feature_cols = [i for i in range(len(header)) if i != target_idx]
    if len(feature_cols) != model.n_features:
        raise DatasetError(
            f"model expects {model.n_features} feature columns, "
            f"file {args.data} provides {len(feature_cols)}"
        )
    X = np.empty((len(rows), len(feature_cols)))
    for i, row in enumerate(rows):
        for j, c in enumerate(feature_cols):
            X[i, j] = _parse_float(row[c], i + 1, header[c])
    actual = None
    if target_idx is not None:
        if model.task == CLASSIFICATION:
            code_of = {label: code for code, label in enumerate(model.class_names)}
            actual = np.empty(len(rows), dtype=np.int64)
            for i, row in enumerate(rows):
                label = row[target_idx].strip()
                if label not in code_of:
                    raise DatasetError(
                        f"label {label!r} at row {i + 1} is unknown to the model "
                        f"(classes: {', '.join(model.class_names)})"
                    )
                actual[i] = code_of[label]
        else:
            actual = np.array(
                [_parse_float(row[target_idx], i + 1, args.target) for i, row in enumerate(rows)]
            )
    return X, actual


def cmd_predict(args) -> int:
    model = model_io.load(args.model)
    X, actual = _predict_frame(args, model)
    preds = predict(model, X)

    lines = []
    if actual is None:
        lines.append("row_index,prediction")
        for i in range(len(preds)):
            lines.append(f"{i},{_display(preds[i], model)}")
    else:
        lines.append("row_index,prediction,actual,error")
        for i in range(len(preds)):
            if model.task == CLASSIFICATION:
                err = int(preds[i] != actual[i])
                lines.append(
                    f"{i},{_display(preds[i], model)},{_display(actual[i], model)},{err}"
                )
            else:
                lines.append(
                    f"{i},{preds[i]!r},{actual[i]!r},{(actual[i] - preds[i])!r}"
                )
        if model.task == CLASSIFICATION:
            lines.append(f"# mce={mce(actual, preds)!r}")
        else:
            lines.append(f"# mse={mse(actual, preds)!r}")
    _write_text(_out(args, "predictions.csv"), "\n".join(lines) + "\n")
    print(f"wrote predictions for {len(preds)} rows")
    return EXIT_OK


def _display(value, model) -> str:
    if model.task == CLASSIFICATION:
        return model.class_names[int(value)]
    return repr(float(value))


def cmd_bv_curve(args) -> int:
    axis_name, axis_values = parse_axis(args.axis)
    fixed = {}
    for text in args.fixed:
        name, values = parse_axis(text)
        if len(values) != 1:
            raise UsageError(f"--fixed {text!r} must carry exactly one value")
        fixed[name] = values[0]
    dgp = DgpConfig(
        fname=args.dgp,
        noise_sd=args.sigma,
        n_train=args.n_train,
        eval_points=default_eval_points(args.eval_points),
        n_replications=args.reps,
        seed=args.seed,
    )
    # validate the axis against the family before any heavy work
    try:
        bias = bias_variance_curve(dgp, args.family, axis_name, axis_values[:0] or axis_values[:1], fixed)
    except LearnerError as exc:
        raise UsageError(str(exc)) from None
    del bias
    points = bias_variance_curve(dgp, args.family, axis_name, axis_values, fixed)
    _write_text(_out(args, "bv_curve.csv"), bv_curve_csv(points))
    print(f"wrote bv_curve.csv with {len(points)} complexity values")
    return EXIT_OK


def cmd_folds(args) -> int:
    if args.data is None and args.n is None:
        raise UsageError("folds needs --n or --data")
    if args.stratify:
        if args.data is None or args.target is None or args.task is None:
            raise UsageError("--stratify requires --data, --target, and --task")
        data = load_csv(args.data, args.target, _task(args))
        if data.task != CLASSIFICATION:
            raise UsageError("--stratify requires a classification task")
        _check_kfolds(args.kfolds, data.n)
        assignment = make_stratified_folds(data.target, args.kfolds, args.seed)
    else:
        if args.data is not None:
            if args.target is not None and args.task is not None:
                n = load_csv(args.data, args.target, _task(args)).n
            else:
                n = len(read_csv_table(args.data)[1])
        else:
            n = args.n
        _check_kfolds(args.kfolds, n)
        assignment = make_folds(n, args.kfolds, args.seed)
    lines = ["row_index,fold_id"]
    lines += [f"{i},{int(assignment.fold_of[i])}" for i in range(assignment.n)]
    _write_text(_out(args, "folds.csv"), "\n".join(lines) + "\n")
    print(f"wrote folds.csv: n={assignment.n} folds={assignment.n_folds}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def _default_jobs() -> int:
    raw = os.environ.get("TUNEKIT_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_common_data_flags(sub, required: bool = True):
    sub.add_argument("--data", required=required, help="CSV file with a header row")
    sub.add_argument("--target", required=required, help="name of the target column")
    sub.add_argument(
        "--task",
        required=required,
        choices=sorted(_TASK_ALIASES),
        help="regress(ion) or classif(y/ication)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tunekit",
        description="Cross-validated tuning, learner selection, and ensembling for tabular data.",
    )
    parser.add_argument("--version", action="version", version="tunekit 0.1.0")
    subs = parser.add_subparsers(dest="command", required=True)

    tune = subs.add_parser("tune", help="grid-search one learner family")
    _add_common_data_flags(tune)
    tune.add_argument("--learner", required=True, help="learner family name")
    tune.add_argument(
        "--grid",
        action="append",
        required=True,
        metavar="NAME=V1,V2|A:B:STEP",
        help="one hyperparameter axis; repeat for the cartesian product",
    )
    tune.add_argument("--kfolds", type=int, default=5)
    tune.add_argument("--seed", type=int, default=DEFAULT_SEED)
    tune.add_argument("--test-fraction", type=float, default=None)
    tune.add_argument("--one-se", action="store_true",
                      help="pick the simplest spec within one standard error of the best")
    tune.add_argument("--jobs", type=int, default=_default_jobs())
    tune.add_argument("--outdir", default=".")
    tune.set_defaults(func=cmd_tune)

    meta = subs.add_parser("meta", help="tune a roster of families and select one")
    _add_common_data_flags(meta)
    meta.add_argument("--roster", required=True,
                      help="file with one 'family axis=... axis=...' line per learner")
    meta.add_argument("--kfolds", type=int, default=5)
    meta.add_argument("--seed", type=int, default=DEFAULT_SEED)
    meta.add_argument("--strategy", choices=("best", "first"), default="best")
    meta.add_argument("--benchmark", type=float, default=None,
                      help="error threshold for --strategy first (select when cv error <= benchmark)")
    meta.add_argument("--ensemble", action="store_true")
    meta.add_argument("--ensemble-size", type=int, default=1)
    meta.add_argument("--jobs", type=int, default=_default_jobs())
    meta.add_argument("--outdir", default=".")
    meta.set_defaults(func=cmd_meta)

    pred = subs.add_parser("predict", help="apply a saved model to a CSV file")
    pred.add_argument("--model", required=True, help="model file written by tune/meta")
    pred.add_argument("--data", required=True)
    pred.add_argument("--target", default=None,
                      help="optional: include actual/error columns and a summary line")
    pred.add_argument("--outdir", default=".")
    pred.set_defaults(func=cmd_predict)

    bv = subs.add_parser("bv-curve", help="variance/bias decomposition along a complexity axis")
    bv.add_argument("--dgp", required=True, choices=("linear", "sine", "step"))
    bv.add_argument("--family", required=True)
    bv.add_argument("--axis", required=True, metavar="NAME=V1,V2,...")
    bv.add_argument("--fixed", action="append", default=[], metavar="NAME=VALUE",
                    help="pin a non-axis hyperparameter")
    bv.add_argument("--reps", type=int, default=200)
    bv.add_argument("--sigma", type=float, default=0.3)
    bv.add_argument("--n-train", type=int, default=200)
    bv.add_argument("--eval-points", type=int, default=21)
    bv.add_argument("--seed", type=int, default=DEFAULT_SEED)
    bv.add_argument("--outdir", default=".")
    bv.set_defaults(func=cmd_bv_curve)

    folds = subs.add_parser("folds", help="write a fold assignment as CSV")
    folds.add_argument("--n", type=int, default=None, help="row count (alternative to --data)")
    _add_common_data_flags(folds, required=False)
    folds.add_argument("--kfolds", type=int, required=True)
    folds.add_argument("--seed", type=int, default=DEFAULT_SEED)
    folds.add_argument("--stratify", action="store_true")
    folds.add_argument("--outdir", default=".")
    folds.set_defaults(func=cmd_folds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on flag errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ModelFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LearnerError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
