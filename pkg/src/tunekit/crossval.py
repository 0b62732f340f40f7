"""Fold-weighted cross-validation error and exhaustive grid search.

For each fold k the model is fitted on the other folds (standardization
included, so nothing leaks from the held-out rows) and scored on fold k:
mean squared error for regression, misclassification rate for
classification.  The cross-validated estimate is the fold-size-weighted
average sum_k (n_k / n) * err_k, and its standard error is
sd(fold errors, divisor K-1) / sqrt(K).
"""

from __future__ import annotations

import io
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import sub_seed
from .dataset import CLASSIFICATION, REGRESSION, Dataset
from .folds import FoldAssignment, make_folds, make_stratified_folds
from .learners import FAMILY_PARAMS, HyperGrid, LearnerSpec, complexity_rank, fit, predict

METRIC_MSE = "mse"
METRIC_MCE = "mce"


def mse(y, yhat) -> float:
    """Mean squared error (1/n) sum (y_i - yhat_i)^2."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or y.size < 1:
        raise ValueError("mse needs two equally long non-empty vectors")
    diff = y - yhat
    return float(diff @ diff / y.size)


def mce(labels, predicted) -> float:
    """Misclassification rate: fraction of positions where the codes differ."""
    labels = np.asarray(labels)
    predicted = np.asarray(predicted)
    if labels.shape != predicted.shape or labels.ndim != 1 or labels.size < 1:
        raise ValueError("mce needs two equally long non-empty vectors")
    return float(np.mean(labels != predicted))


@dataclass(frozen=True)
class CvResult:
    """Cross-validation outcome for one hyperparameter configuration.

    ``row_predictions[i]`` is the out-of-fold prediction for row i, i.e. the
    prediction made by the model fitted with row i's fold left out.
    """

    spec: LearnerSpec
    fold_errors: np.ndarray
    fold_sizes: np.ndarray
    cv_estimate: float
    std_error: float
    metric: str
    row_predictions: np.ndarray


def cv_error(spec: LearnerSpec, data: Dataset, folds: FoldAssignment, seed: int) -> CvResult:
    """Fold-weighted cross-validated error of one spec on one fold layout."""
    if folds.n != data.n:
        raise ValueError(f"fold assignment covers {folds.n} rows, dataset has {data.n}")
    classification = data.task == CLASSIFICATION
    k_folds = folds.n_folds
    counts = folds.counts
    fold_errors = np.empty(k_folds)
    row_predictions = np.empty(data.n, dtype=np.int64 if classification else np.float64)
    for k in range(k_folds):
        train_rows = folds.train_rows(k)
        test_rows = folds.test_rows(k)
        model = fit(spec, data.subset(train_rows), sub_seed(seed, "cv-fold", k))
        preds = predict(model, data.features[test_rows])
        row_predictions[test_rows] = preds
        truth = data.target[test_rows]
        fold_errors[k] = mce(truth, preds) if classification else mse(truth, preds)
    weights = counts / data.n
    estimate = float(weights @ fold_errors)
    std_error = float(np.std(fold_errors, ddof=1) / math.sqrt(k_folds))
    return CvResult(
        spec=spec,
        fold_errors=fold_errors,
        fold_sizes=counts,
        cv_estimate=estimate,
        std_error=std_error,
        metric=METRIC_MCE if classification else METRIC_MSE,
        row_predictions=row_predictions,
    )


@dataclass(frozen=True)
class GridReport:
    """All grid points of one search, in grid order, plus the winner index."""

    results: tuple
    winner: int
    metric: str
    n_folds: int
    seed: int

    @property
    def best(self) -> CvResult:
        return self.results[self.winner]


def _pick_winner(results, one_se: bool) -> int:
    best = min(
        range(len(results)),
        key=lambda i: (results[i].cv_estimate, complexity_rank(results[i].spec), i),
    )
    if not one_se:
        return best
    ceiling = results[best].cv_estimate + results[best].std_error
    candidates = [i for i in range(len(results)) if results[i].cv_estimate <= ceiling]
    return min(candidates, key=lambda i: (complexity_rank(results[i].spec), i))


def grid_search(
    grid: HyperGrid,
    data: Dataset,
    n_folds: int,
    seed: int,
    one_se: bool = False,
    jobs: int = 1,
) -> GridReport:
    """Exhaustively cross-validate every grid point and pick the winner.

    One fold assignment is drawn from (n, K, seed) — stratified for
    classification — and shared by every grid point, so configurations are
    compared on identical splits.  The winner minimizes the cv estimate;
    ties break toward the smaller complexity rank, then the lower grid
    index.  ``one_se=True`` instead picks the least complex point within
    one standard error of the minimum.

    Grid points are independent tasks: each derives its own seed from its
    grid index, so results are identical for any ``jobs`` (thread) count.
    """
    specs = grid.specs()
    if data.task == CLASSIFICATION:
        folds = make_stratified_folds(data.target, n_folds, seed)
    else:
        folds = make_folds(data.n, n_folds, seed)

    def evaluate(i: int) -> CvResult:
        return cv_error(specs[i], data, folds, sub_seed(seed, "grid-point", i))

    if jobs > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = tuple(pool.map(evaluate, range(len(specs))))
    else:
        results = tuple(evaluate(i) for i in range(len(specs)))

    return GridReport(
        results=results,
        winner=_pick_winner(results, one_se),
        metric=results[0].metric,
        n_folds=n_folds,
        seed=seed,
    )


def grid_report_csv(report: GridReport) -> str:
    """Render a grid report as CSV: one row per grid point, winner flagged."""
    param_names = list(FAMILY_PARAMS[report.results[0].spec.family])
    k_folds = report.n_folds
    header = (
        ["grid_index", "family"]
        + param_names
        + ["metric", "cv_estimate", "std_error", "winner"]
        + [f"fold_err_{k}" for k in range(k_folds)]
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, res in enumerate(report.results):
        row = [i, res.spec.family]
        row += [_csv_value(res.spec.params[name]) for name in param_names]
        row += [res.metric, repr(res.cv_estimate), repr(res.std_error), int(i == report.winner)]
        row += [repr(float(e)) for e in res.fold_errors]
        writer.writerow(row)
    return buf.getvalue()


def _csv_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
