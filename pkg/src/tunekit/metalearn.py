"""Learning over learners: tune a roster, select, ensemble.

Each roster entry is grid-searched with shared folds; the tuned families
are then compared out-of-sample.  Two selection strategies exist: tune
everything and keep the best, or walk the roster in order and stop at the
first family whose cross-validated error beats a user-supplied benchmark
(all internal metrics are errors, so "beats" means error <= benchmark).
Winners are refit on the full dataset, and the top families can be combined
into one ensemble prediction: an unweighted mean for regression, a majority
vote for classification.

This module also hosts the Monte Carlo experiment that decomposes test
error into variance, squared bias, and irreducible noise along a model
complexity axis, using synthetic data generators with a known truth.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass

import numpy as np

from ._rng import rng_for, sub_seed
from .crossval import GridReport, grid_search, mce, mse
from .dataset import CLASSIFICATION, REGRESSION, Dataset
from .learners import FittedModel, HyperGrid, LearnerSpec, fit, predict

BEST_OVERALL = "best_overall"
FIRST_BEATING_BENCHMARK = "first_beating_benchmark"
STRATEGIES = (BEST_OVERALL, FIRST_BEATING_BENCHMARK)

REASON_BENCHMARK_MET = "benchmark met"
REASON_BENCHMARK_UNMET = "benchmark unmet"
REASON_EXHAUSTIVE = "all families tuned"


@dataclass(frozen=True)
class MetaConfig:
    """Roster of hypergrids plus the selection and ensembling policy."""

    roster: tuple
    n_folds: int
    seed: int
    strategy: str = BEST_OVERALL
    benchmark: float | None = None
    ensemble: bool = False
    ensemble_size: int = 1

    def __post_init__(self):
        roster = tuple(self.roster)
        if not roster:
            raise ValueError("roster must contain at least one hypergrid")
        if not all(isinstance(g, HyperGrid) for g in roster):
            raise ValueError("roster entries must be HyperGrid instances")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy == FIRST_BEATING_BENCHMARK and self.benchmark is None:
            raise ValueError("first_beating_benchmark requires a benchmark")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        object.__setattr__(self, "roster", roster)


@dataclass(frozen=True)
class FamilyResult:
    """One tuned roster entry: its grid report and full-data refit."""

    roster_index: int
    family: str
    report: GridReport
    spec: LearnerSpec
    cv_estimate: float
    std_error: float
    train_error: float  # in-sample error of the refit model; diagnostic only
    model: FittedModel


@dataclass(frozen=True)
class MetaReport:
    results: tuple
    selected: int  # index into results
    stopping_reason: str
    ensemble_members: tuple  # indices into results, empty when no ensemble

    @property
    def selected_result(self) -> FamilyResult:
        return self.results[self.selected]

    def ensemble_models(self) -> list[FittedModel]:
        return [self.results[i].model for i in self.ensemble_members]


def _tune_family(config: MetaConfig, data: Dataset, index: int, jobs: int) -> FamilyResult:
    grid = config.roster[index]
    report = grid_search(grid, data, config.n_folds, config.seed, jobs=jobs)
    best = report.best
    model = fit(best.spec, data, sub_seed(config.seed, "refit", index))
    preds = predict(model, data.features)
    if data.task == CLASSIFICATION:
        train_error = mce(data.target, preds)
    else:
        train_error = mse(data.target, preds)
    return FamilyResult(
        roster_index=index,
        family=grid.family,
        report=report,
        spec=best.spec,
        cv_estimate=best.cv_estimate,
        std_error=best.std_error,
        train_error=train_error,
        model=model,
    )


def tune_all(config: MetaConfig, data: Dataset, jobs: int = 1) -> MetaReport:
    """Tune the roster under the configured strategy and select a family.

    best_overall tunes every entry and keeps the minimal cv estimate
    (roster order breaks ties).  first_beating_benchmark tunes in roster
    order and stops at the first entry with cv estimate <= benchmark; if
    none qualifies it falls back to best_overall over the tuned set.
    """
    results = []
    selected = None
    reason = REASON_EXHAUSTIVE
    for index in range(len(config.roster)):
        res = _tune_family(config, data, index, jobs)
        results.append(res)
        if (
            config.strategy == FIRST_BEATING_BENCHMARK
            and res.cv_estimate <= config.benchmark
        ):
            selected = len(results) - 1
            reason = REASON_BENCHMARK_MET
            break
    if selected is None:
        if config.strategy == FIRST_BEATING_BENCHMARK:
            reason = REASON_BENCHMARK_UNMET
        selected = min(range(len(results)), key=lambda i: (results[i].cv_estimate, i))

    members = ()
    if config.ensemble:
        ranked = sorted(range(len(results)), key=lambda i: (results[i].cv_estimate, i))
        members = tuple(ranked[: min(config.ensemble_size, len(ranked))])
    return MetaReport(
        results=tuple(results),
        selected=selected,
        stopping_reason=reason,
        ensemble_members=members,
    )


def ensemble_predict(members, X, task: str) -> np.ndarray:
    """Combine member predictions into one: mean (regression) or majority
    vote with ties toward the smallest class code (classification)."""
    members = list(members)
    if not members:
        raise ValueError("ensemble needs at least one member")
    p = members[0].n_features
    for m in members:
        if m.task != task:
            raise ValueError("ensemble members must share the task")
        if m.n_features != p:
            raise ValueError("ensemble members must share the feature count")
    stacked = np.stack([predict(m, X) for m in members])
    if task == REGRESSION:
        return stacked.mean(axis=0)
    n_classes = max(m.n_classes for m in members)
    votes = np.zeros((stacked.shape[1], n_classes), dtype=np.int64)
    for row in stacked:
        votes[np.arange(stacked.shape[1]), row.astype(np.int64)] += 1
    return np.argmax(votes, axis=1)


def meta_report_csv(report: MetaReport) -> str:
    """One CSV row per tuned family plus a trailing winner record line."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "roster_index",
            "family",
            "params",
            "cv_estimate",
            "std_error",
            "train_error",
            "selected",
            "ensemble_member",
        ]
    )
    member_set = set(report.ensemble_members)
    for i, res in enumerate(report.results):
        writer.writerow(
            [
                res.roster_index,
                res.family,
                _params_text(res.spec),
                repr(res.cv_estimate),
                repr(res.std_error),
                repr(res.train_error),
                int(i == report.selected),
                int(i in member_set),
            ]
        )
    win = report.selected_result
    buf.write(
        f"# winner family={win.family} params={_params_text(win.spec)} "
        f"cv_estimate={win.cv_estimate!r} reason={report.stopping_reason}\n"
    )
    return buf.getvalue()


def _params_text(spec: LearnerSpec) -> str:
    return " ".join(f"{k}={spec.params[k]!r}" for k in spec.params)


# ---------------------------------------------------------------------------
# Synthetic data generators and the variance/bias decomposition experiment
# ---------------------------------------------------------------------------
def _linear_fn(x):
    return 1.0 + 2.0 * x


def _sine_fn(x):
    return np.sin(2.0 * np.pi * x)


def _step_fn(x):
    return np.where(x >= 0.5, 1.0, 0.0)


# All generators sample features uniformly on [0, 1].
DGP_CATALOG = {"linear": _linear_fn, "sine": _sine_fn, "step": _step_fn}


@dataclass(frozen=True)
class DgpConfig:
    """A univariate data-generating process y = f(x) + eps, x ~ U(0,1)."""

    fname: str
    noise_sd: float
    n_train: int
    eval_points: np.ndarray
    n_replications: int
    seed: int

    def __post_init__(self):
        if self.fname not in DGP_CATALOG:
            raise ValueError(f"unknown generator {self.fname!r}; have {sorted(DGP_CATALOG)}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.n_train < 2:
            raise ValueError("n_train must be >= 2")
        if self.n_replications < 2:
            raise ValueError("need at least 2 replications")
        pts = np.ascontiguousarray(self.eval_points, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 1:
            raise ValueError("eval_points must be a non-empty vector")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise ValueError("eval_points must lie inside the sampled range [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "eval_points", pts)

    @property
    def truth(self):
        return DGP_CATALOG[self.fname]


def default_eval_points(count: int = 21) -> np.ndarray:
    return np.linspace(0.05, 0.95, count)


def sample_training_set(dgp: DgpConfig, replication: int) -> Dataset:
    """Draw one training set; replication index fixes the random stream."""
    rng = rng_for(dgp.seed, "dgp-train", replication)
    x = rng.uniform(0.0, 1.0, dgp.n_train)
    y = dgp.truth(x)
    if dgp.noise_sd > 0:
        y = y + rng.normal(0.0, dgp.noise_sd, dgp.n_train)
    return Dataset(
        features=x.reshape(-1, 1),
        target=np.asarray(y, dtype=np.float64),
        feature_names=("x",),
        task=REGRESSION,
    )


@dataclass(frozen=True)
class BvPoint:
    """Decomposition at one complexity value, averaged over eval points."""

    complexity: object
    variance: float
    bias_sq: float
    irreducible: float
    test_mse: float


def bias_variance_curve(
    dgp: DgpConfig,
    family: str,
    axis_name: str,
    axis_values,
    fixed_params: dict | None = None,
) -> list[BvPoint]:
    """Monte Carlo decomposition of test error along one hyperparameter axis.

    For each axis value, fits on ``n_replications`` fresh training draws and
    predicts the evaluation points; reports variance of the predictions,
    squared bias against the known truth, the irreducible noise variance,
    and the realized test error against freshly noised targets.  Training
    draws and test noise are shared across axis values (paired design), so
    adjacent complexities are compared on identical data.
    """
    axis_values = list(axis_values)
    if not axis_values:
        raise ValueError("axis_values must be non-empty")
    base = dict(_BV_BASE_PARAMS.get(family, {}))
    if fixed_params:
        base.update(fixed_params)
    specs = []
    for value in axis_values:
        params = dict(base)
        params[axis_name] = value
        specs.append(LearnerSpec(family, params, REGRESSION))

    big_r = dgp.n_replications
    x0 = dgp.eval_points.reshape(-1, 1)
    truth = dgp.truth(dgp.eval_points)
    trainsets = [sample_training_set(dgp, r) for r in range(big_r)]
    test_noise = np.stack(
        [rng_for(dgp.seed, "bv-test-noise", r).normal(0.0, dgp.noise_sd, dgp.eval_points.size)
         if dgp.noise_sd > 0 else np.zeros(dgp.eval_points.size)
         for r in range(big_r)]
    )

    points = []
    for c_idx, spec in enumerate(specs):
        preds = np.empty((big_r, dgp.eval_points.size))
        for r in range(big_r):
            model = fit(spec, trainsets[r], sub_seed(dgp.seed, "bv-fit", c_idx, r))
            preds[r] = predict(model, x0)
        variance = float(np.mean(preds.var(axis=0)))
        bias_sq = float(np.mean((preds.mean(axis=0) - truth) ** 2))
        test_mse = float(np.mean((truth[None, :] + test_noise - preds) ** 2))
        points.append(
            BvPoint(
                complexity=axis_values[c_idx],
                variance=variance,
                bias_sq=bias_sq,
                irreducible=dgp.noise_sd**2,
                test_mse=test_mse,
            )
        )
    return points


# Defaults for hyperparameters that are not on the complexity axis.  The
# generators are univariate, hence m_features=1.
_BV_BASE_PARAMS = {
    "elastic_net": {"lambda": 0.0, "alpha": 0.5},
    "knn": {"k": 5},
    "tree": {"max_leaves": 8},
    "bagging": {"tree_depth": 3, "n_bootstraps": 20},
    "random_forest": {"m_features": 1, "n_bootstraps": 20, "max_leaves": 8},
    "boosting": {"learning_rate": 0.1, "n_rounds": 50, "max_leaves": 2},
    "kernel": {"bandwidth": 0.1, "kernel_fn": "gaussian"},
    "series": {"degree": 3},
    "piecewise": {"n_knots": 3},
}


def bv_curve_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["complexity", "variance", "bias_sq", "irreducible", "test_mse"])
    for pt in points:
        writer.writerow(
            [
                pt.complexity if not isinstance(pt.complexity, float) else repr(pt.complexity),
                repr(pt.variance),
                repr(pt.bias_sq),
                repr(pt.irreducible),
                repr(pt.test_mse),
            ]
        )
    return buf.getvalue()
