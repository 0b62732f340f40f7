"""The learner roster behind one fit/predict contract.

Nine families, each parameterized by its tuning hyperparameters:

    elastic_net    lambda >= 0, alpha in [0, 1]
    knn            k in 1..n_train
    tree           max_leaves >= 1
    bagging        tree_depth >= 1, n_bootstraps >= 1
    random_forest  m_features in 1..p, n_bootstraps >= 1, max_leaves >= 1
    boosting       learning_rate in (0, 1], n_rounds >= 1, max_leaves >= 2
    kernel         bandwidth > 0, kernel_fn in {gaussian, epanechnikov}
    series         degree >= 1
    piecewise      n_knots >= 0  (univariate only)

Classification is supported by knn, tree, bagging, and random_forest; the
rest are regression-only.  Every fit standardizes features internally
(zero mean, unit population sd on the data it was given) so that distance
and penalty computations are scale-coherent, and every model carries its
standardizer so predict sees the same coordinates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _tree
from ._rng import rng_for
from .dataset import (
    CLASSIFICATION,
    REGRESSION,
    Dataset,
    Standardizer,
    apply_standardizer,
    standardize_fit,
)


class LearnerError(ValueError):
    """Raised for invalid learner specs and violated fit preconditions."""


FAMILIES = (
    "elastic_net",
    "knn",
    "tree",
    "bagging",
    "random_forest",
    "boosting",
    "kernel",
    "series",
    "piecewise",
)
CLASSIFICATION_FAMILIES = ("knn", "tree", "bagging", "random_forest")
KERNELS = ("gaussian", "epanechnikov")

ELASTIC_NET_TOL = 1e-8
ELASTIC_NET_MAX_SWEEPS = 10_000
SERIES_RIDGE_JITTER = 1e-10


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _check_param(family: str, name: str, value) -> None:
    ok = True
    want = ""
    if name in ("k", "max_leaves", "tree_depth", "n_bootstraps", "m_features", "n_rounds"):
        ok = _is_int(value) and value >= 1
        want = "an integer >= 1"
        if name == "max_leaves" and family == "boosting":
            ok = _is_int(value) and value >= 2
            want = "an integer >= 2"
    elif name == "n_knots":
        ok = _is_int(value) and value >= 0
        want = "an integer >= 0"
    elif name == "lambda":
        ok = _is_real(value) and value >= 0
        want = "a real >= 0"
    elif name == "alpha":
        ok = _is_real(value) and 0 <= value <= 1
        want = "a real in [0, 1]"
    elif name == "learning_rate":
        ok = _is_real(value) and 0 < value <= 1
        want = "a real in (0, 1]"
    elif name == "bandwidth":
        ok = _is_real(value) and value > 0
        want = "a real > 0"
    elif name == "kernel_fn":
        ok = value in KERNELS
        want = f"one of {KERNELS}"
    if not ok:
        raise LearnerError(f"{family}: hyperparameter {name}={value!r} is invalid, need {want}")


# Canonical hyperparameter order per family; grids enumerate in this order.
FAMILY_PARAMS: dict[str, tuple[str, ...]] = {
    "elastic_net": ("lambda", "alpha"),
    "knn": ("k",),
    "tree": ("max_leaves",),
    "bagging": ("tree_depth", "n_bootstraps"),
    "random_forest": ("m_features", "n_bootstraps", "max_leaves"),
    "boosting": ("learning_rate", "n_rounds", "max_leaves"),
    "kernel": ("bandwidth", "kernel_fn"),
    "series": ("degree",),
    "piecewise": ("n_knots",),
}


def _validate_family_task(family: str, task: str) -> None:
    if family not in FAMILIES:
        raise LearnerError(f"unknown learner family {family!r}")
    if task not in (REGRESSION, CLASSIFICATION):
        raise LearnerError(f"unknown task {task!r}")
    if task == CLASSIFICATION and family not in CLASSIFICATION_FAMILIES:
        raise LearnerError(f"{family} does not support classification")


@dataclass(frozen=True)
class LearnerSpec:
    """One learner family with concrete hyperparameter values."""

    family: str
    params: dict
    task: str

    def __post_init__(self):
        _validate_family_task(self.family, self.task)
        required = FAMILY_PARAMS[self.family]
        got = set(self.params)
        if got != set(required):
            raise LearnerError(
                f"{self.family} needs exactly the hyperparameters {required}, got {sorted(got)}"
            )
        for name in required:
            _check_param(self.family, name, self.params[name])
        object.__setattr__(self, "params", dict(self.params))


@dataclass(frozen=True)
class HyperGrid:
    """Ordered candidate lists per hyperparameter of one family."""

    family: str
    axes: dict
    task: str

    def __post_init__(self):
        _validate_family_task(self.family, self.task)
        required = FAMILY_PARAMS[self.family]
        if set(self.axes) != set(required):
            raise LearnerError(
                f"{self.family} grid needs axes {required}, got {sorted(self.axes)}"
            )
        axes = {}
        for name in required:  # canonical order, independent of caller order
            values = tuple(self.axes[name])
            if not values:
                raise LearnerError(f"{self.family}: empty candidate list for {name}")
            for v in values:
                _check_param(self.family, name, v)
            axes[name] = values
        object.__setattr__(self, "axes", axes)

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.axes.values())

    def specs(self) -> list[LearnerSpec]:
        """Cartesian product in grid order (last axis varies fastest)."""
        names = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            out.append(LearnerSpec(self.family, dict(zip(names, combo)), self.task))
        return out


# ---------------------------------------------------------------------------
# Fitted-parameter payloads
# ---------------------------------------------------------------------------
@dataclass
class ElasticNetFit:
    intercept: float
    coefs: np.ndarray  # standardized feature space


@dataclass
class NeighborFit:
    X: np.ndarray  # standardized training rows
    y: np.ndarray


@dataclass
class TreeFit:
    tree: _tree.Tree


@dataclass
class ForestFit:
    trees: list


@dataclass
class BoostFit:
    base: float
    trees: list


@dataclass
class KernelFit:
    X: np.ndarray
    y: np.ndarray
    fallback: float  # training mean, used when every kernel weight is zero


@dataclass
class SeriesFit:
    exponents: np.ndarray  # (n_terms, p) monomial powers
    coefs: np.ndarray


@dataclass
class PiecewiseFit:
    knots: np.ndarray
    coefs: np.ndarray  # [intercept, slope, hinge coefficients...]


@dataclass
class FittedModel:
    """A fitted learner: pure predictions from (model, X).

    ``diagnostics`` collects observability counters (e.g. kernel fallbacks);
    it never influences predictions and is not serialized.
    """

    family: str
    task: str
    params: dict
    standardizer: Standardizer
    payload: object
    n_features: int
    class_names: tuple[str, ...] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return 0 if self.class_names is None else len(self.class_names)


# ---------------------------------------------------------------------------
# Family fitters (all receive standardized features)
# ---------------------------------------------------------------------------
def _soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _fit_elastic_net(Xs, y, lam, alpha):
    """Cyclic coordinate descent for
    (1/2n) sum (y - b0 - x b)^2 + lam * (alpha |b|_1 + (1-alpha)/2 |b|_2^2)
    with an unpenalized intercept."""
    n, p = Xs.shape
    col_sq = np.einsum("ij,ij->j", Xs, Xs) / n
    beta = np.zeros(p)
    intercept = float(y.mean())
    residual = y - intercept
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)
    for _ in range(ELASTIC_NET_MAX_SWEEPS):
        max_change = 0.0
        shift = float(residual.mean())
        if shift != 0.0:
            intercept += shift
            residual -= shift
            max_change = abs(shift)
        for j in range(p):
            if col_sq[j] == 0.0:  # constant column: coefficient pinned at 0
                continue
            old = beta[j]
            rho = float(Xs[:, j] @ residual) / n + col_sq[j] * old
            new = _soft_threshold(rho, l1) / (col_sq[j] + l2)
            if new != old:
                residual -= (new - old) * Xs[:, j]
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < ELASTIC_NET_TOL:
            break
    return ElasticNetFit(intercept=intercept, coefs=beta)


def linear_coefficients(model: FittedModel):
    """(intercept, slopes) of an elastic_net model in original feature units."""
    if model.family != "elastic_net":
        raise LearnerError("linear_coefficients applies to elastic_net models")
    s = model.standardizer
    scale = np.where(s.stddevs > 0, s.stddevs, 1.0)
    slopes = model.payload.coefs / scale
    intercept = model.payload.intercept - float(np.sum(slopes * s.means))
    return intercept, slopes


def _monomial_exponents(p: int, degree: int) -> np.ndarray:
    """All exponent vectors with total degree <= degree, ordered by
    (total degree, lexicographic)."""
    combos = [e for e in itertools.product(range(degree + 1), repeat=p) if sum(e) <= degree]
    combos.sort(key=lambda e: (sum(e), e))
    return np.array(combos, dtype=np.int64)


def _monomial_basis(Xs: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    n = Xs.shape[0]
    B = np.ones((n, exponents.shape[0]))
    for t, expo in enumerate(exponents):
        for j, e in enumerate(expo):
            if e:
                B[:, t] *= Xs[:, j] ** e
    return B


def _fit_series(Xs, y, degree):
    exponents = _monomial_exponents(Xs.shape[1], degree)
    B = _monomial_basis(Xs, exponents)
    gram = B.T @ B
    gram[np.diag_indices_from(gram)] += SERIES_RIDGE_JITTER
    coefs = np.linalg.solve(gram, B.T @ y)
    return SeriesFit(exponents=exponents, coefs=coefs)


def _piecewise_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    cols = [np.ones_like(x), x]
    for kn in knots:
        cols.append(np.maximum(x - kn, 0.0))
    return np.column_stack(cols)


def _fit_piecewise(Xs, y, n_knots):
    if Xs.shape[1] != 1:
        raise LearnerError("piecewise regression requires exactly one feature")
    x = Xs[:, 0]
    if n_knots > 0:
        levels = np.arange(1, n_knots + 1) / (n_knots + 1)
        knots = np.quantile(x, levels)
    else:
        knots = np.empty(0)
    B = _piecewise_basis(x, knots)
    coefs, *_ = np.linalg.lstsq(B, y, rcond=None)
    return PiecewiseFit(knots=knots, coefs=coefs)


def _fit_forest(Xs, y, spec, seed, mode, n_classes):
    n, p = Xs.shape
    params = spec.params
    trees = []
    if spec.family == "random_forest" and params["m_features"] > p:
        raise LearnerError(
            f"random_forest: m_features={params['m_features']} exceeds p={p}"
        )
    for b in range(params["n_bootstraps"]):
        rows = rng_for(seed, "bootstrap", b).integers(0, n, size=n)
        Xb, yb = Xs[rows], y[rows]
        if spec.family == "bagging":
            trees.append(_tree.grow_depth_limited(Xb, yb, params["tree_depth"], mode, n_classes))
        else:
            trees.append(
                _tree.grow_best_first(
                    Xb,
                    yb,
                    params["max_leaves"],
                    mode,
                    n_classes,
                    feature_rng=rng_for(seed, "features", b),
                    m_features=params["m_features"],
                )
            )
    return ForestFit(trees=trees)


def _fit_boosting(Xs, y, params):
    base = float(y.mean())
    residual = y - base
    rate = params["learning_rate"]
    trees = []
    for _ in range(params["n_rounds"]):
        tree = _tree.grow_best_first(Xs, residual, params["max_leaves"], _tree.REGRESSION)
        residual = residual - rate * _tree.predict_tree(tree, Xs)
        trees.append(tree)
    return BoostFit(base=base, trees=trees)


def fit(spec: LearnerSpec, data: Dataset, seed: int) -> FittedModel:
    """Fit one learner.  Deterministic given (spec, data, seed).

    Stochastic families (bagging, random_forest) derive per-tree sub-seeds
    from ``seed``; the other families ignore it.
    """
    if spec.task != data.task:
        raise LearnerError(f"spec task {spec.task!r} does not match data task {data.task!r}")
    std = standardize_fit(data)
    Xs = apply_standardizer(std, data.features)
    y = data.target.astype(np.float64) if data.task == REGRESSION else data.target
    n, p = Xs.shape
    mode = data.task
    n_classes = data.n_classes
    params = spec.params
    fam = spec.family

    if fam == "elastic_net":
        payload = _fit_elastic_net(Xs, y, params["lambda"], params["alpha"])
    elif fam == "knn":
        if params["k"] > n:
            raise LearnerError(f"knn: k={params['k']} exceeds training size n={n}")
        payload = NeighborFit(X=Xs, y=data.target.copy())
    elif fam == "tree":
        payload = TreeFit(tree=_tree.grow_best_first(Xs, y, params["max_leaves"], mode, n_classes))
    elif fam in ("bagging", "random_forest"):
        payload = _fit_forest(Xs, y, spec, seed, mode, n_classes)
    elif fam == "boosting":
        payload = _fit_boosting(Xs, y, params)
    elif fam == "kernel":
        payload = KernelFit(X=Xs, y=y.copy(), fallback=float(y.mean()))
    elif fam == "series":
        payload = _fit_series(Xs, y, params["degree"])
    else:
        payload = _fit_piecewise(Xs, y, params["n_knots"])

    return FittedModel(
        family=fam,
        task=spec.task,
        params=dict(params),
        standardizer=std,
        payload=payload,
        n_features=p,
        class_names=data.class_names,
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------
def _majority(codes: np.ndarray, n_classes: int) -> int:
    return int(np.argmax(np.bincount(codes, minlength=n_classes)))


def _predict_knn(model: FittedModel, Xq: np.ndarray) -> np.ndarray:
    fitp = model.payload
    k = model.params["k"]
    n_train = fitp.X.shape[0]
    regression = model.task == REGRESSION
    out = np.empty(Xq.shape[0], dtype=np.float64 if regression else np.int64)
    for i in range(Xq.shape[0]):
        d2 = np.einsum("ij,ij->i", fitp.X - Xq[i], fitp.X - Xq[i])
        if k == n_train:
            chosen = np.arange(n_train)
        else:
            # stable sort: equal distances resolve to the lower training row
            chosen = np.sort(np.argsort(d2, kind="stable")[:k])
        if regression:
            out[i] = fitp.y[chosen].mean()
        else:
            out[i] = _majority(fitp.y[chosen], model.n_classes)
    return out


def _predict_kernel(model: FittedModel, Xq: np.ndarray) -> np.ndarray:
    fitp = model.payload
    bandwidth = model.params["bandwidth"]
    gaussian = model.params["kernel_fn"] == "gaussian"
    out = np.empty(Xq.shape[0])
    fallbacks = 0
    for i in range(Xq.shape[0]):
        diff = fitp.X - Xq[i]
        u = np.sqrt(np.einsum("ij,ij->i", diff, diff)) / bandwidth
        w = np.exp(-0.5 * u * u) if gaussian else np.maximum(0.0, 1.0 - u * u)
        total = float(w.sum())
        if total <= 0.0:
            out[i] = fitp.fallback
            fallbacks += 1
        else:
            out[i] = float(w @ fitp.y) / total
    if fallbacks:
        model.diagnostics["kernel_zero_weight_fallbacks"] = (
            model.diagnostics.get("kernel_zero_weight_fallbacks", 0) + fallbacks
        )
    return out


def _vote_trees(trees, Xs, n_classes):
    votes = np.zeros((Xs.shape[0], n_classes), dtype=np.int64)
    for tree in trees:
        codes = _tree.predict_tree(tree, Xs).astype(np.int64)
        votes[np.arange(Xs.shape[0]), codes] += 1
    return np.argmax(votes, axis=1)  # smallest class code wins ties


def predict(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """Predictions at new feature rows: numeric vector for regression,
    class codes for classification."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise LearnerError(
            f"model expects {model.n_features} features, got {X.shape[1]}"
        )
    Xs = apply_standardizer(model.standardizer, X)
    fam = model.family
    payload = model.payload

    if fam == "elastic_net":
        return payload.intercept + Xs @ payload.coefs
    if fam == "knn":
        return _predict_knn(model, Xs)
    if fam == "tree":
        raw = _tree.predict_tree(payload.tree, Xs)
    elif fam in ("bagging", "random_forest"):
        if model.task == CLASSIFICATION:
            return _vote_trees(payload.trees, Xs, model.n_classes)
        raw = np.zeros(Xs.shape[0])
        for tree in payload.trees:
            raw += _tree.predict_tree(tree, Xs)
        raw /= len(payload.trees)
    elif fam == "boosting":
        raw = np.full(Xs.shape[0], payload.base)
        rate = model.params["learning_rate"]
        for tree in payload.trees:
            raw += rate * _tree.predict_tree(tree, Xs)
    elif fam == "kernel":
        return _predict_kernel(model, Xs)
    elif fam == "series":
        raw = _monomial_basis(Xs, payload.exponents) @ payload.coefs
    else:
        raw = _piecewise_basis(Xs[:, 0], payload.knots) @ payload.coefs

    if model.task == CLASSIFICATION:
        return raw.astype(np.int64)
    return raw


def complexity_rank(spec: LearnerSpec) -> tuple:
    """Lexicographic key that grows with model complexity within a family.

    Used to break cross-validation ties toward the simpler configuration.
    """
    p = spec.params
    fam = spec.family
    if fam == "elastic_net":
        return (-p["lambda"],)
    if fam == "knn":
        return (-p["k"],)
    if fam == "tree":
        return (p["max_leaves"],)
    if fam == "bagging":
        return (p["tree_depth"], p["n_bootstraps"])
    if fam == "random_forest":
        return (p["max_leaves"], p["m_features"], p["n_bootstraps"])
    if fam == "boosting":
        return (p["n_rounds"], p["max_leaves"], p["learning_rate"])
    if fam == "kernel":
        return (-p["bandwidth"],)
    if fam == "series":
        return (p["degree"],)
    return (p["n_knots"],)
