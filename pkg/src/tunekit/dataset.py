"""Tabular data loading, validation, standardization, and train/test splitting.

Every learner downstream consumes the numeric form produced here: an n x p
matrix of finite reals plus either a numeric target (regression) or integer
class codes (classification).  Features are never auto-encoded; users supply
numeric columns.  Only the target column may be categorical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._rng import rng_for

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


class DatasetError(ValueError):
    """Raised when a data file or in-memory dataset violates its contract."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus target vector with a task tag.

    For classification the target holds integer codes 0..C-1 and
    ``class_names`` maps each code back to its original label.
    """

    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...]
    task: str
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise DatasetError(f"unknown task {self.task!r}")
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        n, p = features.shape
        if n < 1 or p < 1:
            raise DatasetError("dataset needs at least one row and one feature")
        if not np.all(np.isfinite(features)):
            raise DatasetError("features contain missing or non-finite entries")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != p:
            raise DatasetError(f"{len(names)} feature names for {p} columns")
        if len(set(names)) != p:
            raise DatasetError("feature names must be unique")

        if self.task == CLASSIFICATION:
            target = np.asarray(self.target)
            if not np.all(np.equal(np.mod(target, 1), 0)):
                raise DatasetError("classification target must hold integer codes")
            target = np.ascontiguousarray(target, dtype=np.int64)
            if self.class_names is None:
                raise DatasetError("classification dataset needs class_names")
            classes = tuple(str(s) for s in self.class_names)
            if len(classes) < 2:
                raise DatasetError("classification needs at least 2 classes")
            if target.min() < 0 or target.max() >= len(classes):
                raise DatasetError("class codes must lie in 0..C-1")
            object.__setattr__(self, "class_names", classes)
        else:
            target = np.ascontiguousarray(self.target, dtype=np.float64)
            if not np.all(np.isfinite(target)):
                raise DatasetError("target contains missing or non-finite entries")
            if self.class_names is not None:
                raise DatasetError("regression dataset cannot carry class_names")
        if target.shape != (n,):
            raise DatasetError("target length must match the number of rows")

        object.__setattr__(self, "features", _readonly(features))
        object.__setattr__(self, "target", _readonly(target))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.class_names is None else len(self.class_names)

    def subset(self, rows) -> "Dataset":
        """New Dataset restricted to ``rows`` (order preserved)."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows],
            target=self.target[rows],
            feature_names=self.feature_names,
            task=self.task,
            class_names=self.class_names,
        )


@dataclass(frozen=True)
class Standardizer:
    """Per-column centering/scaling constants fitted on a training set.

    Uses the population standard deviation (divisor n).  A zero sd marks a
    constant column: apply centers it but leaves the scale alone.
    """

    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        means = np.ascontiguousarray(self.means, dtype=np.float64)
        sds = np.ascontiguousarray(self.stddevs, dtype=np.float64)
        if means.ndim != 1 or means.shape != sds.shape:
            raise DatasetError("means and stddevs must be 1-D and equally long")
        if np.any(sds < 0):
            raise DatasetError("standard deviations cannot be negative")
        object.__setattr__(self, "means", _readonly(means))
        object.__setattr__(self, "stddevs", _readonly(sds))

    @property
    def p(self) -> int:
        return self.means.shape[0]


def standardize_fit(train: Dataset) -> Standardizer:
    """Column means and population sds of the training features."""
    means = train.features.mean(axis=0)
    sds = train.features.std(axis=0)
    return Standardizer(means=means, stddevs=sds)


def apply_standardizer(s: Standardizer, X: np.ndarray) -> np.ndarray:
    """Transform a raw feature matrix with fitted constants.

    Non-constant columns become (x - mean) / sd; constant columns (sd == 0)
    are centered but not scaled.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != s.p:
        raise DatasetError(f"expected {s.p} feature columns, got shape {X.shape}")
    scale = np.where(s.stddevs > 0, s.stddevs, 1.0)
    return (X - s.means) / scale


def standardize_apply(s: Standardizer, data: Dataset) -> Dataset:
    """Dataset with standardized features; the target is untouched."""
    return Dataset(
        features=apply_standardizer(s, data.features),
        target=data.target,
        feature_names=data.feature_names,
        task=data.task,
        class_names=data.class_names,
    )


def _parse_float(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    if text == "":
        raise DatasetError(f"empty cell at row {row}, column {column!r}")
    try:
        return float(text)
    except ValueError:
        raise DatasetError(
            f"cannot parse {cell!r} as a number at row {row}, column {column!r}"
        ) from None


def read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    """Header row plus raw string records of an RFC-4180-style CSV file."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise DatasetError(f"no such file: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: file is empty, header row required") from None
        rows = [row for row in reader if row]
    if len(rows) < 1:
        raise DatasetError(f"{path}: no data rows after the header")
    width = len(header)
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DatasetError(f"{path}: row {i} has {len(row)} cells, expected {width}")
    return header, rows


def load_csv(path, target_column: str, task: str) -> Dataset:
    """Load a header-first CSV into a Dataset.

    Non-target columns are parsed as reals and kept in header order.  A
    classification target maps its distinct strings to codes 0..C-1 in
    lexicographic label order, so the coding does not depend on row order.
    Row numbers in error messages are 1-based data rows.
    """
    if task not in TASKS:
        raise DatasetError(f"unknown task {task!r}")
    header, rows = read_csv_table(path)
    if target_column not in header:
        raise DatasetError(f"target column {target_column!r} not found in header {header}")
    t_idx = header.index(target_column)
    feature_names = tuple(name for i, name in enumerate(header) if i != t_idx)
    if not feature_names:
        raise DatasetError("no feature columns besides the target")

    n = len(rows)
    features = np.empty((n, len(feature_names)), dtype=np.float64)
    for i, row in enumerate(rows):
        j = 0
        for c, cell in enumerate(row):
            if c == t_idx:
                continue
            features[i, j] = _parse_float(cell, i + 1, header[c])
            j += 1

    if task == CLASSIFICATION:
        labels = []
        for i, row in enumerate(rows):
            text = row[t_idx].strip()
            if text == "":
                raise DatasetError(f"empty cell at row {i + 1}, column {target_column!r}")
            labels.append(text)
        class_names = tuple(sorted(set(labels)))
        code_of = {label: code for code, label in enumerate(class_names)}
        target = np.array([code_of[label] for label in labels], dtype=np.int64)
        return Dataset(features, target, feature_names, CLASSIFICATION, class_names)

    target = np.array(
        [_parse_float(row[t_idx], i + 1, target_column) for i, row in enumerate(rows)],
        dtype=np.float64,
    )
    return Dataset(features, target, feature_names, REGRESSION)


def train_test_split(data: Dataset, test_fraction: float, seed: int):
    """Split rows into (train, test) by a seeded uniform shuffle.

    The test part receives floor(n * test_fraction) rows; both parts keep
    original row order.  Deterministic given (data, fraction, seed).
    """
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError("test_fraction must lie strictly between 0 and 1")
    n = data.n
    # the 1e-9 nudge guards floor() against float artifacts like 10*0.3 = 2.999...
    n_test = int(math.floor(n * test_fraction + 1e-9))
    if n_test < 1 or n - n_test < 1:
        raise DatasetError(
            f"test_fraction {test_fraction} yields an empty part for n={n}"
        )
    order = rng_for(seed, "train-test-split", n).permutation(n)
    test_rows = np.sort(order[:n_test])
    train_rows = np.sort(order[n_test:])
    return data.subset(train_rows), data.subset(test_rows)
