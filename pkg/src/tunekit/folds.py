"""K-fold partitions: shuffled, stratified, and leave-one-out."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import rng_for


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of row indices 0..n-1 into folds 0..K-1."""

    fold_of: np.ndarray
    n_folds: int

    def __post_init__(self):
        fold_of = np.ascontiguousarray(self.fold_of, dtype=np.int64)
        if fold_of.ndim != 1 or fold_of.size < 2:
            raise ValueError("fold_of must be a vector covering at least 2 rows")
        k = int(self.n_folds)
        if k < 2:
            raise ValueError("need at least 2 folds")
        if k > fold_of.size:
            raise ValueError(f"cannot make {k} folds from {fold_of.size} rows")
        if fold_of.min() < 0 or fold_of.max() >= k:
            raise ValueError("fold ids must lie in 0..K-1")
        counts = np.bincount(fold_of, minlength=k)
        if counts.min() < 1:
            raise ValueError("every fold must contain at least one row")
        fold_of.setflags(write=False)
        object.__setattr__(self, "fold_of", fold_of)
        object.__setattr__(self, "n_folds", k)

    @property
    def n(self) -> int:
        return self.fold_of.size

    @property
    def counts(self) -> np.ndarray:
        """Rows per fold, n_k."""
        return np.bincount(self.fold_of, minlength=self.n_folds)

    def test_rows(self, k: int) -> np.ndarray:
        return np.nonzero(self.fold_of == k)[0]

    def train_rows(self, k: int) -> np.ndarray:
        return np.nonzero(self.fold_of != k)[0]


def make_folds(n: int, n_folds: int, seed: int) -> FoldAssignment:
    """Seeded uniform shuffle of 0..n-1 dealt into K nearly equal folds.

    The first n mod K folds receive ceil(n/K) rows, the rest floor(n/K),
    so fold sizes never differ by more than one.
    """
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if n_folds > n:
        raise ValueError(f"cannot make {n_folds} folds from {n} rows")
    order = rng_for(seed, "folds", n, n_folds).permutation(n)
    base, remainder = divmod(n, n_folds)
    fold_of = np.empty(n, dtype=np.int64)
    start = 0
    for k in range(n_folds):
        size = base + (1 if k < remainder else 0)
        fold_of[order[start : start + size]] = k
        start += size
    return FoldAssignment(fold_of=fold_of, n_folds=n_folds)


def make_stratified_folds(labels, n_folds: int, seed: int) -> FoldAssignment:
    """Class-balanced folds: per-fold counts of any class differ by at most 1.

    Members of each class (ascending class code) are shuffled and dealt
    round-robin; the deal starts at a seeded fold offset and continues across
    classes, so all folds stay non-empty and globally balanced as well.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if n_folds > n:
        raise ValueError(f"cannot make {n_folds} folds from {n} rows")
    rng = rng_for(seed, "stratified-folds", n, n_folds)
    position = int(rng.integers(n_folds))
    fold_of = np.empty(n, dtype=np.int64)
    for cls in np.unique(labels):
        members = np.nonzero(labels == cls)[0]
        for row in rng.permutation(members):
            fold_of[row] = position % n_folds
            position += 1
    return FoldAssignment(fold_of=fold_of, n_folds=n_folds)


def loocv_folds(n: int) -> FoldAssignment:
    """Leave-one-out: K = n, every row is its own fold."""
    if n < 2:
        raise ValueError("leave-one-out needs at least 2 rows")
    return FoldAssignment(fold_of=np.arange(n, dtype=np.int64), n_folds=n)
