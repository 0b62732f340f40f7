"""Versioned line-oriented text serialization of fitted models.

Header line:  ``tunekit-model v1 <family> <task>``
followed by standardizer constants, hyperparameters, and a family-specific
parameter block.  Trees are stored as preorder node lists:

    node <id> split <feature> <threshold> <left> <right>
    leaf <id> <value>

Floats are written with ``repr`` so a round-trip is prediction-exact.
"""

from __future__ import annotations

import numpy as np

from . import _tree
from .dataset import CLASSIFICATION, REGRESSION, Standardizer
from .learners import (
    FAMILY_PARAMS,
    BoostFit,
    ElasticNetFit,
    FittedModel,
    ForestFit,
    KernelFit,
    NeighborFit,
    PiecewiseFit,
    SeriesFit,
    TreeFit,
    _monomial_exponents,
)

MAGIC = "tunekit-model"
VERSION = "v1"


class ModelFormatError(ValueError):
    """Raised when a model file is malformed or has the wrong version."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        raise ModelFormatError("booleans are not serializable model values")
    if isinstance(v, (int, np.integer)):
        return repr(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _fmt_vec(values) -> str:
    return " ".join(_fmt(float(v)) for v in values)


def _parse_number(tok: str):
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        return tok


def _tree_lines(tree: _tree.Tree, classification: bool) -> list[str]:
    lines = [f"tree {tree.n_nodes}"]
    for i in range(tree.n_nodes):
        if tree.feature[i] < 0:
            value = int(tree.value[i]) if classification else repr(float(tree.value[i]))
            lines.append(f"leaf {i} {value}")
        else:
            lines.append(
                f"node {i} split {int(tree.feature[i])} {repr(float(tree.threshold[i]))} "
                f"{int(tree.left[i])} {int(tree.right[i])}"
            )
    return lines


def _rows_lines(X: np.ndarray, y: np.ndarray, classification: bool) -> list[str]:
    lines = [f"train {X.shape[0]}"]
    for i in range(X.shape[0]):
        target = repr(int(y[i])) if classification else repr(float(y[i]))
        lines.append(f"row {_fmt_vec(X[i])} {target}")
    return lines


def dumps(model: FittedModel) -> str:
    """Serialize a fitted model to its text form."""
    classification = model.task == CLASSIFICATION
    lines = [
        f"{MAGIC} {VERSION} {model.family} {model.task}",
        f"features {model.n_features}",
        f"means {_fmt_vec(model.standardizer.means)}",
        f"sds {_fmt_vec(model.standardizer.stddevs)}",
    ]
    if classification:
        lines.append(f"classes {len(model.class_names)}")
        lines.extend(f"label {name}" for name in model.class_names)
    ordered = FAMILY_PARAMS[model.family]
    lines.append("params " + " ".join(f"{k}={_fmt(model.params[k])}" for k in ordered))

    payload = model.payload
    if isinstance(payload, ElasticNetFit):
        lines.append(f"intercept {repr(float(payload.intercept))}")
        lines.append(f"coefs {_fmt_vec(payload.coefs)}")
    elif isinstance(payload, NeighborFit):
        lines.extend(_rows_lines(payload.X, payload.y, classification))
    elif isinstance(payload, KernelFit):
        lines.extend(_rows_lines(payload.X, payload.y, classification=False))
        lines.append(f"fallback {repr(float(payload.fallback))}")
    elif isinstance(payload, TreeFit):
        lines.extend(_tree_lines(payload.tree, classification))
    elif isinstance(payload, ForestFit):
        lines.append(f"trees {len(payload.trees)}")
        for tree in payload.trees:
            lines.extend(_tree_lines(tree, classification))
    elif isinstance(payload, BoostFit):
        lines.append(f"base {repr(float(payload.base))}")
        lines.append(f"trees {len(payload.trees)}")
        for tree in payload.trees:
            lines.extend(_tree_lines(tree, classification=False))
    elif isinstance(payload, SeriesFit):
        lines.append(f"coefs {_fmt_vec(payload.coefs)}")
    elif isinstance(payload, PiecewiseFit):
        lines.append("knots" + ("" if payload.knots.size == 0 else " " + _fmt_vec(payload.knots)))
        lines.append(f"coefs {_fmt_vec(payload.coefs)}")
    else:
        raise ModelFormatError(f"unknown payload type {type(payload).__name__}")
    lines.append("end")
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, expected: str | None = None) -> list[str]:
        if self.pos >= len(self.lines):
            raise ModelFormatError("unexpected end of model file")
        raw = self.lines[self.pos]
        self.pos += 1
        parts = raw.split()
        if not parts:
            raise ModelFormatError(f"blank line at {self.pos}")
        if expected is not None and parts[0] != expected:
            raise ModelFormatError(f"expected {expected!r} at line {self.pos}, got {parts[0]!r}")
        return parts

    def raw(self) -> str:
        if self.pos >= len(self.lines):
            raise ModelFormatError("unexpected end of model file")
        raw = self.lines[self.pos]
        self.pos += 1
        return raw


def _read_floats(parts: list[str], expect: int | None = None) -> np.ndarray:
    values = np.array([float(t) for t in parts], dtype=np.float64)
    if expect is not None and values.size != expect:
        raise ModelFormatError(f"expected {expect} values, got {values.size}")
    return values


def _read_tree(reader: _Reader, classification: bool) -> _tree.Tree:
    head = reader.next("tree")
    n_nodes = int(head[1])
    feature = np.full(n_nodes, -1, dtype=np.int64)
    threshold = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    value = np.zeros(n_nodes)
    for _ in range(n_nodes):
        parts = reader.next()
        if parts[0] == "leaf":
            i = int(parts[1])
            value[i] = float(parts[2])
        elif parts[0] == "node" and parts[2] == "split":
            i = int(parts[1])
            feature[i] = int(parts[3])
            threshold[i] = float(parts[4])
            left[i] = int(parts[5])
            right[i] = int(parts[6])
        else:
            raise ModelFormatError(f"bad tree line at {reader.pos}: {' '.join(parts)}")
    return _tree.Tree(feature=feature, threshold=threshold, left=left, right=right, value=value)


def _read_rows(reader: _Reader, p: int, classification: bool):
    head = reader.next("train")
    n = int(head[1])
    X = np.empty((n, p))
    if classification:
        y = np.empty(n, dtype=np.int64)
    else:
        y = np.empty(n)
    for i in range(n):
        parts = reader.next("row")
        if len(parts) != p + 2:
            raise ModelFormatError(f"row at line {reader.pos} has wrong width")
        X[i] = [float(t) for t in parts[1 : 1 + p]]
        y[i] = int(parts[-1]) if classification else float(parts[-1])
    return X, y


def loads(text: str) -> FittedModel:
    """Parse a model file back into a FittedModel (diagnostics start empty)."""
    reader = _Reader(text)
    head = reader.next(MAGIC)
    if len(head) != 4:
        raise ModelFormatError("malformed header line")
    _, version, family, task = head
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version!r}")
    if family not in FAMILY_PARAMS:
        raise ModelFormatError(f"unknown family {family!r}")
    if task not in (REGRESSION, CLASSIFICATION):
        raise ModelFormatError(f"unknown task {task!r}")
    classification = task == CLASSIFICATION

    p = int(reader.next("features")[1])
    means = _read_floats(reader.next("means")[1:], p)
    sds = _read_floats(reader.next("sds")[1:], p)
    class_names = None
    if classification:
        n_classes = int(reader.next("classes")[1])
        labels = []
        for _ in range(n_classes):
            raw = reader.raw()
            if not raw.startswith("label "):
                raise ModelFormatError(f"expected a label line at {reader.pos}")
            labels.append(raw[len("label "):])
        class_names = tuple(labels)

    params = {}
    for item in reader.next("params")[1:]:
        name, _, value = item.partition("=")
        params[name] = _parse_number(value)

    if family == "elastic_net":
        intercept = float(reader.next("intercept")[1])
        coefs = _read_floats(reader.next("coefs")[1:], p)
        payload = ElasticNetFit(intercept=intercept, coefs=coefs)
    elif family == "knn":
        X, y = _read_rows(reader, p, classification)
        payload = NeighborFit(X=X, y=y)
    elif family == "kernel":
        X, y = _read_rows(reader, p, classification=False)
        fallback = float(reader.next("fallback")[1])
        payload = KernelFit(X=X, y=y, fallback=fallback)
    elif family == "tree":
        payload = TreeFit(tree=_read_tree(reader, classification))
    elif family in ("bagging", "random_forest"):
        count = int(reader.next("trees")[1])
        payload = ForestFit(trees=[_read_tree(reader, classification) for _ in range(count)])
    elif family == "boosting":
        base = float(reader.next("base")[1])
        count = int(reader.next("trees")[1])
        payload = BoostFit(base=base, trees=[_read_tree(reader, False) for _ in range(count)])
    elif family == "series":
        coefs = _read_floats(reader.next("coefs")[1:])
        exponents = _monomial_exponents(p, params["degree"])
        if coefs.size != exponents.shape[0]:
            raise ModelFormatError("series coefficient count does not match degree")
        payload = SeriesFit(exponents=exponents, coefs=coefs)
    elif family == "piecewise":
        knots = _read_floats(reader.next("knots")[1:])
        coefs = _read_floats(reader.next("coefs")[1:], knots.size + 2)
        payload = PiecewiseFit(knots=knots, coefs=coefs)
    else:  # pragma: no cover - family list is closed above
        raise ModelFormatError(f"unknown family {family!r}")
    reader.next("end")

    return FittedModel(
        family=family,
        task=task,
        params=params,
        standardizer=Standardizer(means=means, stddevs=sds),
        payload=payload,
        n_features=p,
        class_names=class_names,
    )


def save(model: FittedModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model))


def load(path) -> FittedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return loads(fh.read())
    except FileNotFoundError:
        raise ModelFormatError(f"no such model file: {path}") from None
