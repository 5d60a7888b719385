"""Labelled datasets, the Gaussian-blob benchmark, and CSV readers/writers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import InvalidArgumentError, make_rng

__all__ = [
    "DatasetFormatError",
    "LabeledDataset",
    "RegressionDataset",
    "SyntheticSpec",
    "gaussian_blobs",
    "load_classification_csv",
    "load_regression_csv",
    "save_classification_csv",
    "save_regression_csv",
]


class DatasetFormatError(InvalidArgumentError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DatasetFormatError("features must be a 2-D (N, d) array")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DatasetFormatError("need exactly one label per row of features")
        if X.shape[0] < 1:
            raise DatasetFormatError("dataset must contain at least one example")
        if y.dtype.kind not in "iu":
            raise DatasetFormatError("labels must be integers")
        if self.num_classes < 2:
            raise DatasetFormatError("num_classes must be >= 2")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise DatasetFormatError(f"labels must lie in 0..{self.num_classes - 1}")
        if not np.all(np.isfinite(X)):
            raise DatasetFormatError("features must be finite")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_labels(self, labels) -> "LabeledDataset":
        return LabeledDataset(self.features, np.asarray(labels, dtype=np.int64), self.num_classes)


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        t = np.asarray(self.targets, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or t.ndim != 1 or t.shape[0] != X.shape[0] or X.shape[0] < 1:
            raise DatasetFormatError("regression data needs (N, d) features and N targets, N >= 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", t)

    def __len__(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Isotropic Gaussian blobs with centres evenly spread on a circle.

    Centres lie in the first two coordinates at ``radius * (cos, sin)`` of
    ``2 pi k / C``; further coordinates are centred at 0.  With
    ``radius / stddev >= 4`` the clean problem is almost perfectly separable.
    When ``total`` is set it overrides ``per_class`` and the classes are as
    balanced as that count allows.
    """

    num_classes: int = 3
    per_class: int = 1000
    dim: int = 2
    radius: float = 4.0
    stddev: float = 1.0
    seed: int = 0
    total: int | None = None

    def __post_init__(self):
        if self.num_classes < 2 or self.per_class < 1 or self.dim < 1:
            raise InvalidArgumentError("blobs need C >= 2, per_class >= 1, dim >= 1")
        if self.total is not None and self.total < 1:
            raise InvalidArgumentError("total must be positive")
        if not self.stddev > 0:
            raise InvalidArgumentError("stddev must be positive")


def _blob_centres(spec: SyntheticSpec) -> np.ndarray:
    centres = np.zeros((spec.num_classes, spec.dim))
    angles = 2 * math.pi * np.arange(spec.num_classes) / spec.num_classes
    centres[:, 0] = spec.radius * np.cos(angles)
    if spec.dim > 1:
        centres[:, 1] = spec.radius * np.sin(angles)
    return centres


def gaussian_blobs(spec: SyntheticSpec, stream: int = 0) -> LabeledDataset:
    """Draw a blob dataset; ``stream`` separates e.g. train (0) and test (1) draws."""
    rng = make_rng(spec.seed, 0xB10B, stream)
    centres = _blob_centres(spec)
    if spec.total is None:
        labels = np.repeat(np.arange(spec.num_classes), spec.per_class)
    else:
        # classes as balanced as the total allows
        labels = np.sort(np.arange(spec.total) % spec.num_classes)
    X = centres[labels] + spec.stddev * rng.standard_normal((labels.size, spec.dim))
    order = rng.permutation(labels.size)
    return LabeledDataset(X[order], labels[order], spec.num_classes)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    return header, rows


def _feature_columns(header, last: str, path) -> int:
    if not header or header[-1] != last:
        raise DatasetFormatError(f"{path}: last header column must be {last!r}")
    d = len(header) - 1
    expected = [f"f{j}" for j in range(d)]
    if header[:-1] != expected:
        raise DatasetFormatError(f"{path}: feature columns must be named f0..f{d - 1}")
    return d


def load_classification_csv(path, num_classes: int | None = None) -> LabeledDataset:
    """Header ``f0,...,f{d-1},label``; labels are integers ``0..C-1``.

    ``num_classes`` defaults to ``max(label) + 1`` (at least 2).
    """
    header, rows = _read_rows(path)
    d = _feature_columns(header, "label", path)
    try:
        X = np.array([[float(c) for c in r[:d]] for r in rows], dtype=np.float64).reshape(len(rows), d)
        y = np.array([int(r[d]) for r in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise DatasetFormatError(f"{path}: malformed row ({exc})") from None
    if len(rows) == 0:
        raise DatasetFormatError(f"{path}: no data rows")
    C = num_classes if num_classes is not None else max(int(y.max()) + 1, 2)
    return LabeledDataset(X, y, C)


def load_regression_csv(path) -> RegressionDataset:
    """Header ``f0,...,f{d-1},target``."""
    header, rows = _read_rows(path)
    d = _feature_columns(header, "target", path)
    try:
        X = np.array([[float(c) for c in r[:d]] for r in rows], dtype=np.float64).reshape(len(rows), d)
        t = np.array([float(r[d]) for r in rows], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise DatasetFormatError(f"{path}: malformed row ({exc})") from None
    if len(rows) == 0:
        raise DatasetFormatError(f"{path}: no data rows")
    return RegressionDataset(X, t)


def save_classification_csv(data: LabeledDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(data.dim)] + ["label"])
        for x, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(lab)])


def save_regression_csv(data: RegressionDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(data.features.shape[1])] + ["target"])
        for x, t in zip(data.features, data.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(float(t))])


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(matrix):
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Headerless numeric CSV to a 2-D float array."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    try:
        M = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: non-numeric entry ({exc})") from None
    if M.ndim != 2 or M.size == 0:
        raise DatasetFormatError(f"{path}: ragged or empty matrix")
    return M
