"""Linear models under the multi-class unhinged loss.

For scores ``W psi(x)`` the empirical unhinged loss is linear in ``W``:

    (1/N) sum_i L(W psi(x_i), y_i) = -trace(mu W^T),
    mu = (1/N) sum_i c_{y_i} psi(x_i)^T,

where ``c_y`` has ``(C-1)/C`` at position ``y`` and ``-1/C`` elsewhere.  The
whole loss landscape is therefore fixed by the centroid ``mu``.  Under a
Frobenius-norm budget the minimiser is ``W = r mu / ||mu||``, and
``||mu||^2`` is a label-weighted kernel sum (kernel alignment).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .data import LabeledDataset, write_matrix_csv
from .losses import InvalidLabelError, InvalidParameterError, multiclass_unhinged
from .numerics import InvalidArgumentError

__all__ = [
    "DEGENERACY_THRESHOLD",
    "DegenerateProblemError",
    "class_code",
    "class_codes",
    "closed_form_linear_solution",
    "compute_centroid",
    "empirical_unhinged_loss",
    "empirical_unhinged_loss_via_trace",
    "export_centroid_csv",
    "feature_matrix",
    "kernel_alignment",
    "kkt_residual",
    "linear_kernel",
    "unhinged_gradient_wrt_weights",
]

DEGENERACY_THRESHOLD = 1e-12


class DegenerateProblemError(ArithmeticError):
    """The centroid vanishes: every ``W`` inside the norm budget is optimal."""


def class_code(y: int, num_classes: int) -> np.ndarray:
    """``c_y``: ``(C-1)/C`` at ``y``, ``-1/C`` elsewhere; sums to zero."""
    C = int(num_classes)
    if not (0 <= y < C):
        raise InvalidLabelError(f"label {y} out of range for C={C}")
    c = np.full(C, -1.0 / C)
    c[y] = (C - 1) / C
    return c


def class_codes(labels, num_classes: int) -> np.ndarray:
    """Row ``i`` is ``c_{labels[i]}``."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise InvalidLabelError("label out of range")
    codes = np.full((y.size, num_classes), -1.0 / num_classes)
    codes[np.arange(y.size), y] = (num_classes - 1) / num_classes
    return codes


def feature_matrix(data: LabeledDataset, feature_map: Callable | None = None, *, bias: bool = False) -> np.ndarray:
    """Stack ``psi(x_i)`` row-wise; ``bias=True`` appends a constant-1 column."""
    if feature_map is None:
        Psi = data.features.copy()
    else:
        Psi = np.array([np.asarray(feature_map(x), dtype=np.float64) for x in data.features])
        if Psi.ndim == 1:
            Psi = Psi[:, None]
    if bias:
        Psi = np.hstack([Psi, np.ones((Psi.shape[0], 1))])
    return Psi


def compute_centroid(data: LabeledDataset, feature_map: Callable | None = None, *, bias: bool = False) -> np.ndarray:
    """The ``C x D`` unhinged data centroid ``(1/N) sum_i c_{y_i} psi(x_i)^T``."""
    Psi = feature_matrix(data, feature_map, bias=bias)
    codes = class_codes(data.labels, data.num_classes)
    mu = np.zeros((data.num_classes, Psi.shape[1]))
    for c, psi in zip(codes, Psi):
        mu += np.outer(c, psi)
    return mu / len(data)


def empirical_unhinged_loss_via_trace(W, mu) -> float:
    W = np.asarray(W, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if W.shape != mu.shape:
        raise InvalidArgumentError(f"W has shape {W.shape} but the centroid has {mu.shape}")
    return -float(np.trace(mu @ W.T))


def empirical_unhinged_loss(W, data: LabeledDataset, feature_map: Callable | None = None, *, bias: bool = False) -> float:
    """Direct average of the unhinged loss over the dataset, one example at a time."""
    W = np.asarray(W, dtype=np.float64)
    Psi = feature_matrix(data, feature_map, bias=bias)
    if W.shape != (data.num_classes, Psi.shape[1]):
        raise InvalidArgumentError("W shape does not match (C, feature dimension)")
    loss = multiclass_unhinged(data.num_classes)
    total = 0.0
    for psi, y in zip(Psi, data.labels):
        total += loss.value(W @ psi, int(y))
    return total / len(data)


def unhinged_gradient_wrt_weights(data: LabeledDataset, feature_map: Callable | None = None, *, bias: bool = False) -> np.ndarray:
    """Gradient of the empirical unhinged loss in ``W`` by the chain rule; equals ``-mu``."""
    Psi = feature_matrix(data, feature_map, bias=bias)
    loss = multiclass_unhinged(data.num_classes)
    G = np.zeros((data.num_classes, Psi.shape[1]))
    # the score gradient of the unhinged loss does not depend on the scores
    zero = np.zeros(data.num_classes)
    for psi, y in zip(Psi, data.labels):
        G += np.outer(loss.gradient(zero, int(y)), psi)
    return G / len(data)


def closed_form_linear_solution(mu, radius: float) -> np.ndarray:
    """Minimiser of the empirical unhinged loss subject to ``||W||_F <= radius``."""
    if not radius > 0:
        raise InvalidParameterError("radius must be positive")
    mu = np.asarray(mu, dtype=np.float64)
    norm = float(np.linalg.norm(mu))
    if norm <= DEGENERACY_THRESHOLD:
        raise DegenerateProblemError(
            "degenerate centroid (||mu|| <= 1e-12): any W satisfying the norm constraint is a solution"
        )
    return radius * mu / norm


def kkt_residual(W, mu, radius: float) -> float:
    """``||-mu + 2 lambda W||_F`` with ``lambda = ||mu|| / (2 radius)``."""
    mu = np.asarray(mu, dtype=np.float64)
    lam = np.linalg.norm(mu) / (2 * radius)
    return float(np.linalg.norm(-mu + 2 * lam * np.asarray(W)))


def linear_kernel(x, x2) -> float:
    return float(np.dot(x, x2))


def kernel_alignment(data: LabeledDataset, kernel: Callable = linear_kernel) -> float:
    """``(1/N^2) sum_ij a_ij k(x_i, x_j)`` with ``a_ij = (C-1)/C`` on equal labels, ``-1/C`` otherwise.

    The kernel is assumed symmetric positive semidefinite on the data; this
    is not checked.  With ``k(x, x') = psi(x).psi(x')`` the result equals
    ``||compute_centroid(data, psi)||_F^2``.
    """
    X, y, C = data.features, data.labels, data.num_classes
    N = len(data)
    total = 0.0
    for i in range(N):
        for j in range(N):
            a = (C - 1) / C if y[i] == y[j] else -1.0 / C
            total += a * kernel(X[i], X[j])
    return total / N**2


def export_centroid_csv(mu, path) -> None:
    """``C`` rows by ``D`` columns, no header."""
    write_matrix_csv(np.asarray(mu), path)
