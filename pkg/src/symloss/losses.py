"""Multi-class losses on score vectors, with analytic gradients.

Every loss is a :class:`LossFunction`: a batched value map ``(z, y) -> L(z, y)``
and its gradient in ``z``.  Labels are 0-based.  Scores may be a single
vector of shape ``(C,)`` or a batch of shape ``(n, C)``; labels follow the
batch shape.

The central operator is :func:`symmetrize`, which removes the class-mean
``(1/C) sum_k L(z, k)`` from a loss.  What is left has a zero class-sum for
every ``z`` and is therefore symmetric.  Applied to cross-entropy it gives the
multi-class unhinged loss; applied to generalized cross-entropy it gives SGCE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import DEFAULT_NORM_EPS, InvalidArgumentError, log_sum_exp, softmax

__all__ = [
    "LOSS_NAMES",
    "InvalidLabelError",
    "InvalidParameterError",
    "LossFunction",
    "alpha_mae",
    "binary_even_part",
    "binary_odd_part",
    "cosine_similarity_loss",
    "cross_entropy",
    "dirichlet_loss",
    "gce",
    "linear_loss",
    "mae",
    "make_loss",
    "mse_classification",
    "multiclass_unhinged",
    "sgce",
    "symmetrize",
]

TableFn = Callable[[np.ndarray], np.ndarray]
ValueFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
GradFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class InvalidLabelError(InvalidArgumentError):
    pass


class InvalidParameterError(InvalidArgumentError):
    pass


def _one_hot(y: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((y.shape[0], num_classes))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def _pick(mat: np.ndarray, y: np.ndarray) -> np.ndarray:
    return mat[np.arange(mat.shape[0]), y]


@dataclass(frozen=True, eq=False)
class LossFunction:
    """A loss ``L(z, y)`` over ``C`` classes with its ``z``-gradient.

    Internally the callables work on 2-D batches: ``table_fn(Z)`` returns the
    ``(n, C)`` matrix of ``L(z_i, k)`` for every class ``k``; ``value_fn`` and
    ``gradient_fn`` take ``Z`` of shape ``(n, C)`` and integer labels of shape
    ``(n,)``.  Either ``table_fn`` or ``value_fn`` must be given; the missing
    one is derived.

    The ``claims_*`` flags are what the constructor asserts about the loss.
    They are checked, not trusted, by :mod:`symloss.verify`.
    """

    name: str
    num_classes: int
    gradient_fn: GradFn
    table_fn: TableFn | None = None
    value_fn: ValueFn | None = None
    claims_symmetric: bool = False
    claims_permutation_invariant: bool = False
    claims_non_increasing: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidParameterError("a classification loss needs at least 2 classes")
        if self.table_fn is None and self.value_fn is None:
            raise InvalidParameterError("LossFunction needs table_fn or value_fn")

    # -- shape handling -------------------------------------------------
    def _scores(self, z) -> tuple[np.ndarray, bool]:
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        z2 = np.atleast_2d(z)
        if z2.ndim != 2 or z2.shape[1] != self.num_classes:
            raise InvalidArgumentError(
                f"{self.name}: expected scores with last axis {self.num_classes}, got shape {z.shape}"
            )
        return z2, single

    def _labels(self, y, n: int) -> np.ndarray:
        y_arr = np.asarray(y)
        if y_arr.dtype.kind not in "iu":
            if y_arr.dtype.kind == "f" and np.all(np.isfinite(y_arr)) and np.all(y_arr == np.round(y_arr)):
                y_arr = y_arr.astype(np.int64)
            else:
                raise InvalidLabelError(f"{self.name}: labels must be integers")
        y_arr = np.broadcast_to(y_arr.astype(np.int64), (n,)) if y_arr.ndim == 0 else y_arr.astype(np.int64)
        if y_arr.shape != (n,):
            raise InvalidLabelError(f"{self.name}: got {y_arr.shape[0]} labels for {n} score vectors")
        if n and (y_arr.min() < 0 or y_arr.max() >= self.num_classes):
            raise InvalidLabelError(f"{self.name}: label out of range [0, {self.num_classes})")
        return y_arr

    # -- public surface -------------------------------------------------
    def table(self, z) -> np.ndarray:
        """``L(z, k)`` for every class ``k`` (last axis)."""
        z2, single = self._scores(z)
        if self.table_fn is not None:
            out = self.table_fn(z2)
        else:
            n = z2.shape[0]
            out = np.empty_like(z2)
            for k in range(self.num_classes):
                out[:, k] = self.value_fn(z2, np.full(n, k, dtype=np.int64))
        return out[0] if single else out

    def value(self, z, y):
        z2, single = self._scores(z)
        y1 = self._labels(y, z2.shape[0])
        if self.value_fn is not None:
            out = self.value_fn(z2, y1)
        else:
            out = _pick(self.table_fn(z2), y1)
        return float(out[0]) if single else out

    def gradient(self, z, y) -> np.ndarray:
        z2, single = self._scores(z)
        y1 = self._labels(y, z2.shape[0])
        out = self.gradient_fn(z2, y1)
        return out[0] if single else out

    def class_sum(self, z):
        """``sum_k L(z, k)``; constant in ``z`` exactly when the loss is symmetric."""
        t = self.table(z)
        return float(t.sum()) if np.ndim(t) == 1 else t.sum(axis=-1)

    def mean_class_gradient(self, Z: np.ndarray) -> np.ndarray:
        """``(1/C) sum_k grad L(Z, k)`` for a 2-D batch, looping over ``k``."""
        n = Z.shape[0]
        acc = np.zeros_like(Z)
        for k in range(self.num_classes):
            acc += self.gradient_fn(Z, np.full(n, k, dtype=np.int64))
        return acc / self.num_classes

    def __call__(self, z, y):
        return self.value(z, y)

    def __repr__(self):
        return f"LossFunction({self.name!r}, C={self.num_classes})"


# ---------------------------------------------------------------------------
# base losses
# ---------------------------------------------------------------------------


def cross_entropy(num_classes: int) -> LossFunction:
    """``-log softmax(z)_y``; gradient ``softmax(z) - e_y``."""
    C = num_classes

    def table(Z):
        return log_sum_exp(Z)[:, None] - Z

    def value(Z, y):
        return log_sum_exp(Z) - _pick(Z, y)

    def grad(Z, y):
        return softmax(Z) - _one_hot(y, C)

    return LossFunction(
        "ce", C, grad, table_fn=table, value_fn=value,
        claims_permutation_invariant=True, claims_non_increasing=True,
    )


def mae(num_classes: int) -> LossFunction:
    """Mean absolute error on probabilities, ``1 - p(y|z)``."""
    C = num_classes

    def table(Z):
        return 1.0 - softmax(Z)

    def grad(Z, y):
        p = softmax(Z)
        py = _pick(p, y)[:, None]
        return py * (p - _one_hot(y, C))

    return LossFunction(
        "mae", C, grad, table_fn=table,
        claims_symmetric=True, claims_permutation_invariant=True, claims_non_increasing=True,
    )


def _check_q(q: float) -> float:
    q = float(q)
    if not (0.0 < q <= 1.0):
        raise InvalidParameterError(f"q must lie in (0, 1], got {q}")
    return q


def gce(num_classes: int, q: float) -> LossFunction:
    """Generalized cross-entropy ``(1 - p_y**q) / q``; equals MAE at ``q = 1``."""
    C = num_classes
    q = _check_q(q)

    def table(Z):
        return (1.0 - softmax(Z) ** q) / q

    def grad(Z, y):
        p = softmax(Z)
        pyq = _pick(p, y)[:, None] ** q
        return pyq * (p - _one_hot(y, C))

    return LossFunction(
        "gce", C, grad, table_fn=table,
        claims_symmetric=(q == 1.0), claims_permutation_invariant=True, claims_non_increasing=True,
        params={"q": q},
    )


def mse_classification(num_classes: int) -> LossFunction:
    """``||e_y - s(z)||^2 = ||s(z)||^2 + 1 - 2 p(y|z)``."""
    C = num_classes

    def table(Z):
        p = softmax(Z)
        return (p * p).sum(axis=1, keepdims=True) + 1.0 - 2.0 * p

    def grad(Z, y):
        p = softmax(Z)
        sq = (p * p).sum(axis=1, keepdims=True)
        py = _pick(p, y)[:, None]
        return 2.0 * (p * p - p * sq) - 2.0 * py * (_one_hot(y, C) - p)

    return LossFunction(
        "mse", C, grad, table_fn=table,
        claims_permutation_invariant=True, claims_non_increasing=True,
    )


def cosine_similarity_loss(num_classes: int, epsilon: float = DEFAULT_NORM_EPS) -> LossFunction:
    """``1 - z_y / max(||z||, eps)``.

    The clamp is the same one used for Euclidean score normalisation, so
    ``z = 0`` gives the value 1 rather than a division by zero.
    """
    C = num_classes

    def _norm(Z):
        return np.sqrt((Z * Z).sum(axis=1, keepdims=True))

    def table(Z):
        return 1.0 - Z / np.maximum(_norm(Z), epsilon)

    def grad(Z, y):
        raw = _norm(Z)
        n = np.maximum(raw, epsilon)
        zy = _pick(Z, y)[:, None]
        e = _one_hot(y, C)
        inside = -(e / n - zy * Z / n**3)
        return np.where(raw > epsilon, inside, -e / epsilon)

    return LossFunction(
        "cosine", C, grad, table_fn=table,
        claims_permutation_invariant=True, claims_non_increasing=True,
        params={"epsilon": epsilon},
    )


def linear_loss(coefficients, name: str = "linear") -> LossFunction:
    """``L(z, y) = A[y] . z`` for a ``C x C`` coefficient matrix ``A``.

    Useful for counterexamples: ``-diag(1..C)`` is not permutation invariant,
    and linearisations of smooth losses are linear losses.
    """
    A = np.array(coefficients, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError("coefficients must be a square C x C matrix")
    A.setflags(write=False)

    def table(Z):
        return Z @ A.T

    def grad(Z, y):
        return A[y].copy()

    return LossFunction(name, A.shape[0], grad, table_fn=table, params={"coefficients": A})


# ---------------------------------------------------------------------------
# symmetrization and the losses it produces
# ---------------------------------------------------------------------------


def symmetrize(base: LossFunction) -> LossFunction:
    """Symmetric component ``L(z, y) - (1/C) sum_k L(z, k)`` of ``base``.

    The class mean comes from ``base.table``, which falls back to one base
    evaluation per class when the base has no closed-form table.  The
    gradient subtracts the class-mean gradient, again one base gradient per
    class.  The difference ``base - symmetrize(base)`` does not depend on
    the label.
    """
    C = base.num_classes

    def table(Z):
        t = base.table(Z)
        return t - t.mean(axis=1, keepdims=True)

    def grad(Z, y):
        return base.gradient_fn(Z, y) - base.mean_class_gradient(Z)

    return LossFunction(
        f"sym_{base.name}", C, grad, table_fn=table,
        claims_symmetric=True,
        claims_permutation_invariant=base.claims_permutation_invariant,
        # monotonicity does not survive in general: sym_cosine increases in z_y in places
        claims_non_increasing=False,
        params={"base": base.name, **base.params},
    )


def multiclass_unhinged(num_classes: int) -> LossFunction:
    """``-z_y + mean(z)``, the symmetrization of cross-entropy."""
    C = num_classes

    def table(Z):
        return Z.mean(axis=1, keepdims=True) - Z

    def value(Z, y):
        return Z.mean(axis=1) - _pick(Z, y)

    def grad(Z, y):
        return np.full(Z.shape, 1.0 / C) - _one_hot(y, C)

    return LossFunction(
        "unhinged", C, grad, table_fn=table, value_fn=value,
        claims_symmetric=True, claims_permutation_invariant=True, claims_non_increasing=True,
    )


def sgce(num_classes: int, q: float) -> LossFunction:
    """Symmetrized GCE: ``(mean_k p_k**q - p_y**q) / q``.

    Same function as ``symmetrize(gce(C, q))`` but with the class mean and
    its gradient in closed form.
    """
    C = num_classes
    q = _check_q(q)

    def table(Z):
        pq = softmax(Z) ** q
        return (pq.mean(axis=1, keepdims=True) - pq) / q

    def grad(Z, y):
        p = softmax(Z)
        pq = p**q
        pyq = _pick(pq, y)[:, None]
        s = pq.sum(axis=1, keepdims=True)
        # d/dz of p_y^q / q is p_y^q (e_y - p); averaging over y gives (p^q - S_q p) / C
        return pyq * (p - _one_hot(y, C)) - (s * p - pq) / C

    return LossFunction(
        "sgce", C, grad, table_fn=table,
        claims_symmetric=True, claims_permutation_invariant=True, claims_non_increasing=True,
        params={"q": q},
    )


def alpha_mae(num_classes: int, alpha: float) -> LossFunction:
    """``(1 - alpha) * unhinged + alpha * C * MAE``.

    The MAE is rescaled by ``C`` so that its slope at equal scores matches the
    unhinged term; ``alpha`` then scales only the curvature.  For
    ``alpha > 1`` the loss is no longer non-increasing in ``z_y``.
    """
    C = num_classes
    alpha = float(alpha)
    if not (alpha >= 0.0 and math.isfinite(alpha)):
        raise InvalidParameterError(f"alpha must be a finite non-negative number, got {alpha}")

    def table(Z):
        lin = Z.mean(axis=1, keepdims=True) - Z
        return (1.0 - alpha) * lin + alpha * C * (1.0 - softmax(Z))

    def grad(Z, y):
        p = softmax(Z)
        e = _one_hot(y, C)
        py = _pick(p, y)[:, None]
        return (1.0 - alpha) * (1.0 / C - e) + alpha * C * py * (p - e)

    return LossFunction(
        "alpha_mae", C, grad, table_fn=table,
        claims_symmetric=True, claims_permutation_invariant=True,
        claims_non_increasing=alpha <= 1.0,
        params={"alpha": alpha},
    )


def dirichlet_loss(base: LossFunction, alpha) -> LossFunction:
    """``l(z, y) + sum_k (alpha_k - 1) l(z, k)`` for concentrations ``alpha_k > 0``.

    ``alpha`` is a scalar (same for every class) or a length-``C`` vector.
    With the constant ``(C - 1) / C`` this is exactly ``symmetrize(base)``.
    """
    C = base.num_classes
    a = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (C,)).copy()
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise InvalidParameterError("Dirichlet concentrations must be positive")
    w = a - 1.0
    constant = bool(np.all(a == a[0]))
    symmetric = constant and math.isclose(a[0], (C - 1) / C, rel_tol=0, abs_tol=1e-15)

    def table(Z):
        t = base.table(Z)
        return t + (t @ w)[:, None]

    def grad(Z, y):
        n = Z.shape[0]
        g = base.gradient_fn(Z, y).copy()
        for k in range(C):
            if w[k] != 0.0:
                g += w[k] * base.gradient_fn(Z, np.full(n, k, dtype=np.int64))
        return g

    return LossFunction(
        "dirichlet", C, grad, table_fn=table,
        claims_symmetric=symmetric or base.claims_symmetric,
        claims_permutation_invariant=constant and base.claims_permutation_invariant,
        claims_non_increasing=constant and a[0] <= 1.0 and base.claims_non_increasing,
        params={"base": base.name, "alpha": a.tolist()},
    )


# ---------------------------------------------------------------------------
# binary case
# ---------------------------------------------------------------------------


def binary_odd_part(potential: Callable[[float], float]) -> Callable[[float], float]:
    """``z -> (phi(z) - phi(-z)) / 2``: the symmetric part of a margin loss."""

    def odd(z):
        return (potential(z) - potential(-z)) / 2

    return odd


def binary_even_part(potential: Callable[[float], float]) -> Callable[[float], float]:
    def even(z):
        return (potential(z) + potential(-z)) / 2

    return even


# ---------------------------------------------------------------------------
# lookup by name
# ---------------------------------------------------------------------------

LOSS_NAMES = ("ce", "mae", "gce", "mse", "cosine", "unhinged", "sgce", "alpha_mae", "dirichlet")

_DEFAULTS = {"q": 0.7, "alpha": 1.0}


def make_loss(name: str, num_classes: int, **params) -> LossFunction:
    """Build a loss from its config name.

    Keys: ``q`` for ``gce``/``sgce``; ``alpha`` for ``alpha_mae`` and
    ``dirichlet`` (``dirichlet`` also takes ``base``, default ``ce``).  A
    ``sym_`` prefix symmetrizes any named loss, e.g. ``sym_mse``.
    """
    key = name.strip().lower().replace("-", "_")
    if key.startswith("sym_"):
        return symmetrize(make_loss(key[4:], num_classes, **params))
    C = int(num_classes)
    if key == "ce":
        return cross_entropy(C)
    if key == "mae":
        return mae(C)
    if key == "gce":
        return gce(C, params.get("q", _DEFAULTS["q"]))
    if key == "mse":
        return mse_classification(C)
    if key == "cosine":
        return cosine_similarity_loss(C)
    if key == "unhinged":
        return multiclass_unhinged(C)
    if key == "sgce":
        return sgce(C, params.get("q", _DEFAULTS["q"]))
    if key == "alpha_mae":
        return alpha_mae(C, params.get("alpha", _DEFAULTS["alpha"]))
    if key == "dirichlet":
        base = make_loss(params.get("base", "ce"), C)
        return dirichlet_loss(base, params.get("alpha", (C - 1) / C))
    raise KeyError(f"unknown loss {name!r}; choose from {', '.join(LOSS_NAMES)}")
