"""Label corruption and the exact corrupted-risk identity.

Symmetric noise with rate ``eta`` moves a label to one of the other ``C - 1``
classes, chosen uniformly.  Equivalently the label is resampled from the
uniform distribution over all ``C`` classes with probability
``p = C * eta / (C - 1)``.  Under that corruption the expected loss splits as

    corrupted risk = (p / C) * E[sum_k L(h(x), k)] + (1 - p) * clean risk

for every loss, and the first term is constant when the loss is symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import LabeledDataset, read_matrix_csv
from .losses import InvalidParameterError, LossFunction

__all__ = [
    "LabeledDataset",
    "NoiseModel",
    "RiskIdentity",
    "corrupt_labels",
    "corrupted_risk_identity_oracle",
    "eta_to_p",
    "load_transition_csv",
    "p_to_eta",
]


def eta_to_p(eta: float, num_classes: int) -> float:
    """Flip rate to uniform-resampling rate, ``p = C eta / (C - 1)``."""
    C = int(num_classes)
    if C < 2:
        raise InvalidParameterError("need at least 2 classes")
    if not (0.0 <= eta < (C - 1) / C):
        raise InvalidParameterError(f"eta must lie in [0, {(C - 1) / C:.6g}), got {eta}")
    return C * eta / (C - 1)


def p_to_eta(p: float, num_classes: int) -> float:
    if not (0.0 <= p < 1.0):
        raise InvalidParameterError(f"p must lie in [0, 1), got {p}")
    return (num_classes - 1) * p / num_classes


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Either ``symmetric`` with rate ``eta`` or ``asymmetric`` with a transition matrix.

    Row ``j`` of the transition matrix is the distribution of the observed
    label when the clean label is ``j``.
    """

    kind: str
    num_classes: int
    eta: float = 0.0
    transition: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "symmetric":
            eta_to_p(self.eta, self.num_classes)
        elif self.kind == "asymmetric":
            T = _validate_transition(self.transition)
            if T.shape[0] != self.num_classes:
                raise InvalidParameterError(
                    f"transition matrix is {T.shape[0]}x{T.shape[0]} but num_classes={self.num_classes}"
                )
            object.__setattr__(self, "transition", T)
        else:
            raise InvalidParameterError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def symmetric(cls, eta: float, num_classes: int) -> "NoiseModel":
        return cls("symmetric", num_classes, eta=float(eta))

    @classmethod
    def asymmetric(cls, transition) -> "NoiseModel":
        T = _validate_transition(transition)
        return cls("asymmetric", T.shape[0], transition=T)

    @property
    def p(self) -> float:
        if self.kind != "symmetric":
            raise AttributeError("p is only defined for symmetric noise")
        return eta_to_p(self.eta, self.num_classes)


def _validate_transition(T) -> np.ndarray:
    if T is None:
        raise InvalidParameterError("asymmetric noise needs a transition matrix")
    T = np.array(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 2:
        raise InvalidParameterError("transition matrix must be square with C >= 2")
    if not np.all(np.isfinite(T)) or np.any(T < 0):
        raise InvalidParameterError("transition entries must be finite and non-negative")
    if np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-12):
        raise InvalidParameterError("transition rows must sum to 1")
    T.setflags(write=False)
    return T


def load_transition_csv(path) -> NoiseModel:
    """Read a headerless ``C x C`` row-stochastic CSV into an asymmetric model."""
    return NoiseModel.asymmetric(read_matrix_csv(path))


def corrupt_labels(data: LabeledDataset, model: NoiseModel, rng: np.random.Generator) -> LabeledDataset:
    """Return a copy of ``data`` with corrupted labels; features are shared.

    Symmetric: one uniform draw per example, in index order, decides the
    flip; then one categorical draw per flipped example, again in index
    order, picks among the other ``C - 1`` classes.  Asymmetric: one uniform
    draw per example is inverted through the CDF of its transition row.
    """
    if model.num_classes != data.num_classes:
        raise InvalidParameterError("noise model and dataset disagree on num_classes")
    y = data.labels
    C = data.num_classes
    u = rng.random(y.shape[0])
    if model.kind == "symmetric":
        flip = u < model.eta
        shift = rng.integers(0, C - 1, size=int(flip.sum()))
        new = y.copy()
        # a draw in 0..C-2 skips the current label
        new[flip] = shift + (shift >= y[flip])
    else:
        cdf = np.cumsum(model.transition, axis=1)
        cdf[:, -1] = 1.0
        new = (u[:, None] >= cdf[y]).sum(axis=1)
        new = np.minimum(new, C - 1)
    return data.with_labels(new)


class RiskIdentity(NamedTuple):
    lhs: float
    rhs: float
    clean_risk: float
    class_sum_term: float


def corrupted_risk_identity_oracle(loss: LossFunction, points, clean_label_dist, p: float) -> RiskIdentity:
    """Both sides of the corrupted-risk decomposition, by enumeration.

    ``points`` is an ``(n, C)`` array of score vectors and ``clean_label_dist``
    the matching ``(n, C)`` rows of clean label probabilities.  ``lhs`` is the
    exact expected loss under ``p * Uniform + (1 - p) * clean``; ``rhs`` is
    ``(p / C) * mean_i sum_k L(z_i, k) + (1 - p) * clean risk``.
    """
    if not (0.0 <= p < 1.0):
        raise InvalidParameterError(f"p must lie in [0, 1), got {p}")
    Z = np.atleast_2d(np.asarray(points, dtype=np.float64))
    D = np.atleast_2d(np.asarray(clean_label_dist, dtype=np.float64))
    C = loss.num_classes
    if D.shape != Z.shape or Z.shape[1] != C:
        raise InvalidParameterError("points and clean_label_dist must both be (n, C)")
    if np.any(D < 0) or np.any(np.abs(D.sum(axis=1) - 1.0) > 1e-12):
        raise InvalidParameterError("each clean label distribution must be a probability vector")
    table = loss.table(Z)
    corrupted = p / C + (1.0 - p) * D
    lhs = float(np.mean((corrupted * table).sum(axis=1)))
    clean = float(np.mean((D * table).sum(axis=1)))
    class_sum = float(np.mean(table.sum(axis=1)))
    rhs = (p / C) * class_sum + (1.0 - p) * clean
    return RiskIdentity(lhs, rhs, clean, class_sum)
