"""Symmetric losses for learning with noisy labels.

The main entry points are :func:`symloss.losses.make_loss` and the
constructors next to it, the numeric property checks in
:mod:`symloss.verify`, the training harness in :mod:`symloss.model`, the
closed forms in :mod:`symloss.centroid` and :mod:`symloss.regression`, and
the ``symloss`` command line (:mod:`symloss.cli`).
"""

from .losses import (
    LOSS_NAMES,
    LossFunction,
    alpha_mae,
    cross_entropy,
    dirichlet_loss,
    gce,
    make_loss,
    mae,
    multiclass_unhinged,
    sgce,
    symmetrize,
)
from .numerics import InvalidArgumentError, make_rng, softmax
from .verify import CheckReport, check_gradient, check_permutation_invariance, check_symmetry

__version__ = "0.1.0"

__all__ = [
    "LOSS_NAMES",
    "CheckReport",
    "InvalidArgumentError",
    "LossFunction",
    "alpha_mae",
    "check_gradient",
    "check_permutation_invariance",
    "check_symmetry",
    "cross_entropy",
    "dirichlet_loss",
    "gce",
    "make_loss",
    "make_rng",
    "mae",
    "multiclass_unhinged",
    "sgce",
    "softmax",
    "symmetrize",
]
