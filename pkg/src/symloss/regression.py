"""Symmetric losses for regression with corrupted targets.

With probability ``p`` a target is replaced by a draw from a corruption
density ``q``.  A loss is symmetric with respect to ``q`` when
``integral q(t) L(z, t) dt`` does not depend on ``z``.  Subtracting that
integral symmetrizes any loss.  For squared error under a centred density
this leaves ``-2 z y`` plus label-only terms: the regression unhinged loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .losses import InvalidParameterError
from .numerics import InvalidArgumentError
from .verify import CheckReport

__all__ = [
    "CorruptionDensity",
    "QuadratureError",
    "RegressionLoss",
    "absolute_error",
    "check_linear_symmetry",
    "clip",
    "closed_form_regression_weights",
    "constant_loss",
    "huber",
    "linearized_symmetrized_huber",
    "regression_risk_identity",
    "regression_unhinged",
    "squared_error",
    "stationarity_residual",
    "symmetrize_regression",
]


class QuadratureError(ArithmeticError):
    """The integral does not settle as the node count doubles."""


@dataclass(frozen=True)
class CorruptionDensity:
    """``uniform`` on ``[-half_width, half_width]`` or ``gaussian(mean, sigma)``.

    Integrals use Gauss-Legendre nodes on the uniform support and
    Gauss-Hermite nodes, rescaled to the normal density, for the Gaussian.
    """

    kind: str
    half_width: float = 1.0
    mean: float = 0.0
    sigma: float = 1.0
    nodes: int = 64

    def __post_init__(self):
        if self.kind == "uniform":
            if not self.half_width > 0:
                raise InvalidParameterError("uniform half-width must be positive")
        elif self.kind == "gaussian":
            if not self.sigma > 0:
                raise InvalidParameterError("gaussian sigma must be positive")
        else:
            raise InvalidParameterError(f"unknown density kind {self.kind!r}")
        if self.nodes < 2:
            raise InvalidParameterError("need at least 2 quadrature nodes")

    @classmethod
    def uniform(cls, half_width: float = 1.0, nodes: int = 64) -> "CorruptionDensity":
        return cls("uniform", half_width=half_width, nodes=nodes)

    @classmethod
    def gaussian(cls, mean: float = 0.0, sigma: float = 1.0, nodes: int = 64) -> "CorruptionDensity":
        return cls("gaussian", mean=mean, sigma=sigma, nodes=nodes)

    @classmethod
    def parse(cls, text: str) -> "CorruptionDensity":
        """``uniform:I`` or ``gaussian:MEAN:SIGMA`` (``gaussian:SIGMA`` means mean 0)."""
        kind, *args = text.strip().split(":")
        try:
            vals = [float(a) for a in args]
        except ValueError:
            raise InvalidParameterError(f"bad density spec {text!r}") from None
        if kind == "uniform":
            return cls.uniform(*(vals or [1.0]))
        if kind == "gaussian":
            if len(vals) == 1:
                return cls.gaussian(0.0, vals[0])
            return cls.gaussian(*(vals or [0.0, 1.0]))
        raise InvalidParameterError(f"bad density spec {text!r}")

    @property
    def centered_symmetric(self) -> bool:
        return self.kind == "uniform" or self.mean == 0.0

    def rule(self, nodes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``t_i`` and weights ``w_i`` with ``sum w_i f(t_i) ~ E_q f``."""
        n = nodes or self.nodes
        if self.kind == "uniform":
            x, w = np.polynomial.legendre.leggauss(n)
            return self.half_width * x, w / 2.0
        x, w = np.polynomial.hermite.hermgauss(n)
        return self.mean + math.sqrt(2.0) * self.sigma * x, w / math.sqrt(math.pi)

    def expectation(self, f: Callable[[np.ndarray], np.ndarray], *, check: bool = False):
        """``E_q f(T)``; ``f`` maps node arrays of shape ``(m,)`` to ``(m, ...)``.

        With ``check=True`` the estimate is repeated at twice the node count
        and :class:`QuadratureError` is raised if the two disagree badly or
        are not finite.
        """
        t, w = self.rule()
        vals = np.asarray(f(t), dtype=np.float64)
        est = np.tensordot(w, vals, axes=(0, 0))
        if check:
            t2, w2 = self.rule(2 * self.nodes)
            est2 = np.tensordot(w2, np.asarray(f(t2), dtype=np.float64), axes=(0, 0))
            if not (np.all(np.isfinite(est)) and np.all(np.isfinite(est2))):
                raise QuadratureError("integral is not finite")
            # loose on purpose: kinked integrands converge only algebraically,
            # divergent ones change by orders of magnitude
            if np.any(np.abs(est2 - est) > 1e-2 * (1.0 + np.abs(est2))):
                raise QuadratureError("quadrature did not converge; the integral may diverge")
        return est


@dataclass(frozen=True, eq=False)
class RegressionLoss:
    """``value(z, y)`` and ``gradient_z(z, y)``; both broadcast over arrays."""

    name: str
    value_fn: Callable
    gradient_fn: Callable
    params: dict | None = None

    def value(self, z, y):
        return self.value_fn(np.asarray(z, dtype=np.float64), np.asarray(y, dtype=np.float64))

    def gradient_z(self, z, y):
        return self.gradient_fn(np.asarray(z, dtype=np.float64), np.asarray(y, dtype=np.float64))

    def __call__(self, z, y):
        return self.value(z, y)


def squared_error() -> RegressionLoss:
    return RegressionLoss("squared_error", lambda z, y: (z - y) ** 2, lambda z, y: 2.0 * (z - y))


def absolute_error() -> RegressionLoss:
    return RegressionLoss("absolute_error", lambda z, y: np.abs(z - y), lambda z, y: np.sign(z - y))


def huber(delta: float) -> RegressionLoss:
    """``(z-y)^2 / 2`` inside ``|z-y| <= delta``, ``delta |z-y| - delta^2 / 2`` outside."""
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")

    def value(z, y):
        r = np.abs(z - y)
        return np.where(r <= delta, 0.5 * r * r, delta * r - 0.5 * delta * delta)

    def grad(z, y):
        return clip(z - y, delta)

    return RegressionLoss("huber", value, grad, {"delta": delta})


def constant_loss(c: float = 1.0) -> RegressionLoss:
    return RegressionLoss("constant", lambda z, y: np.full(np.broadcast(z, y).shape, float(c)),
                          lambda z, y: np.zeros(np.broadcast(z, y).shape))


def regression_unhinged() -> RegressionLoss:
    """``-z y``."""
    return RegressionLoss("regression_unhinged", lambda z, y: -z * y, lambda z, y: -y + 0.0 * z)


def clip(y, delta: float):
    """Clamp ``y`` to ``[-delta, delta]``."""
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    out = np.clip(y, -delta, delta)
    return float(out) if np.ndim(out) == 0 else out


def symmetrize_regression(base: RegressionLoss, q: CorruptionDensity) -> RegressionLoss:
    """``L(z, y) - E_{t~q} L(z, t)``, integrated by quadrature.

    Raises :class:`QuadratureError` when the integral of the base loss at
    ``z = 0`` does not converge.
    """
    q.expectation(lambda t: base.value(0.0, t), check=True)

    def _mean_over_t(fn, z):
        z = np.asarray(z, dtype=np.float64)
        return q.expectation(lambda t: fn(z[None, ...], t.reshape((-1,) + (1,) * z.ndim)))

    def value(z, y):
        return base.value_fn(z, y) - _mean_over_t(base.value_fn, z)

    def grad(z, y):
        return base.gradient_fn(z, y) - _mean_over_t(base.gradient_fn, z)

    return RegressionLoss(f"sym_{base.name}", value, grad, {"base": base.name, "density": q})


def linearized_symmetrized_huber(delta: float, q: CorruptionDensity) -> RegressionLoss:
    """``-clip(y, delta) z``: the first-order part of symmetrized Huber at ``z = 0``.

    Only valid when ``q`` is centred and symmetric, since that makes
    ``E_q clip(T, delta) = 0``.
    """
    if not q.centered_symmetric:
        raise InvalidParameterError("linearized symmetrized Huber needs a centred, symmetric density")
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    return RegressionLoss(
        "clipped_unhinged",
        lambda z, y: -np.clip(y, -delta, delta) * z,
        lambda z, y: -np.clip(y, -delta, delta) + 0.0 * z,
        {"delta": delta},
    )


def _target_transform(loss_kind: str, delta: float | None):
    if loss_kind == "unhinged":
        return lambda y: np.asarray(y, dtype=np.float64)
    if loss_kind == "clipped":
        if delta is None or not delta > 0:
            raise InvalidParameterError("clipped loss needs delta > 0")
        return lambda y: np.clip(y, -delta, delta)
    raise InvalidParameterError(f"loss_kind must be 'unhinged' or 'clipped', got {loss_kind!r}")


def _features(X, feature_map):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if feature_map is None:
        return X
    Psi = np.array([np.atleast_1d(np.asarray(feature_map(x), dtype=np.float64)) for x in X])
    return Psi


def closed_form_regression_weights(X, y, feature_map=None, lam: float = 1.0, loss_kind: str = "unhinged",
                                   delta: float | None = None) -> np.ndarray:
    """``w = (1 / (lam N)) sum_i f(y_i) psi(x_i)`` with ``f`` identity or clip.

    This zeroes the gradient of ``(1/N) sum -f(y_i) w.psi(x_i) + lam/2 ||w||^2``.
    """
    if not lam > 0:
        raise InvalidParameterError("lambda must be positive")
    f = _target_transform(loss_kind, delta)
    Psi = _features(X, feature_map)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (Psi.shape[0],) or Psi.shape[0] < 1:
        raise InvalidArgumentError("need one target per row of features, N >= 1")
    return (f(y) @ Psi) / (lam * Psi.shape[0])


def stationarity_residual(w, X, y, feature_map=None, lam: float = 1.0, loss_kind: str = "unhinged",
                          delta: float | None = None) -> float:
    """Norm of the regularised objective's gradient at ``w``."""
    f = _target_transform(loss_kind, delta)
    Psi = _features(X, feature_map)
    y = np.asarray(y, dtype=np.float64)
    grad = -(f(y) @ Psi) / Psi.shape[0] + lam * np.asarray(w, dtype=np.float64)
    return float(np.linalg.norm(grad))


def check_linear_symmetry(f: Callable, q: CorruptionDensity, tol: float = 1e-8) -> CheckReport:
    """A linear loss ``f(y) z`` is symmetric w.r.t. ``q`` iff ``E_q f = 0``."""
    mean = float(q.expectation(lambda t: np.asarray(f(t), dtype=np.float64)))
    worst = abs(mean)
    return CheckReport("linear_symmetry", worst < tol, worst, q.nodes, tol,
                       details=f"density={q.kind} E_q f={mean:.3e}", loss=getattr(f, "__name__", "f"))


def regression_risk_identity(loss: RegressionLoss, predictions, clean_targets, clean_probs,
                             q: CorruptionDensity, p: float) -> tuple[float, float]:
    """Corrupted risk two ways, for discrete clean targets.

    ``predictions`` has shape ``(n,)``; ``clean_targets`` and ``clean_probs``
    have shape ``(n, m)``.  ``lhs`` sums the loss against one mixed measure
    whose atoms are the clean targets (weights ``(1-p) pi``) together with the
    quadrature nodes (weights ``p w``).  ``rhs`` is ``p Gamma + (1-p) clean``.
    """
    if not (0.0 <= p < 1.0):
        raise InvalidParameterError("p must lie in [0, 1)")
    z = np.asarray(predictions, dtype=np.float64)
    Y = np.asarray(clean_targets, dtype=np.float64)
    P = np.asarray(clean_probs, dtype=np.float64)
    t, w = q.rule()
    atoms = np.hstack([Y, np.broadcast_to(t, (z.size, t.size))])
    weights = np.hstack([(1 - p) * P, np.broadcast_to(p * w, (z.size, t.size))])
    lhs = float(np.mean((weights * loss.value(z[:, None], atoms)).sum(axis=1)))
    gamma = float(np.mean((w[None, :] * loss.value(z[:, None], t[None, :])).sum(axis=1)))
    clean = float(np.mean((P * loss.value(z[:, None], Y)).sum(axis=1)))
    return lhs, p * gamma + (1 - p) * clean
