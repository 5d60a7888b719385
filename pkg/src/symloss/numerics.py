"""Dense float64 helpers shared by every other module.

All randomness in the package goes through :func:`make_rng`, which builds a
``numpy.random.Generator`` on the PCG64 bit generator.  PCG64 output is
specified bit-for-bit by numpy and does not depend on the platform, so a
seed plus a spawn key fully determines every draw.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "InvalidArgumentError",
    "as_real_vector",
    "euclidean_normalize",
    "log_sum_exp",
    "make_rng",
    "softmax",
]

DEFAULT_NORM_EPS = 1e-5


class InvalidArgumentError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_real_vector(z, name: str = "z") -> np.ndarray:
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise InvalidArgumentError(f"{name} must have at least one entry along its last axis")
    return arr


def softmax(z) -> np.ndarray:
    """Softmax along the last axis, with max-subtraction.

    >>> softmax([0.0, 0.0]).tolist()
    [0.5, 0.5]
    """
    z = as_real_vector(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_sum_exp(z) -> np.ndarray | float:
    """``log(sum(exp(z)))`` along the last axis; never overflows for finite ``z``."""
    z = as_real_vector(z)
    m = z.max(axis=-1)
    out = m + np.log(np.exp(z - m[..., None]).sum(axis=-1))
    return float(out) if out.ndim == 0 else out


def euclidean_normalize(z, epsilon: float = DEFAULT_NORM_EPS) -> np.ndarray:
    """Return ``z / max(||z||_2, epsilon)`` along the last axis."""
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    z = np.asarray(z, dtype=np.float64)
    norm = np.sqrt((z * z).sum(axis=-1, keepdims=True))
    return z / np.maximum(norm, epsilon)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for ``seed``; ``keys`` derive independent child streams.

    ``make_rng(s, 3)`` and ``make_rng(s, 4)`` are statistically independent
    and both reproducible, which is how per-epoch shuffles and per-layer
    initialisations are separated from one run seed.
    """
    if seed < 0:
        raise InvalidArgumentError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
