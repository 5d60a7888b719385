"""Sampling-based checks of loss properties.

Each check draws probes from a seeded generator and returns a
:class:`CheckReport`.  A check certifies a property on the sampled probe set
only (by default inside the box ``[-10, 10]^C``); the report states the box.
The convexity probe can only refute convexity, never prove it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .losses import LossFunction, linear_loss
from .numerics import InvalidArgumentError, make_rng

__all__ = [
    "CheckReport",
    "check_backward",
    "check_gradient",
    "check_local_unhinged",
    "check_non_increasing",
    "check_permutation_invariance",
    "check_remainder_bound",
    "check_symmetry",
    "convexity_probe",
    "estimate_beta",
    "fd_gradient",
    "fd_hessian",
    "linearization",
]

SCHEMA_VERSION = "symloss.check/1"
FD_STEP = 1e-6


@dataclass
class CheckReport:
    check_name: str
    passed: bool
    worst_violation: float
    probe_count: int
    tolerance: float
    details: str = ""
    loss: str = ""
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        # keep the passed <=> worst <= tol contract even if a caller forgets
        self.passed = bool(self.passed and self.worst_violation <= self.tolerance)

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.check_name} loss={self.loss} worst={self.worst_violation:.3e} "
            f"tol={self.tolerance:.1e} probes={self.probe_count} {self.details}".rstrip()
        )

    def to_record(self) -> dict:
        worst = self.worst_violation
        return {
            "schema": SCHEMA_VERSION,
            "check": self.check_name,
            "loss": self.loss,
            "passed": self.passed,
            "worst_violation": worst if math.isfinite(worst) else None,
            "tolerance": self.tolerance,
            "probes": self.probe_count,
            "seed": self.seed,
            "details": self.details,
            "extra": _jsonable(self.extra),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _require_probes(probes: int):
    if probes < 1:
        raise InvalidArgumentError("probes must be >= 1")


def _box(rng, probes, C, radius):
    return rng.uniform(-radius, radius, size=(probes, C))


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def fd_gradient(loss: LossFunction, Z: np.ndarray, y: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of ``loss`` at each row of ``Z``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    y = np.broadcast_to(np.asarray(y), (Z.shape[0],))
    out = np.empty_like(Z)
    for j in range(Z.shape[1]):
        step = np.zeros(Z.shape[1])
        step[j] = h
        out[:, j] = (loss.value(Z + step, y) - loss.value(Z - step, y)) / (2 * h)
    return out


def fd_hessian(loss: LossFunction, z: np.ndarray, y: int, h: float = 1e-5) -> np.ndarray:
    """Symmetrised central-difference Hessian built from analytic gradients."""
    z = np.asarray(z, dtype=np.float64)
    C = z.shape[0]
    shifts = np.eye(C) * h
    up = loss.gradient(z + shifts, np.full(C, y))
    down = loss.gradient(z - shifts, np.full(C, y))
    H = (up - down) / (2 * h)
    return 0.5 * (H + H.T)


def check_gradient(
    loss: LossFunction,
    probes: int = 1000,
    *,
    box_radius: float = 10.0,
    h: float = FD_STEP,
    tol: float = 1e-5,
    seed: int = 0,
) -> CheckReport:
    """Compare the analytic gradient against central differences.

    The error is ``||g_fd - g||_inf / max(||g||_inf, ||g_fd||_inf, 1e-2)``.
    The floor keeps saturated probes (gradients near 1e-9) from turning
    float rounding in the difference quotient into a spurious failure.
    """
    _require_probes(probes)
    rng = make_rng(seed)
    C = loss.num_classes
    Z = _box(rng, probes, C, box_radius)
    y = rng.integers(0, C, size=probes)
    g = loss.gradient(Z, y)
    g_fd = fd_gradient(loss, Z, y, h)
    denom = np.maximum(np.maximum(np.abs(g).max(axis=1), np.abs(g_fd).max(axis=1)), 1e-2)
    rel = np.abs(g_fd - g).max(axis=1) / denom
    worst = float(rel.max()) if np.all(np.isfinite(rel)) else math.inf
    i = int(np.nanargmax(rel)) if np.any(np.isfinite(rel)) else 0
    return CheckReport(
        "gradient", worst <= tol, worst, probes, tol,
        details=f"box=[-{box_radius},{box_radius}]^{C} h={h} worst_label={int(y[i])}",
        loss=loss.name, seed=seed,
    )


# ---------------------------------------------------------------------------
# symmetry and permutations
# ---------------------------------------------------------------------------


def check_symmetry(
    loss: LossFunction,
    probes: int = 10_000,
    box_radius: float = 10.0,
    tol: float = 1e-8,
    *,
    seed: int = 0,
    chunk: int = 2048,
) -> CheckReport:
    """Worst deviation of ``sum_k L(z, k)`` from its value at ``z = 0``."""
    _require_probes(probes)
    rng = make_rng(seed)
    C = loss.num_classes
    ref = loss.class_sum(np.zeros(C))
    worst = 0.0
    details = f"box=[-{box_radius},{box_radius}]^{C}"
    done = 0
    while done < probes:
        m = min(chunk, probes - done)
        sums = loss.class_sum(_box(rng, m, C, box_radius))
        if not (np.all(np.isfinite(sums)) and math.isfinite(ref)):
            return CheckReport("symmetry", False, math.inf, probes, tol,
                               details=details + " non-finite loss value", loss=loss.name, seed=seed)
        worst = max(worst, float(np.abs(sums - ref).max()))
        done += m
    return CheckReport("symmetry", worst <= tol, worst, probes, tol, details=details,
                       loss=loss.name, seed=seed, extra={"class_sum_at_zero": ref})


def _permute(Z: np.ndarray, perms: np.ndarray) -> np.ndarray:
    # tau(z)_{tau(i)} = z_i
    out = np.empty_like(Z)
    rows = np.arange(Z.shape[0])[:, None]
    out[rows, perms] = Z
    return out


def check_permutation_invariance(
    loss: LossFunction,
    probes: int = 10_000,
    tol: float = 1e-10,
    *,
    box_radius: float = 10.0,
    seed: int = 0,
) -> CheckReport:
    """Worst ``|L(tau(z), tau(y)) - L(z, y)|`` over random relabellings ``tau``."""
    _require_probes(probes)
    rng = make_rng(seed)
    C = loss.num_classes
    Z = _box(rng, probes, C, box_radius)
    y = rng.integers(0, C, size=probes)
    perms = np.argsort(rng.random((probes, C)), axis=1)
    Zp = _permute(Z, perms)
    yp = perms[np.arange(probes), y]
    diff = np.abs(loss.value(Zp, yp) - loss.value(Z, y))
    worst = float(diff.max()) if np.all(np.isfinite(diff)) else math.inf
    return CheckReport("permutation_invariance", worst <= tol, worst, probes, tol,
                       details=f"box=[-{box_radius},{box_radius}]^{C}", loss=loss.name, seed=seed)


def check_non_increasing(
    loss: LossFunction,
    probes: int = 2000,
    *,
    box_radius: float = 10.0,
    steps: int = 8,
    max_step: float = 2.0,
    tol: float = 1e-10,
    seed: int = 0,
) -> CheckReport:
    """Raise ``z_y`` along a random monotone path and look for any increase."""
    _require_probes(probes)
    rng = make_rng(seed)
    C = loss.num_classes
    Z = _box(rng, probes, C, box_radius)
    y = rng.integers(0, C, size=probes)
    prev = loss.value(Z, y)
    worst = 0.0
    rows = np.arange(probes)
    for _ in range(steps):
        Z = Z.copy()
        Z[rows, y] += rng.uniform(0.0, max_step, size=probes)
        cur = loss.value(Z, y)
        worst = max(worst, float((cur - prev).max()))
        prev = cur
    return CheckReport("non_increasing", worst <= tol, worst, probes, tol,
                       details=f"start box=[-{box_radius},{box_radius}]^{C}", loss=loss.name, seed=seed)


# ---------------------------------------------------------------------------
# linearisation at equal scores
# ---------------------------------------------------------------------------


def _anchor(anchor, C) -> np.ndarray:
    a = np.asarray(anchor, dtype=np.float64)
    return np.full(C, float(a)) if a.ndim == 0 else a.reshape(C)


def linearization(loss: LossFunction, anchor) -> LossFunction:
    """The linear loss ``l(z, y) = grad_z L(z', y) . z`` at the anchor ``z'``."""
    C = loss.num_classes
    zp = _anchor(anchor, C)
    G = loss.gradient(np.tile(zp, (C, 1)), np.arange(C))
    return linear_loss(G, name=f"lin_{loss.name}")


def check_local_unhinged(loss: LossFunction, anchor_value=0.0, tol: float = 1e-8) -> CheckReport:
    """Is the linearisation at ``anchor`` a positive multiple of the unhinged loss?

    With ``g_y`` the gradient at the anchor and ``u_y = 1/C - e_y`` the
    unhinged gradient, the check requires ``cos(g_y, u_y) >= 1 - tol`` for
    every ``y`` and one common scalar ``s`` with ``g_y = s u_y``.  The scalar
    is reported in ``extra["scalar"]``.  Requiring ``s > 0`` goes beyond what
    the linearisation theorem states; it follows from the non-increasing
    assumption and is what the cosine test enforces.

    ``anchor_value`` may also be a full vector, e.g. ``(1, 0, 0)``; away from
    equal scores the check is expected to fail.
    """
    C = loss.num_classes
    zp = _anchor(anchor_value, C)
    labels = np.arange(C)
    G = loss.gradient(np.tile(zp, (C, 1)), labels)
    G_fd = fd_gradient(loss, np.tile(zp, (C, 1)), labels)
    fd_err = float(np.abs(G - G_fd).max() / max(np.abs(G).max(), 1e-12))
    U = np.full((C, C), 1.0 / C) - np.eye(C)
    gnorm = np.linalg.norm(G, axis=1)
    unorm = np.linalg.norm(U, axis=1)
    anchor_txt = f"anchor={np.array2string(zp, precision=4)}"
    extra = {"gradients": G, "fd_gradient_error": fd_err}
    if fd_err > 1e-4:
        return CheckReport("local_unhinged", False, math.inf, C, tol, loss=loss.name,
                           details=f"{anchor_txt} analytic and FD gradients disagree ({fd_err:.2e}); "
                                   "loss may not be differentiable here", extra=extra)
    if np.any(gnorm < 1e-12):
        return CheckReport("local_unhinged", False, math.inf, C, tol, loss=loss.name,
                           details=f"{anchor_txt} critical point, linearisation result inapplicable",
                           extra=extra)
    cos = (G * U).sum(axis=1) / (gnorm * unorm)
    scalars = (G * U).sum(axis=1) / unorm**2
    spread = float((scalars.max() - scalars.min()) / abs(scalars.mean())) if scalars.mean() != 0 else math.inf
    worst = max(float((1.0 - cos).max()), spread)
    extra.update({"scalar": float(scalars.mean()), "scalars": scalars, "cosines": cos})
    note = "positive scalar required (non-increasing losses)"
    return CheckReport("local_unhinged", worst <= tol, worst, C, tol, loss=loss.name,
                       details=f"{anchor_txt} scalar={scalars.mean():.6g}; {note}", extra=extra)


# ---------------------------------------------------------------------------
# remainder of the linearisation at 0, curvature, convexity
# ---------------------------------------------------------------------------


def estimate_beta(
    loss: LossFunction,
    probes: int = 500,
    *,
    box_radius: float = 10.0,
    seed: int = 0,
) -> float:
    """Largest finite-difference Hessian spectral norm over sampled probes.

    Probes are ``z = 0`` plus points uniform in the box.  The result is a
    lower estimate of the true smoothness constant on that box.
    """
    _require_probes(probes)
    rng = make_rng(seed)
    C = loss.num_classes
    Z = np.vstack([np.zeros((1, C)), _box(rng, probes - 1, C, box_radius)]) if probes > 1 else np.zeros((1, C))
    y = rng.integers(0, C, size=Z.shape[0])
    best = 0.0
    for z, lab in zip(Z, y):
        H = fd_hessian(loss, z, int(lab))
        best = max(best, float(np.abs(np.linalg.eigvalsh(H)).max()))
    return best


def check_remainder_bound(
    loss: LossFunction,
    beta_estimate: float | None = None,
    probes: int = 2000,
    *,
    box_radius: float = 10.0,
    seed: int = 0,
    slack: float = 1e-9,
) -> CheckReport:
    """``|L(z,y) - L(0,y) - grad L(0,y).z| <= (beta/2) ||z||^2`` on sampled probes."""
    _require_probes(probes)
    C = loss.num_classes
    if beta_estimate is None:
        beta_estimate = estimate_beta(loss, box_radius=box_radius, seed=seed + 1)
    if beta_estimate < 0:
        raise InvalidArgumentError("beta_estimate must be non-negative")
    rng = make_rng(seed)
    Z = _box(rng, probes, C, box_radius)
    y = rng.integers(0, C, size=probes)
    zero = np.zeros((probes, C))
    base = loss.value(zero, y)
    g0 = loss.gradient(zero, y)
    remainder = np.abs(loss.value(Z, y) - base - (g0 * Z).sum(axis=1))
    excess = remainder - 0.5 * beta_estimate * (Z * Z).sum(axis=1)
    worst = float(excess.max())
    return CheckReport("remainder_bound", worst <= slack, worst, probes, slack, loss=loss.name, seed=seed,
                       details=f"beta={beta_estimate:.6g} box=[-{box_radius},{box_radius}]^{C}",
                       extra={"beta": beta_estimate, "max_remainder": float(remainder.max())})


def convexity_probe(
    loss: LossFunction,
    probes: int = 10_000,
    *,
    box_radius: float = 10.0,
    seed: int = 0,
    tol: float = 1e-10,
) -> CheckReport:
    """Search for a midpoint-convexity violation ``L(mid) > (L(a)+L(b))/2 + tol``.

    Finding none is reported as "no violation found", never as convex.
    """
    _require_probes(probes)
    rng = make_rng(seed)
    C = loss.num_classes
    A = _box(rng, probes, C, box_radius)
    B = _box(rng, probes, C, box_radius)
    y = rng.integers(0, C, size=probes)
    gap = loss.value(0.5 * (A + B), y) - 0.5 * (loss.value(A, y) + loss.value(B, y))
    i = int(np.argmax(gap))
    worst = float(gap[i])
    if worst > tol:
        details = f"violation witness found: y={int(y[i])}"
        extra = {"witness_a": A[i], "witness_b": B[i], "label": int(y[i])}
    else:
        details, extra = "no violation found", {}
    return CheckReport("convexity_probe", worst <= tol, max(worst, 0.0), probes, tol,
                       details=details, loss=loss.name, seed=seed, extra=extra)


# ---------------------------------------------------------------------------
# end-to-end network gradients
# ---------------------------------------------------------------------------


def check_backward(model, X, y, loss: LossFunction, score_norm=None, *, h: float = 1e-6,
                   tol: float = 1e-4) -> CheckReport:
    """Central differences over every network parameter against :func:`symloss.model.backward`.

    The error is ``||g_fd - g||_2 / max(||g||_2, ||g_fd||_2)`` over all
    parameters stacked.  Batch-statistics normalisation is probed in
    training mode on a fresh copy each time so running estimates never leak
    between evaluations.
    """
    from .model import ScoreNorm, backward

    def norm():
        if score_norm is None or isinstance(score_norm, str):
            return ScoreNorm(score_norm or "none")
        return score_norm.copy()

    net = model.copy()
    _, grads = backward(net, X, y, loss, norm())
    params = net.parameters()
    diffs, g_all, fd_all = [], [], []
    for P, G in zip(params, grads):
        fd = np.empty_like(P)
        flat, fd_flat = P.reshape(-1), fd.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = backward(net, X, y, loss, norm())[0]
            flat[j] = keep - h
            down = backward(net, X, y, loss, norm())[0]
            flat[j] = keep
            fd_flat[j] = (up - down) / (2 * h)
        diffs.append((fd - G).ravel())
        g_all.append(G.ravel())
        fd_all.append(fd.ravel())
    diff = np.concatenate(diffs)
    scale = max(np.linalg.norm(np.concatenate(g_all)), np.linalg.norm(np.concatenate(fd_all)), 1e-12)
    worst = float(np.linalg.norm(diff) / scale)
    kind = norm().kind
    return CheckReport("backward", worst <= tol, worst, int(diff.size), tol, loss=loss.name,
                       details=f"dims={model.layer_dims} score_norm={kind} h={h}")
