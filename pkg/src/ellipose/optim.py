"""BFGS with Armijo backtracking and central finite-difference gradients,
plus the local SE(3) parameterization used for camera refinement."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .conics import Camera
from .errors import NonFiniteCost


class Termination(str, enum.Enum):
    GRADIENT_SMALL = "GradientSmall"
    COST_STALLED = "CostStalled"
    MAX_ITERATIONS = "MaxIterations"
    LINE_SEARCH_FAILED = "LineSearchFailed"


@dataclass(frozen=True)
class OptimOptions:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    cost_tolerance: float = 1e-10
    fd_step: float = 1e-6
    backtrack: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 60

    def __post_init__(self):
        if min(self.gradient_tolerance, self.cost_tolerance, self.fd_step) <= 0:
            raise ValueError("tolerances and finite-difference step must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class OptimResult:
    x: np.ndarray
    cost: float
    iterations: int
    termination: Termination
    initial_cost: float
    evaluations: int = 0

    @property
    def converged(self) -> bool:
        return self.termination in (Termination.GRADIENT_SMALL, Termination.COST_STALLED)


def fd_steps(x: np.ndarray, rel_step: float) -> np.ndarray:
    return rel_step * np.maximum(1.0, np.abs(x))


def numeric_gradient(f: Callable[[np.ndarray], float], x, step=1e-6) -> np.ndarray:
    """Central differences; ``step`` is a scalar or one absolute step per coordinate."""
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(step, dtype=float), x.shape)
    g = np.empty_like(x)
    probe = x.copy()
    for i in range(x.size):
        probe[i] = x[i] + h[i]
        fp = f(probe)
        probe[i] = x[i] - h[i]
        fm = f(probe)
        probe[i] = x[i]
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteCost(f"non-finite cost while differentiating coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h[i])
    return g


def minimize(f: Callable[[np.ndarray], float], x0, opts: OptimOptions = OptimOptions(),
             steps: Optional[np.ndarray] = None) -> OptimResult:
    """Minimize ``f`` with BFGS.

    The inverse Hessian starts as the identity and is rescaled by
    s'y / y'y before the first update.  ``steps`` overrides the relative
    finite-difference step with absolute per-coordinate steps.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    calls = [0]

    def cost(z):
        calls[0] += 1
        return float(f(z))

    def grad(z):
        h = steps if steps is not None else fd_steps(z, opts.fd_step)
        return numeric_gradient(cost, z, h)

    fx = cost(x)
    if not math.isfinite(fx):
        raise NonFiniteCost("cost is not finite at the starting point")
    f0 = fx
    g = grad(x)
    H = np.eye(n)
    first_update = True
    termination = Termination.MAX_ITERATIONS
    it = 0
    for it in range(1, opts.max_iterations + 1):
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0.0:
            H = np.eye(n)
            p = -g
            slope = float(g @ p)
        if first_update:
            # unit-length first step keeps the path invariant to cost scaling
            gnorm = float(np.max(np.abs(g)))
            if gnorm > 0.0:
                p = p / gnorm
                slope = slope / gnorm
        alpha, f_new, x_new = _armijo(cost, x, fx, p, slope, opts)
        if x_new is None and not np.allclose(H, np.eye(n)):
            H = np.eye(n)
            p = -g
            alpha, f_new, x_new = _armijo(cost, x, fx, p, float(g @ p), opts)
        if x_new is None:
            termination = Termination.LINE_SEARCH_FAILED
            break
        decrease = fx - f_new
        x_prev, g_prev = x, g
        x, fx = x_new, f_new
        if decrease <= opts.cost_tolerance * max(abs(fx + decrease), 1e-300):
            termination = Termination.COST_STALLED
            break
        g = grad(x)
        if float(np.max(np.abs(g))) < opts.gradient_tolerance:
            termination = Termination.GRADIENT_SMALL
            break
        s = x - x_prev
        y = g - g_prev
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if first_update:
                H = np.eye(n) * (sy / float(y @ y))
                first_update = False
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            H = 0.5 * (H + H.T)
    return OptimResult(x=x, cost=fx, iterations=it, termination=termination,
                       initial_cost=f0, evaluations=calls[0])


def _armijo(cost, x, fx, p, slope, opts):
    """Backtracking line search; returns (alpha, f, x) or (0, fx, None)."""
    if not np.any(p):
        return 0.0, fx, x
    alpha = 1.0
    for _ in range(opts.max_backtracks):
        x_new = x + alpha * p
        f_new = cost(x_new)
        if math.isfinite(f_new) and f_new <= fx + opts.sufficient_decrease * alpha * slope:
            return alpha, f_new, x_new
        alpha *= opts.backtrack
    return 0.0, fx, None


# ---------------------------------------------------------------------------
# SE(3) increments


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(w) -> np.ndarray:
    """Rotation matrix exp([w]x)."""
    w = np.asarray(w, dtype=float)
    angle = math.sqrt(float(w @ w))
    if angle < 1e-12:
        K = skew(w)
        return np.eye(3) + K + 0.5 * K @ K
    K = skew(w / angle)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    cos_angle = min(1.0, max(-1.0, 0.5 * (np.trace(R) - 1.0)))
    angle = math.acos(cos_angle)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-8:
        return 0.5 * v
    if math.pi - angle < 1e-6:
        # near pi: axis from the symmetric part
        M = 0.5 * (R + np.eye(3))
        axis = M[:, int(np.argmax(np.diag(M)))]
        axis = axis / np.linalg.norm(axis)
        if axis @ v < 0:
            axis = -axis
        return angle * axis
    return angle / (2.0 * math.sin(angle)) * v


def orthonormalize(R: np.ndarray) -> np.ndarray:
    if np.abs(R.T @ R - np.eye(3)).max() <= 1e-9:
        return R
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


def apply_pose_params(p, base: Camera) -> Camera:
    """Camera with rotation exp([w]x) R0 and translation t0 + tau, p = (w, tau)."""
    p = np.asarray(p, dtype=float)
    R = orthonormalize(rodrigues(p[:3]) @ base.R)
    return base.with_pose(R, base.t + p[3:6])


POSE_FD_STEPS = np.full(6, 1e-6)
