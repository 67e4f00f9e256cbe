"""Projective geometry of ellipses and ellipsoids.

Dual conics are stored with the convention ``m[2, 2] == -1`` so that two
matrices describing the same ellipse compare equal entry by entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateConic, DegenerateProjection, EmptyIntersection, InvalidSampling

DEFAULT_AZIMUTHS = 6
DEFAULT_LEVELS = (0.25, 1.0, 2.25, 4.0)

_HALF_PI = 0.5 * math.pi


def canonical_angle(theta: float) -> float:
    """Wrap an orientation into (-pi/2, pi/2]. Values already in range are returned unchanged."""
    if -_HALF_PI < theta <= _HALF_PI:
        return theta
    return _HALF_PI - math.fmod(math.fmod(_HALF_PI - theta, math.pi) + math.pi, math.pi)


def rotation2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Ellipse:
    """Parametric ellipse: center (cx, cy), semi-axes a >= b > 0, orientation theta.

    The constructor normalizes its input, so ``Ellipse(0, 0, 1, 3, 0)`` is
    stored as ``a=3, b=1, theta=pi/2``.
    """

    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        a, b, theta = float(self.a), float(self.b), float(self.theta)
        if not (a > 0.0 and b > 0.0) or not math.isfinite(a * b):
            raise ValueError(f"semi-axes must be positive and finite, got ({a}, {b})")
        if b > a:
            a, b = b, a
            theta += _HALF_PI
        theta = 0.0 if a == b else canonical_angle(theta)
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_arrays(cls, center: Sequence[float], semi_axes: Sequence[float], angle: float = 0.0) -> "Ellipse":
        return cls(center[0], center[1], semi_axes[0], semi_axes[1], angle)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    @property
    def semi_axes(self) -> np.ndarray:
        return np.array([self.a, self.b])

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b

    def shape_matrix(self) -> np.ndarray:
        """R(theta) diag(a^2, b^2) R(theta)^T, i.e. the Gaussian covariance."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        a2, b2 = self.a * self.a, self.b * self.b
        return np.array([[a2 * c * c + b2 * s * s, (a2 - b2) * c * s],
                         [(a2 - b2) * c * s, a2 * s * s + b2 * c * c]])

    def translated(self, dx: float, dy: float) -> "Ellipse":
        return Ellipse(self.cx + dx, self.cy + dy, self.a, self.b, self.theta)

    def rotated(self, angle: float, pivot: Sequence[float] = (0.0, 0.0)) -> "Ellipse":
        """Rigidly rotate the ellipse by ``angle`` about ``pivot``."""
        c, s = math.cos(angle), math.sin(angle)
        dx, dy = self.cx - pivot[0], self.cy - pivot[1]
        return Ellipse(pivot[0] + c * dx - s * dy, pivot[1] + s * dx + c * dy,
                       self.a, self.b, self.theta + angle)

    def scaled(self, sa: float, sb: float) -> "Ellipse":
        """Scale each semi-axis independently, keeping center and orientation."""
        return Ellipse(self.cx, self.cy, self.a * sa, self.b * sb, self.theta)

    def allclose(self, other: "Ellipse", atol: float = 1e-9) -> bool:
        dtheta = abs(self.theta - other.theta)
        dtheta = min(dtheta, math.pi - dtheta)
        return (abs(self.cx - other.cx) <= atol and abs(self.cy - other.cy) <= atol
                and abs(self.a - other.a) <= atol and abs(self.b - other.b) <= atol
                and dtheta <= atol)


@dataclass(frozen=True, eq=False)
class DualConic:
    """Symmetric 3x3 dual-form matrix of a conic."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"dual conic must be 3x3, got {m.shape}")
        object.__setattr__(self, "m", 0.5 * (m + m.T))

    def normalized(self) -> "DualConic":
        m33 = self.m[2, 2]
        if abs(m33) <= 1e-12 * max(1.0, np.abs(self.m).max()):
            raise DegenerateConic("m33 vanishes, conic is not a bounded ellipse")
        return DualConic(self.m / -m33)


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    center: np.ndarray
    semi_axes: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(3)
        axes = np.asarray(self.semi_axes, dtype=float).reshape(3)
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.any(axes <= 0):
            raise ValueError("ellipsoid semi-axes must be positive")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9) or np.linalg.det(rot) < 0:
            raise ValueError("ellipsoid rotation must be a proper rotation matrix")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "semi_axes", axes)
        object.__setattr__(self, "rotation", rot)

    def dual_quadric(self) -> "DualQuadric":
        h = np.eye(4)
        h[:3, :3] = self.rotation
        h[:3, 3] = self.center
        d = np.diag(np.append(self.semi_axes ** 2, -1.0))
        return DualQuadric(h @ d @ h.T)


@dataclass(frozen=True, eq=False)
class DualQuadric:
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"dual quadric must be 4x4, got {m.shape}")
        object.__setattr__(self, "m", 0.5 * (m + m.T))

    @property
    def center(self) -> np.ndarray:
        return self.m[:3, 3] / self.m[3, 3]


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera; world points map to the camera frame as ``R @ X + t``."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    image_size: tuple = (640, 480)

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float).reshape(3, 3)
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if abs(K[2, 2] - 1.0) > 1e-12 or K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("intrinsics must have K33 = 1 and positive focal lengths")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0:
            raise ValueError("camera rotation must be a proper rotation matrix")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))

    @property
    def P(self) -> np.ndarray:
        return self.K @ np.hstack([self.R, self.t[:, None]])

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    def with_pose(self, R: np.ndarray, t: np.ndarray) -> "Camera":
        return Camera(self.K, R, t, self.image_size)

    def project_points(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        xc = X @ self.R.T + self.t
        uvw = xc @ self.K.T
        return uvw[:, :2] / uvw[:, 2:3]


@dataclass(frozen=True, eq=False)
class GaussianEllipse:
    mean: np.ndarray
    covariance: np.ndarray


def dual_conic_from_ellipse(e: Ellipse) -> DualConic:
    h = np.eye(3)
    h[:2, :2] = rotation2d(e.theta)
    h[:2, 2] = (e.cx, e.cy)
    return DualConic(h @ np.diag([e.a * e.a, e.b * e.b, -1.0]) @ h.T)


def ellipse_from_matrix(m: np.ndarray) -> Ellipse:
    """Recover the ellipse of a raw 3x3 dual-conic matrix (any scale)."""
    m33 = m[2, 2]
    scale = max(abs(m[0, 0]), abs(m[1, 1]), abs(m[0, 1]), abs(m[0, 2]), abs(m[1, 2]), abs(m33))
    if not math.isfinite(scale) or abs(m33) <= 1e-12 * max(1.0, scale):
        raise DegenerateConic("m33 vanishes, conic is not a bounded ellipse")
    k = -1.0 / m33
    cx = -0.5 * (m[0, 2] + m[2, 0]) * k
    cy = -0.5 * (m[1, 2] + m[2, 1]) * k
    s00 = m[0, 0] * k + cx * cx
    s11 = m[1, 1] * k + cy * cy
    s01 = 0.5 * (m[0, 1] + m[1, 0]) * k + cx * cy
    mean = 0.5 * (s00 + s11)
    rad = math.hypot(0.5 * (s00 - s11), s01)
    lam1 = mean + rad
    det = s00 * s11 - s01 * s01
    if not (lam1 > 0.0 and det > 0.0):
        raise DegenerateConic("conic is not an ellipse (2x2 form not positive definite)")
    lam2 = det / lam1
    theta = 0.5 * math.atan2(2.0 * s01, s00 - s11)
    return Ellipse(cx, cy, math.sqrt(lam1), math.sqrt(lam2), theta)


def ellipse_from_dual_conic(c: Union[DualConic, np.ndarray]) -> Ellipse:
    m = c.m if isinstance(c, DualConic) else np.asarray(c, dtype=float)
    return ellipse_from_matrix(m)


def _projected_matrix(P: np.ndarray, R: np.ndarray, t: np.ndarray, Q: np.ndarray) -> np.ndarray:
    center = Q[:3, 3] / Q[3, 3]
    if R[2] @ center + t[2] <= 0.0:
        raise DegenerateProjection("ellipsoid center lies behind the camera")
    m = P @ Q @ P.T
    m = 0.5 * (m + m.T)
    if not m[2, 2] < 0.0:
        raise DegenerateProjection("ellipsoid crosses the principal plane of the camera")
    return m / -m[2, 2]


def project_ellipsoid(cam: Camera, q: DualQuadric) -> DualConic:
    """Image of an ellipsoid as the dual conic ``P Q* P^T``, normalized to m33 = -1."""
    m = _projected_matrix(cam.P, cam.R, cam.t, q.m)
    try:
        ellipse_from_matrix(m)
    except DegenerateConic as exc:
        raise DegenerateProjection(str(exc)) from exc
    return DualConic(m)


def project_ellipse(cam: Camera, q: DualQuadric) -> Ellipse:
    """Shortcut returning the projected ellipse in parametric form."""
    try:
        return ellipse_from_matrix(_projected_matrix(cam.P, cam.R, cam.t, q.m))
    except DegenerateConic as exc:
        raise DegenerateProjection(str(exc)) from exc


def gaussian_from_ellipse(e: Ellipse) -> GaussianEllipse:
    return GaussianEllipse(e.center, e.shape_matrix())


def inverse_shape_matrix(e: Ellipse) -> np.ndarray:
    c, s = math.cos(e.theta), math.sin(e.theta)
    ia, ib = 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)
    return np.array([[ia * c * c + ib * s * s, (ia - ib) * c * s],
                     [(ia - ib) * c * s, ia * s * s + ib * c * c]])


def embedding_value(e: Ellipse, x) -> Union[float, np.ndarray]:
    """Quadratic embedding whose level-1 curve is the ellipse contour.

    Accepts a single point or an (N, 2) array of points.
    """
    x = np.asarray(x, dtype=float)
    d = x - (e.cx, e.cy)
    A = inverse_shape_matrix(e)
    vals = np.einsum("...i,ij,...j->...", d, A, d)
    return float(vals) if vals.ndim == 0 else vals


@lru_cache(maxsize=64)
def _unit_samples(n_azimuths: int, levels: tuple) -> np.ndarray:
    phi = 2.0 * np.pi * np.arange(n_azimuths) / n_azimuths
    radii = np.sqrt(np.asarray(levels, dtype=float))
    pts = np.stack([np.outer(radii, np.cos(phi)).ravel(), np.outer(radii, np.sin(phi)).ravel()], axis=1)
    pts.setflags(write=False)
    return pts


def level_set_samples(e: Ellipse, n_azimuths: int = DEFAULT_AZIMUTHS,
                      levels: Sequence[float] = DEFAULT_LEVELS) -> np.ndarray:
    """Points placed regularly along the level curves ``Phi = s`` of the ellipse.

    Returns an array of shape (len(levels) * n_azimuths, 2), level-major.
    """
    if n_azimuths < 3:
        raise InvalidSampling(f"need at least 3 azimuths, got {n_azimuths}")
    levels = tuple(float(s) for s in levels)
    if not levels or min(levels) <= 0.0:
        raise InvalidSampling("sampling levels must all be positive")
    unit = _unit_samples(int(n_azimuths), levels)
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = unit[:, 0] * e.a
    v = unit[:, 1] * e.b
    return np.stack([e.cx + c * u - s * v, e.cy + s * u + c * v], axis=1)


def sample_levels(samples_per_level: int, levels: Sequence[float]) -> np.ndarray:
    """Level value attached to each point returned by :func:`level_set_samples`."""
    return np.repeat(np.asarray(levels, dtype=float), samples_per_level)


def ellipse_bbox(e: Ellipse) -> np.ndarray:
    c, s = math.cos(e.theta), math.sin(e.theta)
    hw = math.sqrt(e.a * e.a * c * c + e.b * e.b * s * s)
    hh = math.sqrt(e.a * e.a * s * s + e.b * e.b * c * c)
    return np.array([e.cx - hw, e.cy - hh, e.cx + hw, e.cy + hh])


def _line_hits(A: np.ndarray, d_fixed: float, axis: int) -> list:
    """Offsets along the free axis where a axis-aligned line meets the unit level."""
    other = 1 - axis
    qa = A[other, other]
    qb = 2.0 * A[0, 1] * d_fixed
    qc = A[axis, axis] * d_fixed * d_fixed - 1.0
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return []
    r = math.sqrt(disc)
    return [(-qb - r) / (2.0 * qa), (-qb + r) / (2.0 * qa)]


def clip_conic_to_image(c: Union[DualConic, Ellipse], image_size: Sequence[float]) -> np.ndarray:
    """Bounding box of the part of an ellipse that lies inside the image.

    The extremes of the clipped region are attained at ellipse extreme
    points, ellipse/border crossings or image corners, so the box is exact.
    """
    e = c if isinstance(c, Ellipse) else ellipse_from_dual_conic(c)
    w, h = float(image_size[0]), float(image_size[1])
    S = e.shape_matrix()
    A = inverse_shape_matrix(e)
    tol = 1e-9 * max(1.0, w, h)
    cand = []
    sx, sy = math.sqrt(S[0, 0]), math.sqrt(S[1, 1])
    for sign in (-1.0, 1.0):
        cand.append((e.cx + sign * sx, e.cy + sign * S[0, 1] / sx))
        cand.append((e.cx + sign * S[0, 1] / sy, e.cy + sign * sy))
    for x0 in (0.0, w):
        for dy in _line_hits(A, x0 - e.cx, 0):
            cand.append((x0, e.cy + dy))
    for y0 in (0.0, h):
        for dx in _line_hits(A, y0 - e.cy, 1):
            cand.append((e.cx + dx, y0))
    pts = [p for p in cand if -tol <= p[0] <= w + tol and -tol <= p[1] <= h + tol]
    for corner in ((0.0, 0.0), (w, 0.0), (0.0, h), (w, h)):
        d = np.subtract(corner, (e.cx, e.cy))
        if d @ A @ d <= 1.0:
            pts.append(corner)
    if not pts:
        raise EmptyIntersection("ellipse lies entirely outside the image")
    arr = np.asarray(pts)
    lo = np.clip(arr.min(axis=0), 0.0, (w, h))
    hi = np.clip(arr.max(axis=0), 0.0, (w, h))
    return np.array([lo[0], lo[1], hi[0], hi[1]])
