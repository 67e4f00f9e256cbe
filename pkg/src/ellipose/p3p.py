"""Three-point absolute pose (Grunert's quartic with Haralick's coefficients)."""

from __future__ import annotations

import math

import numpy as np

from .errors import CollinearPoints, NoRealSolution


def kabsch(src: np.ndarray, dst: np.ndarray):
    """Rotation R and translation t minimizing sum |R src_i + t - dst_i|^2."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, cd - R @ cs


def _quartic_coefficients(a2, b2, c2, ca, cb, cg):
    p = (a2 - c2) / b2
    q = (a2 + c2) / b2
    r = (b2 - c2) / b2
    s = (b2 - a2) / b2
    A4 = (p - 1.0) ** 2 - 4.0 * c2 / b2 * ca * ca
    A3 = 4.0 * (p * (1.0 - p) * cb - (1.0 - q) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb)
    A2 = 2.0 * (p * p - 1.0 + 2.0 * p * p * cb * cb + 2.0 * r * ca * ca
                - 4.0 * q * ca * cb * cg + 2.0 * s * cg * cg)
    A1 = 4.0 * (-p * (1.0 + p) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - q) * ca * cg)
    A0 = (1.0 + p) ** 2 - 4.0 * a2 / b2 * cg * cg
    return np.array([A4, A3, A2, A1, A0])


def _polish_root(coeffs, v, iters=4):
    d = np.polyder(coeffs)
    for _ in range(iters):
        fv, dv = np.polyval(coeffs, v), np.polyval(d, v)
        if dv == 0.0:
            break
        step = fv / dv
        v -= step
        if abs(step) <= 1e-15 * max(1.0, abs(v)):
            break
    return v


def _refine_depths(s, bearings, dist2, iters=5):
    """Gauss-Newton on the three law-of-cosines equations."""
    pairs = ((0, 1), (0, 2), (1, 2))
    for _ in range(iters):
        r = np.empty(3)
        J = np.zeros((3, 3))
        for k, (i, j) in enumerate(pairs):
            cij = float(bearings[i] @ bearings[j])
            r[k] = s[i] ** 2 + s[j] ** 2 - 2.0 * s[i] * s[j] * cij - dist2[k]
            J[k, i] = 2.0 * s[i] - 2.0 * s[j] * cij
            J[k, j] = 2.0 * s[j] - 2.0 * s[i] * cij
        try:
            ds = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        s = s - ds
        if np.max(np.abs(ds)) <= 1e-14 * np.max(np.abs(s)):
            break
    return s


def p3p(points3d, bearings) -> list:
    """Camera extrinsics (R, t) with x_cam = R X + t matching three bearings.

    Returns up to four solutions sorted by depth-residual quality.  Raises
    CollinearPoints for degenerate world points and NoRealSolution when no
    root yields three positive depths.
    """
    X = np.asarray(points3d, dtype=float).reshape(3, 3)
    f = np.asarray(bearings, dtype=float).reshape(3, 3)
    f = f / np.linalg.norm(f, axis=1, keepdims=True)
    scale = max(np.linalg.norm(X[1] - X[0]), np.linalg.norm(X[2] - X[0]), 1e-300)
    if np.linalg.norm(np.cross(X[1] - X[0], X[2] - X[0])) <= 1e-9 * scale * scale:
        raise CollinearPoints("the three world points are collinear")

    a2 = float(np.sum((X[1] - X[2]) ** 2))
    b2 = float(np.sum((X[0] - X[2]) ** 2))
    c2 = float(np.sum((X[0] - X[1]) ** 2))
    ca = float(f[1] @ f[2])
    cb = float(f[0] @ f[2])
    cg = float(f[0] @ f[1])
    if max(ca, cb, cg) >= 1.0 - 1e-15:
        raise NoRealSolution("bearings are not pairwise distinct")

    coeffs = _quartic_coefficients(a2, b2, c2, ca, cb, cg)
    if abs(coeffs[0]) < 1e-14 * np.max(np.abs(coeffs)):
        coeffs = coeffs[1:]
    roots = np.roots(coeffs)
    tol = 1e-6 * max(1.0, float(np.max(np.abs(roots)))) if roots.size else 0.0
    dist2 = np.array([c2, b2, a2])
    solutions = []
    for root in roots:
        if abs(root.imag) > tol or root.real <= 0.0:
            continue
        v = _polish_root(coeffs, float(root.real))
        den = 1.0 + v * v - 2.0 * v * cb
        if den <= 0.0:
            continue
        s1 = math.sqrt(b2 / den)
        # u from s1^2 (1 + u^2 - 2u cos g) = c^2, picking the root consistent with a^2
        qb, qc = -2.0 * cg, 1.0 - c2 / (s1 * s1)
        disc = qb * qb - 4.0 * qc
        if disc < 0.0:
            if disc < -1e-9:
                continue
            disc = 0.0
        cands = [(-qb + math.sqrt(disc)) / 2.0, (-qb - math.sqrt(disc)) / 2.0]
        best = min(cands, key=lambda u: abs(s1 * s1 * (u * u + v * v - 2.0 * u * v * ca) - a2))
        if best <= 0.0:
            continue
        s = _refine_depths(np.array([s1, best * s1, v * s1]), f, dist2)
        if np.any(s <= 0.0):
            continue
        Xc = f * s[:, None]
        R, t = kabsch(X, Xc)
        resid = float(np.max(np.abs((X @ R.T + t) - Xc)))
        if any(np.allclose(R, R0, atol=1e-9) and np.allclose(t, t0, atol=1e-9) for R0, t0, _ in solutions):
            continue
        solutions.append((R, t, resid))
    if not solutions:
        raise NoRealSolution("no positive-depth solution")
    solutions.sort(key=lambda sol: sol[2])
    return [(R, t) for R, t, _ in solutions]


def bearing_residual(R, t, points3d, bearings) -> float:
    """Largest angle (radians) between predicted and given bearings."""
    Xc = np.asarray(points3d, float) @ R.T + t
    f = np.asarray(bearings, float)
    cosang = np.sum(Xc * f, axis=1) / (np.linalg.norm(Xc, axis=1) * np.linalg.norm(f, axis=1))
    return float(np.max(np.arccos(np.clip(cosang, -1.0, 1.0))))
