"""Convex-polygon areas behind the IoU and GIoU ellipse distances.

Ellipses are replaced by inscribed N-gons.  The fast route builds the
intersection as the hull of vertices lying inside the other polygon plus
the boundary crossings, located with the polygon's Minkowski gauge.  A
Sutherland-Hodgman clip restricted to the edges the other ellipse reaches
serves as the fallback for thin, crossing shapes and as a cross-check.
Hulls use Andrew's monotone chain.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numba import njit

from .conics import Ellipse, ellipse_bbox


# gauge thresholds for "inside, boundary included" and "strictly inside"
INSIDE_TOL = 1.0 + 1e-12
STRICT_TOL = 1.0 - 1e-12


@lru_cache(maxsize=16)
def _unit_circle(n: int) -> np.ndarray:
    phi = 2.0 * np.pi * np.arange(n) / n
    out = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    out.setflags(write=False)
    return out


def ellipse_polygon(e: Ellipse, n: int) -> np.ndarray:
    """Counter-clockwise vertices of the N-gon inscribed in ``e``."""
    unit = _unit_circle(int(n))
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = unit[:, 0] * e.a
    v = unit[:, 1] * e.b
    return np.stack([e.cx + c * u - s * v, e.cy + s * u + c * v], axis=1)


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def inscribed_polygon_area(e: Ellipse, n: int) -> float:
    return 0.5 * n * e.a * e.b * math.sin(2.0 * math.pi / n)


@njit(cache=True)
def _active_edges(clip, s00, s01, s11, cx, cy, out):
    """Flag clip edges whose supporting line the subject ellipse crosses."""
    n = clip.shape[0]
    count = 0
    for k in range(n):
        ax = clip[k, 0]
        ay = clip[k, 1]
        j = k + 1 if k + 1 < n else 0
        ex = clip[j, 0] - ax
        ey = clip[j, 1] - ay
        # outward normal of a CCW edge is (ey, -ex)
        nx = ey
        ny = -ex
        support = nx * cx + ny * cy + math.sqrt(max(nx * nx * s00 + 2.0 * nx * ny * s01 + ny * ny * s11, 0.0))
        if support > nx * ax + ny * ay:
            out[k] = True
            count += 1
        else:
            out[k] = False
    return count


@njit(cache=True)
def _clip_area(subj, clip, active):
    n = subj.shape[0]
    cap = 2 * (n + clip.shape[0]) + 4
    bx = np.empty(cap)
    by = np.empty(cap)
    ox = np.empty(cap)
    oy = np.empty(cap)
    for i in range(n):
        bx[i] = subj[i, 0]
        by[i] = subj[i, 1]
    m = n
    nc = clip.shape[0]
    for k in range(nc):
        if not active[k]:
            continue
        ax = clip[k, 0]
        ay = clip[k, 1]
        j = k + 1 if k + 1 < nc else 0
        ex = clip[j, 0] - ax
        ey = clip[j, 1] - ay
        cnt = 0
        px = bx[m - 1]
        py = by[m - 1]
        dp = ex * (py - ay) - ey * (px - ax)
        for i in range(m):
            qx = bx[i]
            qy = by[i]
            dq = ex * (qy - ay) - ey * (qx - ax)
            if dq >= 0.0:
                if dp < 0.0:
                    t = dp / (dp - dq)
                    ox[cnt] = px + t * (qx - px)
                    oy[cnt] = py + t * (qy - py)
                    cnt += 1
                ox[cnt] = qx
                oy[cnt] = qy
                cnt += 1
            elif dp >= 0.0:
                t = dp / (dp - dq)
                ox[cnt] = px + t * (qx - px)
                oy[cnt] = py + t * (qy - py)
                cnt += 1
            px = qx
            py = qy
            dp = dq
        m = cnt
        if m < 3:
            return 0.0
        for i in range(m):
            bx[i] = ox[i]
            by[i] = oy[i]
    area = 0.0
    for i in range(m):
        j = i + 1 if i + 1 < m else 0
        area += bx[i] * by[j] - bx[j] * by[i]
    return 0.5 * area


@njit(cache=True)
def _intersection_area(p1, p2, sh1, sh2):
    """Area of p1 ∩ p2; sh = (s00, s01, s11, cx, cy) of each polygon's ellipse."""
    act2 = np.empty(p2.shape[0], dtype=np.bool_)
    act1 = np.empty(p1.shape[0], dtype=np.bool_)
    n2 = _active_edges(p2, sh1[0], sh1[1], sh1[2], sh1[3], sh1[4], act2)
    n1 = _active_edges(p1, sh2[0], sh2[1], sh2[2], sh2[3], sh2[4], act1)
    if n2 <= n1:
        return _clip_area(p1, p2, act2)
    return _clip_area(p2, p1, act1)


@njit(cache=True)
def _hull_area(pts):
    n = pts.shape[0]
    order = np.argsort(pts[:, 0] + 1e-12 * pts[:, 1])
    xs = np.empty(n)
    ys = np.empty(n)
    for i in range(n):
        xs[i] = pts[order[i], 0]
        ys[i] = pts[order[i], 1]
    hx = np.empty(2 * n)
    hy = np.empty(2 * n)
    k = 0
    for i in range(n):
        while k >= 2 and (hx[k - 1] - hx[k - 2]) * (ys[i] - hy[k - 2]) - (hy[k - 1] - hy[k - 2]) * (xs[i] - hx[k - 2]) <= 0.0:
            k -= 1
        hx[k] = xs[i]
        hy[k] = ys[i]
        k += 1
    lower = k + 1
    for i in range(n - 2, -1, -1):
        while k >= lower and (hx[k - 1] - hx[k - 2]) * (ys[i] - hy[k - 2]) - (hy[k - 1] - hy[k - 2]) * (xs[i] - hx[k - 2]) <= 0.0:
            k -= 1
        hx[k] = xs[i]
        hy[k] = ys[i]
        k += 1
    area = 0.0
    for i in range(k - 1):
        area += hx[i] * hy[i + 1] - hx[i + 1] * hy[i]
    return 0.5 * area


@njit(cache=True)
def _to_canonical(pts, cx, cy, a, b, theta):
    c = math.cos(theta)
    s = math.sin(theta)
    out = np.empty_like(pts)
    for i in range(pts.shape[0]):
        dx = pts[i, 0] - cx
        dy = pts[i, 1] - cy
        out[i, 0] = (c * dx + s * dy) / a
        out[i, 1] = (-s * dx + c * dy) / b
    return out


@njit(cache=True)
def _gauge(x, y, n):
    """Minkowski gauge of the regular unit N-gon with a vertex at angle 0."""
    step = 2.0 * math.pi / n
    phi = math.atan2(y, x)
    if phi < 0.0:
        phi += 2.0 * math.pi
    k = int(phi / step)
    if k >= n:
        k = n - 1
    mid = (k + 0.5) * step
    return (x * math.cos(mid) + y * math.sin(mid)) / math.cos(0.5 * step)


@lru_cache(maxsize=16)
def _sector_normals(n: int) -> np.ndarray:
    """Rows (nx, ny) of scaled sector normals so that gauge = x nx + y ny."""
    mid = (np.arange(n) + 0.5) * 2.0 * np.pi / n
    out = np.stack([np.cos(mid), np.sin(mid)], axis=1) / math.cos(math.pi / n)
    out.setflags(write=False)
    return out


@njit(cache=True)
def _gauges(pc, normals, gauge, sector):
    n = normals.shape[0]
    step = 2.0 * math.pi / n
    for i in range(pc.shape[0]):
        x = pc[i, 0]
        y = pc[i, 1]
        phi = math.atan2(y, x)
        if phi < 0.0:
            phi += 2.0 * math.pi
        k = int(phi / step)
        if k >= n:
            k = n - 1
        sector[i] = k
        gauge[i] = x * normals[k, 0] + y * normals[k, 1]


@njit(cache=True)
def _sector_gauge(x, y, normals):
    n = normals.shape[0]
    phi = math.atan2(y, x)
    if phi < 0.0:
        phi += 2.0 * math.pi
    k = int(phi * n / (2.0 * math.pi))
    if k >= n:
        k = n - 1
    return k, x * normals[k, 0] + y * normals[k, 1]


@njit(cache=True)
def _crossing(p, q, pc, qc, normals, lo, hi):
    """Boundary crossing of segment p-q inside parameter bracket [lo, hi].

    pc, qc are the segment ends in the canonical frame of the other polygon;
    the gauge minus one changes sign exactly once within the bracket.  The
    bracket is bisected until it lies in one sector, where the gauge is
    linear and the crossing is solved exactly.
    """
    dx = qc[0] - pc[0]
    dy = qc[1] - pc[1]
    k_lo, g_lo = _sector_gauge(pc[0] + lo * dx, pc[1] + lo * dy, normals)
    k_hi, g_hi = _sector_gauge(pc[0] + hi * dx, pc[1] + hi * dy, normals)
    inside_lo = g_lo <= INSIDE_TOL
    for _ in range(80):
        if k_lo == k_hi:
            break
        mid = 0.5 * (lo + hi)
        k_mid, g_mid = _sector_gauge(pc[0] + mid * dx, pc[1] + mid * dy, normals)
        if (g_mid <= INSIDE_TOL) == inside_lo:
            lo, k_lo, g_lo = mid, k_mid, g_mid
        else:
            hi, k_hi, g_hi = mid, k_mid, g_mid
        if abs(hi - lo) < 1e-17:
            break
    t = 0.5 * (lo + hi)
    if k_lo == k_hi and g_hi != g_lo:
        t = lo + (1.0 - g_lo) * (hi - lo) / (g_hi - g_lo)
        t = min(max(t, min(lo, hi)), max(lo, hi))
    return p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])


@njit(cache=True)
def _deepest_point(ac, bc, ga, gb, ka, kb, n):
    """Parameter and gauge of the segment point deepest inside the unit N-gon.

    The gauge is piecewise linear along a segment with breaks on the vertex
    rays, so the minimum sits on an end point or on a ray crossing.
    """
    dx = bc[0] - ac[0]
    dy = bc[1] - ac[1]
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return 0.0, 2.0
    t0 = -(ac[0] * dx + ac[1] * dy) / len2
    t0 = min(max(t0, 0.0), 1.0)
    cx = ac[0] + t0 * dx
    cy = ac[1] + t0 * dy
    if cx * cx + cy * cy >= 1.0:
        return t0, 2.0
    best_t = 0.0
    best_g = ga
    if gb < best_g:
        best_t = 1.0
        best_g = gb
    step = 2.0 * math.pi / n
    ccw = ac[0] * dy - ac[1] * dx > 0.0
    k = ka
    for _ in range(n // 2 + 2):
        if k == kb:
            break
        ray = (k + 1) * step if ccw else k * step
        ux = math.cos(ray)
        uy = math.sin(ray)
        den = ux * dy - uy * dx
        if den != 0.0:
            t = -(ux * ac[1] - uy * ac[0]) / den
            if 0.0 < t < 1.0:
                px = ac[0] + t * dx
                py = ac[1] + t * dy
                if px * ux + py * uy > 0.0:
                    g = math.sqrt(px * px + py * py)
                    if g < best_g:
                        best_g = g
                        best_t = t
        k = k + 1 if ccw else k - 1
        if k >= n:
            k -= n
        elif k < 0:
            k += n
    return best_t, best_g


@njit(cache=True)
def _hull_area_n(xs, ys, m):
    order = np.argsort(xs[:m] + 1e-12 * ys[:m])
    hx = np.empty(2 * m + 1)
    hy = np.empty(2 * m + 1)
    k = 0
    for ii in range(m):
        i = order[ii]
        while k >= 2 and (hx[k - 1] - hx[k - 2]) * (ys[i] - hy[k - 2]) - (hy[k - 1] - hy[k - 2]) * (xs[i] - hx[k - 2]) <= 0.0:
            k -= 1
        hx[k] = xs[i]
        hy[k] = ys[i]
        k += 1
    lower = k + 1
    for ii in range(m - 2, -1, -1):
        i = order[ii]
        while k >= lower and (hx[k - 1] - hx[k - 2]) * (ys[i] - hy[k - 2]) - (hy[k - 1] - hy[k - 2]) * (xs[i] - hx[k - 2]) <= 0.0:
            k -= 1
        hx[k] = xs[i]
        hy[k] = ys[i]
        k += 1
    area = 0.0
    for i in range(k - 1):
        area += hx[i] * hy[i + 1] - hx[i + 1] * hy[i]
    return 0.5 * area


@njit(cache=True)
def _polygon_from_params(e, unit):
    c = math.cos(e[4])
    s = math.sin(e[4])
    n = unit.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        u = unit[i, 0] * e[2]
        v = unit[i, 1] * e[3]
        out[i, 0] = e[0] + c * u - s * v
        out[i, 1] = e[1] + s * u + c * v
    return out


@njit(cache=True)
def _overlap_areas(e1, e2, unit, normals, want_hull):
    """(intersection area, hull area) of two inscribed polygons.

    e = (cx, cy, a, b, theta) of the ellipse each polygon is inscribed in.
    The intersection is the hull of the vertices of each polygon lying in
    the other plus all boundary crossings.
    """
    n = unit.shape[0]
    p1 = _polygon_from_params(e1, unit)
    p2 = _polygon_from_params(e2, unit)
    c1 = _to_canonical(p1, e2[0], e2[1], e2[2], e2[3], e2[4])
    c2 = _to_canonical(p2, e1[0], e1[1], e1[2], e1[3], e1[4])
    g1 = np.empty(n)
    g2 = np.empty(n)
    k1 = np.empty(n, dtype=np.int64)
    k2 = np.empty(n, dtype=np.int64)
    _gauges(c1, normals, g1, k1)
    _gauges(c2, normals, g2, k2)
    in1 = g1 <= INSIDE_TOL
    in2 = g2 <= INSIDE_TOL
    xs = np.empty(6 * n)
    ys = np.empty(6 * n)
    m = 0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        if in1[i]:
            xs[m] = p1[i, 0]
            ys[m] = p1[i, 1]
            m += 1
        if in2[i]:
            xs[m] = p2[i, 0]
            ys[m] = p2[i, 1]
            m += 1
    for which in range(2):
        p = p1 if which == 0 else p2
        pc = c1 if which == 0 else c2
        flags = in1 if which == 0 else in2
        gs = g1 if which == 0 else g2
        ks = k1 if which == 0 else k2
        for i in range(n):
            j = i + 1 if i + 1 < n else 0
            if flags[i] != flags[j]:
                x, y = _crossing(p[i], p[j], pc[i], pc[j], normals, 0.0, 1.0)
                xs[m] = x
                ys[m] = y
                m += 1
            elif not flags[i]:
                # both ends outside: the edge may still cut through twice
                t, g = _deepest_point(pc[i], pc[j], gs[i], gs[j], ks[i], ks[j], n)
                if g <= 1.0:
                    x, y = _crossing(p[i], p[j], pc[i], pc[j], normals, t, 0.0)
                    xs[m] = x
                    ys[m] = y
                    m += 1
                    x, y = _crossing(p[i], p[j], pc[i], pc[j], normals, t, 1.0)
                    xs[m] = x
                    ys[m] = y
                    m += 1
    inter = _hull_area_n(xs, ys, m) if m >= 3 else 0.0
    hull = 0.0
    if want_hull:
        # vertices on the other boundary stay: coincident vertices would both drop out
        m = 0
        for i in range(n):
            if g1[i] >= STRICT_TOL:
                xs[m] = p1[i, 0]
                ys[m] = p1[i, 1]
                m += 1
            if g2[i] >= STRICT_TOL:
                xs[m] = p2[i, 0]
                ys[m] = p2[i, 1]
                m += 1
        # extreme points of the union are never strictly inside the other polygon
        if m >= 3:
            hull = _hull_area_n(xs, ys, m)
        if hull < inter:
            hull = inter
    return inter, hull


def _params(e: Ellipse) -> np.ndarray:
    return np.array([e.cx, e.cy, e.a, e.b, e.theta])


def _plus_case(e1: Ellipse, e2: Ellipse, n: int) -> bool:
    """True when an edge of each polygon could pass through the other without a vertex inside."""
    k = 4.0 * math.pi / n
    return e1.b < k * e2.a and e2.b < k * e1.a


def _bboxes_disjoint(e1: Ellipse, e2: Ellipse) -> bool:
    b1, b2 = ellipse_bbox(e1), ellipse_bbox(e2)
    return b1[2] < b2[0] or b2[2] < b1[0] or b1[3] < b2[1] or b2[3] < b1[1]


def overlap_areas(e1: Ellipse, e2: Ellipse, n: int, with_hull: bool = True) -> tuple:
    """Intersection and convex-hull areas of the inscribed N-gons of two ellipses."""
    if _plus_case(e1, e2, n):
        p1, p2 = ellipse_polygon(e1, n), ellipse_polygon(e2, n)
        inter = float(_intersection_area(p1, p2, _shape_params(e1), _shape_params(e2)))
        hull = float(_hull_area(np.vstack([p1, p2]))) if with_hull else 0.0
        return inter, hull
    inter, hull = _overlap_areas(np.array([e1.cx, e1.cy, e1.a, e1.b, e1.theta]),
                                 np.array([e2.cx, e2.cy, e2.a, e2.b, e2.theta]),
                                 _unit_circle(n), _sector_normals(n), with_hull)
    return float(inter), float(hull)


def _shape_params(e: Ellipse) -> np.ndarray:
    S = e.shape_matrix()
    return np.array([S[0, 0], S[0, 1], S[1, 1], e.cx, e.cy])


def clip_intersection_area(e1: Ellipse, e2: Ellipse, n: int) -> float:
    """Sutherland-Hodgman reference for :func:`overlap_areas`."""
    return float(_intersection_area(ellipse_polygon(e1, n), ellipse_polygon(e2, n),
                                    _shape_params(e1), _shape_params(e2)))


def intersection_area(e1: Ellipse, e2: Ellipse, n: int) -> float:
    """Exact area of the intersection of the inscribed N-gons of two ellipses."""
    if _bboxes_disjoint(e1, e2):
        return 0.0
    return overlap_areas(e1, e2, n, with_hull=False)[0]


def hull_area(e1: Ellipse, e2: Ellipse, n: int) -> float:
    """Area of the convex hull of both inscribed N-gons."""
    return float(_hull_area(np.vstack([ellipse_polygon(e1, n), ellipse_polygon(e2, n)])))
