"""Ellipse-to-ellipse distances usable as optimization costs.

All functions take two :class:`~ellipose.conics.Ellipse` and return a
non-negative float.  :func:`distance` dispatches on :class:`MetricKind`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .conics import (DEFAULT_AZIMUTHS, DEFAULT_LEVELS, Ellipse, clip_conic_to_image,
                     ellipse_bbox, level_set_samples, sample_levels)
from .polygons import inscribed_polygon_area, overlap_areas


class MetricKind(str, enum.Enum):
    IOU = "iou"
    GIOU = "giou"
    BBOX = "bbox"
    QBBOX = "qbbox"
    ALGEBRAIC_VEC = "algebraic_vec"
    ALGEBRAIC_FRO = "algebraic_fro"
    WASSERSTEIN = "wasserstein"
    BHATTACHARYYA = "bhattacharyya"
    LEVEL_SET = "levelset"

    @classmethod
    def parse(cls, name: "str | MetricKind") -> "MetricKind":
        if isinstance(name, MetricKind):
            return name
        key = str(name).strip().lower().replace("-", "_")
        for kind in cls:
            if kind.value == key or kind.name.lower() == key:
                return kind
        raise ValueError(f"unknown metric {name!r}; valid names: {', '.join(metric_names())}")


def metric_names() -> list:
    return [k.value for k in MetricKind]


@dataclass(frozen=True)
class MetricContext:
    """Read-only settings shared by the metrics.

    ``level_scale`` multiplies every sampling level, enlarging or shrinking
    the area covered by the level-set samples.
    """

    image_size: Optional[tuple] = None
    polygon_resolution: int = 256
    n_azimuths: int = DEFAULT_AZIMUTHS
    levels: tuple = DEFAULT_LEVELS
    level_scale: float = 1.0

    def __post_init__(self):
        if self.polygon_resolution < 16:
            raise ValueError("polygon_resolution must be at least 16")
        if self.level_scale <= 0:
            raise ValueError("level_scale must be positive")
        object.__setattr__(self, "levels", tuple(float(s) for s in self.levels))

    @property
    def scaled_levels(self) -> tuple:
        return tuple(s * self.level_scale for s in self.levels)

    def with_image(self, image_size) -> "MetricContext":
        return MetricContext(tuple(image_size), self.polygon_resolution, self.n_azimuths,
                             self.levels, self.level_scale)


DEFAULT_CONTEXT = MetricContext()


def _bboxes_disjoint(e1: Ellipse, e2: Ellipse) -> bool:
    b1, b2 = ellipse_bbox(e1), ellipse_bbox(e2)
    return b1[2] < b2[0] or b2[2] < b1[0] or b1[3] < b2[1] or b2[3] < b1[1]


def iou_distance(e1: Ellipse, e2: Ellipse, ctx: MetricContext = DEFAULT_CONTEXT) -> float:
    """Jaccard distance 1 - |E1 ∩ E2| / |E1 ∪ E2| on inscribed N-gons."""
    if _bboxes_disjoint(e1, e2):
        return 1.0
    n = ctx.polygon_resolution
    inter, _ = overlap_areas(e1, e2, n, with_hull=False)
    union = inscribed_polygon_area(e1, n) + inscribed_polygon_area(e2, n) - inter
    return min(1.0, max(0.0, 1.0 - inter / union))


def giou_distance(e1: Ellipse, e2: Ellipse, ctx: MetricContext = DEFAULT_CONTEXT) -> float:
    """Generalized IoU distance, in [0, 2]; the enclosing set is the convex hull."""
    n = ctx.polygon_resolution
    inter, hull = overlap_areas(e1, e2, n, with_hull=True)
    union = inscribed_polygon_area(e1, n) + inscribed_polygon_area(e2, n) - inter
    giou = inter / union - (hull - union) / hull
    return min(2.0, max(0.0, 1.0 - giou))


def bbox_distance(e1: Ellipse, e2: Ellipse) -> float:
    d = ellipse_bbox(e1) - ellipse_bbox(e2)
    return float(d @ d)


def qbbox_distance(detection: Ellipse, projection: Ellipse, ctx: MetricContext) -> float:
    """Box-corner error after clipping both boxes to the image.

    Raises EmptyIntersection when either ellipse misses the image entirely.
    """
    if ctx.image_size is None:
        raise ValueError("qbbox distance needs an image size in the metric context")
    d = clip_conic_to_image(detection, ctx.image_size) - clip_conic_to_image(projection, ctx.image_size)
    return float(d @ d)


def _dual_entries(e: Ellipse) -> tuple:
    # H diag(a^2, b^2, -1) H^T with H = [[R, c], [0, 1]]
    c, s = math.cos(e.theta), math.sin(e.theta)
    a2, b2 = e.a * e.a, e.b * e.b
    s00 = a2 * c * c + b2 * s * s
    s01 = (a2 - b2) * c * s
    s11 = a2 * s * s + b2 * c * c
    return (s00 - e.cx * e.cx, s01 - e.cx * e.cy, -e.cx, s11 - e.cy * e.cy, -e.cy)


def algebraic_distance(e1: Ellipse, e2: Ellipse, kind: str = "vec") -> float:
    """Difference of dual conics normalized to m33 = -1.

    ``kind="vec"`` is the squared norm over the five free upper-triangle
    entries, ``kind="fro"`` the Frobenius norm of the full difference.
    """
    d00, d01, d02, d11, d12 = (u - v for u, v in zip(_dual_entries(e1), _dual_entries(e2)))
    if kind == "vec":
        return d00 * d00 + d01 * d01 + d02 * d02 + d11 * d11 + d12 * d12
    if kind == "fro":
        return math.sqrt(d00 * d00 + d11 * d11 + 2.0 * (d01 * d01 + d02 * d02 + d12 * d12))
    raise ValueError(f"algebraic kind must be 'vec' or 'fro', got {kind!r}")


def _cov_entries(e: Ellipse) -> tuple:
    c, s = math.cos(e.theta), math.sin(e.theta)
    a2, b2 = e.a * e.a, e.b * e.b
    return a2 * c * c + b2 * s * s, (a2 - b2) * c * s, a2 * s * s + b2 * c * c


def wasserstein_distance(e1: Ellipse, e2: Ellipse) -> float:
    """Squared 2-Wasserstein distance between the ellipses seen as Gaussians.

    For 2x2 SPD matrices Tr sqrt(M) = sqrt(Tr M + 2 sqrt(det M)), and with
    M = S1^1/2 S2 S1^1/2 this gives Tr M = Tr(S1 S2), det M = det S1 det S2.
    """
    p00, p01, p11 = _cov_entries(e1)
    q00, q01, q11 = _cov_entries(e2)
    tr_m = p00 * q00 + 2.0 * p01 * q01 + p11 * q11
    det_root = e1.a * e1.b * e2.a * e2.b
    cross = math.sqrt(max(tr_m + 2.0 * det_root, 0.0))
    shape = e1.a * e1.a + e1.b * e1.b + e2.a * e2.a + e2.b * e2.b - 2.0 * cross
    dx, dy = e1.cx - e2.cx, e1.cy - e2.cy
    return dx * dx + dy * dy + max(shape, 0.0)


def _cholesky2(s00: float, s01: float, s11: float) -> tuple:
    for jitter in (0.0, 1e-12):
        a, c = s00 + jitter, s11 + jitter
        if a > 0.0:
            l00 = math.sqrt(a)
            l10 = s01 / l00
            r = c - l10 * l10
            if r > 0.0:
                return l00, l10, math.sqrt(r)
    raise np.linalg.LinAlgError("covariance is not positive definite")


def bhattacharyya_distance(e1: Ellipse, e2: Ellipse) -> float:
    p00, p01, p11 = _cov_entries(e1)
    q00, q01, q11 = _cov_entries(e2)
    l00, l10, l11 = _cholesky2(0.5 * (p00 + q00), 0.5 * (p01 + q01), 0.5 * (p11 + q11))
    dx, dy = e1.cx - e2.cx, e1.cy - e2.cy
    z0 = dx / l00
    z1 = (dy - l10 * z0) / l11
    log_det = 2.0 * math.log(l00 * l11)
    log_det1 = 2.0 * math.log(e1.a * e1.b)
    log_det2 = 2.0 * math.log(e2.a * e2.b)
    value = 0.125 * (z0 * z0 + z1 * z1) + 0.5 * (log_det - 0.5 * (log_det1 + log_det2))
    return max(value, 0.0)


def level_set_residuals(samples: np.ndarray, levels: np.ndarray, other: Ellipse) -> np.ndarray:
    """Embedding differences at precomputed anchor samples."""
    c, s = math.cos(other.theta), math.sin(other.theta)
    dx = samples[:, 0] - other.cx
    dy = samples[:, 1] - other.cy
    u = (c * dx + s * dy) / other.a
    v = (-s * dx + c * dy) / other.b
    return levels - (u * u + v * v)


def level_set_distance(detection: Ellipse, other: Ellipse, ctx: MetricContext = DEFAULT_CONTEXT) -> float:
    """Sum of squared embedding differences over samples of the first ellipse.

    Samples lie on level curves of ``detection`` so its own embedding value
    there is exactly the level; only the second embedding is evaluated.
    """
    levels = ctx.scaled_levels
    samples = level_set_samples(detection, ctx.n_azimuths, levels)
    r = level_set_residuals(samples, sample_levels(ctx.n_azimuths, levels), other)
    return float(r @ r)


def distance(kind: "MetricKind | str", e1: Ellipse, e2: Ellipse, ctx: MetricContext = DEFAULT_CONTEXT) -> float:
    """Evaluate metric ``kind``; for asymmetric metrics ``e1`` is the detection."""
    kind = MetricKind.parse(kind)
    if kind is MetricKind.IOU:
        return iou_distance(e1, e2, ctx)
    if kind is MetricKind.GIOU:
        return giou_distance(e1, e2, ctx)
    if kind is MetricKind.BBOX:
        return bbox_distance(e1, e2)
    if kind is MetricKind.QBBOX:
        return qbbox_distance(e1, e2, ctx)
    if kind is MetricKind.ALGEBRAIC_VEC:
        return algebraic_distance(e1, e2, "vec")
    if kind is MetricKind.ALGEBRAIC_FRO:
        return algebraic_distance(e1, e2, "fro")
    if kind is MetricKind.WASSERSTEIN:
        return wasserstein_distance(e1, e2)
    if kind is MetricKind.BHATTACHARYYA:
        return bhattacharyya_distance(e1, e2)
    return level_set_distance(e1, e2, ctx)


REGISTRATION_METRICS: Sequence[MetricKind] = (
    MetricKind.GIOU, MetricKind.BBOX, MetricKind.ALGEBRAIC_VEC, MetricKind.ALGEBRAIC_FRO,
    MetricKind.WASSERSTEIN, MetricKind.BHATTACHARYYA, MetricKind.LEVEL_SET,
)
