"""Detections, map objects, frames and pose estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .conics import Camera, DualQuadric, Ellipse, Ellipsoid


@dataclass(frozen=True)
class Detection:
    label: str
    ellipse: Ellipse
    sigma: Optional[float] = None
    score: Optional[float] = None
    # ground-truth map id, known only for synthetic data
    object_id: Optional[str] = None
    truncated: bool = False

    def __post_init__(self):
        if self.sigma is not None and not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be a positive finite number, got {self.sigma}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError("detection score must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class MapObject:
    id: str
    label: str
    ellipsoid: Ellipsoid

    @cached_property
    def dual_quadric(self) -> DualQuadric:
        return self.ellipsoid.dual_quadric()


@dataclass(frozen=True, eq=False)
class SceneMap:
    objects: tuple

    def __post_init__(self):
        objs = tuple(self.objects)
        ids = [o.id for o in objs]
        if len(set(ids)) != len(ids):
            raise ValueError("map object ids must be unique")
        object.__setattr__(self, "objects", objs)
        object.__setattr__(self, "_by_id", {o.id: o for o in objs})

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def get(self, obj_id: str) -> MapObject:
        return self._by_id[obj_id]

    def with_label(self, label: str) -> list:
        return [o for o in self.objects if o.label == label]


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame_id: str
    K: np.ndarray
    image_size: tuple
    detections: tuple
    gt_camera: Optional[Camera] = None

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float).reshape(3, 3))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        object.__setattr__(self, "detections", tuple(self.detections))

    @property
    def n_truncated(self) -> int:
        return sum(d.truncated for d in self.detections)


@dataclass(frozen=True)
class Association:
    """Pairs of (detection index, map object id)."""

    pairs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(i), str(o)) for i, o in self.pairs))
        dets = [i for i, _ in self.pairs]
        if len(set(dets)) != len(dets):
            raise ValueError("a detection may appear in at most one pair")

    def __len__(self) -> int:
        return len(self.pairs)

    def validate(self, detections: Sequence[Detection], scene: SceneMap) -> None:
        for i, oid in self.pairs:
            if detections[i].label != scene.get(oid).label:
                raise ValueError(f"label mismatch in pair ({i}, {oid})")

    @property
    def object_ids(self) -> list:
        return [o for _, o in self.pairs]


@dataclass
class PoseEstimate:
    camera: Camera
    inliers: Association
    initial_cost: float = float("nan")
    final_cost: float = float("nan")
    per_object_residuals: list = field(default_factory=list)
    refined: bool = False
    termination: str = ""
    underconstrained: bool = False
    elapsed_s: float = 0.0
