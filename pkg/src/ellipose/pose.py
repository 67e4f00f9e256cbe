"""Camera pose from ellipse detections and an ellipsoid map.

``ransac_init`` runs P3P on object centers over label-consistent triples;
``refine`` then aligns every projected ellipsoid with its detection.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from typing import Optional, Sequence

import numpy as np

from .conics import Camera, DualQuadric, Ellipse, _projected_matrix, ellipse_from_matrix, level_set_samples, sample_levels
from .errors import (DegenerateConic, DegenerateProjection, EmptyIntersection, InsufficientObjects,
                     MissingSigma, NoRealSolution, NoValidPose, CollinearPoints)
from .metrics import DEFAULT_CONTEXT, MetricContext, MetricKind, distance, iou_distance, level_set_residuals
from .model import Association, Detection, PoseEstimate, SceneMap
from .optim import OptimOptions, minimize, orthonormalize, rodrigues
from .p3p import p3p

INLIER_IOU = 0.2
MAX_TRIPLES = 10_000
PENALTY = 1e9


def projected_or_none(cam: Camera, q: DualQuadric) -> Optional[Ellipse]:
    try:
        return ellipse_from_matrix(_projected_matrix(cam.P, cam.R, cam.t, q.m))
    except (DegenerateProjection, DegenerateConic):
        return None


def reprojection_overlap(detection: Ellipse, cam: Camera, q: DualQuadric,
                         ctx: MetricContext = DEFAULT_CONTEXT) -> float:
    """IoU between a detection and the projected ellipsoid; 0 when degenerate."""
    proj = projected_or_none(cam, q)
    if proj is None:
        return 0.0
    return 1.0 - iou_distance(detection, proj, ctx)


def bearing(K: np.ndarray, e: Ellipse) -> np.ndarray:
    v = np.linalg.solve(K, np.array([e.cx, e.cy, 1.0]))
    return v / np.linalg.norm(v)


def candidate_objects(detections: Sequence[Detection], scene: SceneMap) -> list:
    return [[o.id for o in scene.with_label(d.label)] for d in detections]


def _count_triples(cands, det_triples) -> list:
    return [len(cands[i]) * len(cands[j]) * len(cands[k]) for i, j, k in det_triples]


def label_consistent_triples(detections, scene, max_triples=MAX_TRIPLES, rng=None) -> list:
    """((i, j, k), (oi, oj, ok)) tuples with distinct objects of matching labels.

    All triples are listed when there are at most ``max_triples`` of them,
    otherwise ``max_triples`` are drawn uniformly (with replacement).
    """
    cands = candidate_objects(detections, scene)
    usable = [i for i, c in enumerate(cands) if c]
    det_triples = list(itertools.combinations(usable, 3))
    weights = _count_triples(cands, det_triples)
    if sum(weights) <= max_triples:
        out = []
        for tri in det_triples:
            for objs in itertools.product(*(cands[i] for i in tri)):
                if len(set(objs)) == 3:
                    out.append((tri, objs))
        return out
    rng = rng if rng is not None else np.random.default_rng(0)
    p = np.asarray(weights, dtype=float)
    p /= p.sum()
    out = []
    attempts = 0
    while len(out) < max_triples and attempts < 20 * max_triples:
        attempts += 1
        tri = det_triples[int(rng.choice(len(det_triples), p=p))]
        objs = tuple(cands[i][int(rng.integers(len(cands[i])))] for i in tri)
        if len(set(objs)) == 3:
            out.append((tri, objs))
    return out


def score_pose(cam: Camera, detections, scene, ctx=DEFAULT_CONTEXT):
    """Greedy one-to-one label-consistent assignment by reprojection IoU.

    Returns (mean IoU over all detections, list of (det, obj, iou)).
    """
    projections = {o.id: projected_or_none(cam, o.dual_quadric) for o in scene}
    scored = []
    for i, d in enumerate(detections):
        for o in scene.with_label(d.label):
            proj = projections[o.id]
            if proj is None:
                continue
            iou = 1.0 - iou_distance(d.ellipse, proj, ctx)
            if iou > 0.0:
                scored.append((iou, i, o.id))
    scored.sort(key=lambda s: (-s[0], s[1], s[2]))
    used_d, used_o, assigned = set(), set(), []
    for iou, i, oid in scored:
        if i in used_d or oid in used_o:
            continue
        used_d.add(i)
        used_o.add(oid)
        assigned.append((i, oid, iou))
    total = sum(a[2] for a in assigned)
    return total / max(1, len(detections)), sorted(assigned)


def ransac_init(detections: Sequence[Detection], scene: SceneMap, K: np.ndarray, image_size,
                ctx: MetricContext = DEFAULT_CONTEXT, seed: int = 0,
                max_triples: int = MAX_TRIPLES, inlier_iou: float = INLIER_IOU) -> PoseEstimate:
    """Best P3P pose over label-consistent triples, ranked by mean reprojection IoU."""
    start = time.perf_counter()
    K = np.asarray(K, dtype=float)
    cands = candidate_objects(detections, scene)
    if sum(1 for c in cands if c) < 3:
        raise InsufficientObjects("fewer than three detections have a matching map label")
    triples = label_consistent_triples(detections, scene, max_triples, np.random.default_rng(seed))
    bearings = [bearing(K, d.ellipse) for d in detections]
    best = None
    for tri, objs in triples:
        X = np.array([scene.get(o).ellipsoid.center for o in objs])
        f = np.array([bearings[i] for i in tri])
        try:
            sols = p3p(X, f)
        except (CollinearPoints, NoRealSolution):
            continue
        pick, pick_iou = None, -1.0
        for R, t in sols:
            cam = Camera(K, orthonormalize(R), t, image_size)
            local = np.mean([reprojection_overlap(detections[i].ellipse, cam, scene.get(o).dual_quadric, ctx)
                             for i, o in zip(tri, objs)])
            if local > pick_iou:
                pick, pick_iou = cam, local
        if pick is None or pick_iou < inlier_iou:
            continue
        score, assigned = score_pose(pick, detections, scene, ctx)
        inliers = [(i, o) for i, o, iou in assigned if iou >= inlier_iou]
        if len(inliers) < 3:
            continue
        if best is None or score > best[0]:
            best = (score, pick, inliers)
    if best is None:
        raise NoValidPose("no triple produced a pose with at least three inliers")
    score, cam, inliers = best
    est = PoseEstimate(camera=cam, inliers=Association(inliers), initial_cost=1.0 - score,
                       final_cost=1.0 - score)
    est.elapsed_s = time.perf_counter() - start
    return est


class PoseCost:
    """Sum of per-object ellipse distances as a function of a 6-vector increment."""

    def __init__(self, base: Camera, pairs, detections, scene, metric: MetricKind, ctx: MetricContext,
                 use_uncertainty: bool = False):
        self.base = base
        self.metric = metric
        self.ctx = ctx.with_image(base.image_size) if ctx.image_size is None else ctx
        self.dets = [detections[i].ellipse for i, _ in pairs]
        self.quadrics = [scene.get(o).dual_quadric.m for _, o in pairs]
        self.use_uncertainty = use_uncertainty
        if use_uncertainty:
            sig = [detections[i].sigma for i, _ in pairs]
            if any(s is None for s in sig):
                raise MissingSigma("uncertainty weighting needs a sigma on every inlier detection")
            self.weights = [1.0 / s for s in sig]
        if metric is MetricKind.LEVEL_SET:
            # the detection anchors the samples, so they are fixed for the whole run
            levels = self.ctx.scaled_levels
            self.samples = [level_set_samples(d, self.ctx.n_azimuths, levels) for d in self.dets]
            self.levels = sample_levels(self.ctx.n_azimuths, levels)

    def camera(self, p) -> Camera:
        R = orthonormalize(rodrigues(p[:3]) @ self.base.R)
        return self.base.with_pose(R, self.base.t + np.asarray(p[3:6], dtype=float))

    def residuals(self, p) -> list:
        """Per-object distance, or None where the projection is unusable."""
        R = rodrigues(p[:3]) @ self.base.R
        t = self.base.t + p[3:6]
        P = self.base.K @ np.hstack([R, t[:, None]])
        out = []
        for k, (det, Q) in enumerate(zip(self.dets, self.quadrics)):
            try:
                proj = ellipse_from_matrix(_projected_matrix(P, R, t, Q))
                if self.metric is MetricKind.LEVEL_SET:
                    r = level_set_residuals(self.samples[k], self.levels, proj)
                    out.append(float(r @ r))
                else:
                    out.append(distance(self.metric, det, proj, self.ctx))
            except (DegenerateProjection, DegenerateConic, EmptyIntersection):
                out.append(None)
        return out

    def __call__(self, p) -> float:
        total = 0.0
        for k, d in enumerate(self.residuals(p)):
            if d is None or not math.isfinite(d):
                total += PENALTY
            elif self.use_uncertainty:
                total += self.weights[k] * d
            else:
                total += d * d
        return total


def refine(init: PoseEstimate, detections: Sequence[Detection], scene: SceneMap,
           metric: "MetricKind | str" = MetricKind.LEVEL_SET, ctx: MetricContext = DEFAULT_CONTEXT,
           opts: OptimOptions = OptimOptions(), use_uncertainty: bool = False,
           max_recenters: int = 3) -> PoseEstimate:
    """Minimize the ellipse-alignment cost over the camera pose.

    Unweighted mode sums squared distances; weighted mode sums distances
    divided by each detection's sigma.
    """
    start = time.perf_counter()
    kind = MetricKind.parse(metric)
    pairs = list(init.inliers.pairs)
    if len(pairs) < 2:
        raise InsufficientObjects("refinement needs at least two associated objects")
    underconstrained = len(pairs) < 3
    if underconstrained:
        warnings.warn("refining a 6-DoF pose from two ellipses is under-constrained", RuntimeWarning)
    base = init.camera
    cost = PoseCost(base, pairs, detections, scene, kind, ctx, use_uncertainty)
    initial_cost = cost(np.zeros(6))
    res = None
    for _ in range(max_recenters + 1):
        res = minimize(cost, np.zeros(6), opts)
        base = cost.camera(res.x)
        if res.converged or np.linalg.norm(res.x[:3]) < 0.5 * math.pi:
            break
        # large rotation increment: restart the local parameterization at the current pose
        cost = PoseCost(base, pairs, detections, scene, kind, ctx, use_uncertainty)
    final = PoseCost(base, pairs, detections, scene, kind, ctx, use_uncertainty)
    residuals = final.residuals(np.zeros(6))
    return PoseEstimate(camera=base, inliers=init.inliers, initial_cost=initial_cost,
                        final_cost=final(np.zeros(6)), per_object_residuals=residuals, refined=True,
                        termination=res.termination.value, underconstrained=underconstrained,
                        elapsed_s=time.perf_counter() - start)
