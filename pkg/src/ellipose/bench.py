"""Per-frame pose runs over a synthetic dataset and the experiments built on them."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .conics import Ellipse, project_ellipse
from .errors import ElliposeError
from .evaluation import EvalReport, evaluate
from .metrics import DEFAULT_CONTEXT, MetricContext, MetricKind, iou_distance
from .model import Association, FrameRecord, PoseEstimate, SceneMap
from .optim import OptimOptions
from .parallel import parallel_map
from .pose import ransac_init, refine
from .scene import perturb_pose


INIT_MODES = ("ransac", "ransac-gt-assoc", "truth")


@dataclass(frozen=True)
class PoseRunConfig:
    metric: str = "levelset"
    refine: bool = True
    use_uncertainty: bool = False
    seed: int = 0
    init_pos_noise: float = 0.0
    init_rot_noise_deg: float = 0.0
    # "ransac": RANSAC pose and association
    # "ransac-gt-assoc": RANSAC pose, ground-truth association
    # "truth": ground-truth pose perturbed by the init noise, ground-truth association
    init: str = "ransac"

    def __post_init__(self):
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {', '.join(INIT_MODES)}")
        if self.init_pos_noise < 0 or self.init_rot_noise_deg < 0:
            raise ValueError("init noise must be non-negative")


@dataclass
class FrameOutcome:
    frame_id: str
    estimate: Optional[PoseEstimate]
    error: str = ""
    init_estimate: Optional[PoseEstimate] = None


def ground_truth_association(frame: FrameRecord, scene: SceneMap) -> Association:
    ids = {o.id for o in scene}
    return Association(tuple((i, d.object_id) for i, d in enumerate(frame.detections) if d.object_id in ids))


def initial_estimate(frame: FrameRecord, scene: SceneMap, cfg: PoseRunConfig, frame_index: int,
                     ctx: MetricContext = DEFAULT_CONTEXT) -> PoseEstimate:
    if cfg.init == "truth":
        if frame.gt_camera is None:
            raise ElliposeError(f"frame {frame.frame_id}: truth init needs a ground-truth pose")
        rng = np.random.default_rng([cfg.seed, frame_index])
        cam = perturb_pose(frame.gt_camera, cfg.init_pos_noise, cfg.init_rot_noise_deg, rng)
        return PoseEstimate(cam, ground_truth_association(frame, scene))
    est = ransac_init(frame.detections, scene, frame.K, frame.image_size, ctx, seed=cfg.seed)
    if cfg.init == "ransac-gt-assoc":
        est = PoseEstimate(est.camera, ground_truth_association(frame, scene), est.initial_cost, est.final_cost)
    return est


def run_frame(args) -> FrameOutcome:
    frame, scene, cfg, index, ctx, opts = args
    try:
        init = initial_estimate(frame, scene, cfg, index, ctx)
        if not cfg.refine:
            return FrameOutcome(frame.frame_id, init, init_estimate=init)
        est = refine(init, frame.detections, scene, cfg.metric, ctx, opts, cfg.use_uncertainty)
        return FrameOutcome(frame.frame_id, est, init_estimate=init)
    except ElliposeError as exc:
        return FrameOutcome(frame.frame_id, None, f"{type(exc).__name__}: {exc}")


def run_pose(scene: SceneMap, frames: Sequence[FrameRecord], cfg: PoseRunConfig = PoseRunConfig(),
             ctx: MetricContext = DEFAULT_CONTEXT, opts: OptimOptions = OptimOptions(),
             workers: Optional[int] = 1) -> list:
    """One FrameOutcome per frame, in input order."""
    MetricKind.parse(cfg.metric)
    jobs = [(f, scene, cfg, i, ctx, opts) for i, f in enumerate(frames)]
    return parallel_map(run_frame, jobs, workers)


def refine_from(inits: Sequence[FrameOutcome], scene: SceneMap, frames: Sequence[FrameRecord], metric,
                use_uncertainty: bool = False, ctx: MetricContext = DEFAULT_CONTEXT,
                opts: OptimOptions = OptimOptions()) -> list:
    """Refine precomputed initial estimates (shares one RANSAC pass across metrics)."""
    out = []
    for frame, o in zip(frames, inits):
        init = o.init_estimate or o.estimate
        if init is None:
            out.append(FrameOutcome(frame.frame_id, None, o.error))
            continue
        try:
            est = refine(init, frame.detections, scene, metric, ctx, opts, use_uncertainty)
            out.append(FrameOutcome(frame.frame_id, est, init_estimate=init))
        except ElliposeError as exc:
            out.append(FrameOutcome(frame.frame_id, None, f"{type(exc).__name__}: {exc}", init))
    return out


def evaluate_outcomes(frames: Sequence[FrameRecord], outcomes: Sequence[FrameOutcome],
                      use_init: bool = False, **kw) -> EvalReport:
    est = {}
    for o in outcomes:
        e = o.init_estimate if use_init else o.estimate
        est[o.frame_id] = None if e is None else e.camera
    gt = {f.frame_id: f.gt_camera for f in frames}
    counts = {f.frame_id: len(f.detections) for f in frames}
    return evaluate(est, gt, counts, **kw)


def corrupt_frame(frame: FrameRecord, scene: SceneMap, rng: np.random.Generator, shrink: float = 0.5,
                  kappa: float = 10.0, anchor: str = "boundary") -> FrameRecord:
    """Shrink one random non-truncated detection and give it a sigma matching its damage.

    ``anchor="boundary"`` shrinks toward a random point of the outline, so the
    damaged detection stays tangent to the true ellipse there (an occluded
    object); ``anchor="center"`` shrinks about the center.
    """
    if anchor not in ("boundary", "center"):
        raise ValueError("anchor must be 'boundary' or 'center'")
    candidates = [i for i, d in enumerate(frame.detections) if not d.truncated and d.object_id is not None]
    if not candidates:
        return frame
    k = candidates[int(rng.integers(len(candidates)))]
    d = frame.detections[k]
    e = d.ellipse
    cx, cy = e.cx, e.cy
    if anchor == "boundary":
        phi = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(e.theta), np.sin(e.theta)
        u, v = e.a * np.cos(phi), e.b * np.sin(phi)
        px, py = cx + c * u - s * v, cy + s * u + c * v
        cx, cy = px + shrink * (cx - px), py + shrink * (cy - py)
    bad = Ellipse(float(cx), float(cy), e.a * shrink, e.b * shrink, e.theta)
    truth = project_ellipse(frame.gt_camera, scene.get(d.object_id).dual_quadric)
    sigma = 1.0 + kappa * iou_distance(bad, truth)
    dets = list(frame.detections)
    dets[k] = replace(d, ellipse=bad, sigma=sigma)
    return replace(frame, detections=tuple(dets))
