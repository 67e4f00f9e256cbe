"""Synthetic ellipsoid scenes, noisy detections and JSON round-trips."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .conics import Camera, Ellipse, Ellipsoid, clip_conic_to_image, ellipse_bbox, project_ellipse
from .errors import DegenerateProjection, EmptyIntersection, PlacementFailure
from .io import atomic_writer
from .metrics import iou_distance
from .model import Detection, FrameRecord, MapObject, PoseEstimate, SceneMap, Association
from .optim import rodrigues

LABELS = ("chair", "monitor", "keyboard", "mug", "plant", "book", "lamp", "bottle", "bag", "box")
PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_objects: int = 8
    n_frames: int = 50
    n_labels: int = 6
    focal: float = 525.0
    image_size: tuple = (640, 480)
    volume: tuple = (3.0, 3.0, 1.2)
    axis_range: tuple = (0.1, 0.4)
    center_jitter_px: float = 4.0
    angle_jitter_deg: float = 2.0
    aniso_scale_range: tuple = (0.83, 1.2)
    noise_model: str = "endpoints"
    log_uniform_scale: bool = True
    partial_visibility_rate: float = 0.2
    truncation_shrink: float = 1.0
    sigma_kappa: float = 10.0
    orbit_radius: tuple = (1.8, 2.8)
    orbit_height: tuple = (0.8, 1.8)
    look_jitter: float = 0.25
    min_detections: int = 4
    min_axis_px: float = 4.0
    init_pos_noise: float = 0.0
    init_rot_noise_deg: float = 0.0

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is mandatory")
        if not 0.0 <= self.partial_visibility_rate <= 1.0:
            raise ValueError("partial_visibility_rate must lie in [0, 1]")
        lo, hi = self.aniso_scale_range
        if lo <= 0 or hi < lo:
            raise ValueError("aniso_scale_range must be positive and ordered")
        if self.n_objects < 1 or self.n_frames < 0 or self.n_labels < 1:
            raise ValueError("object, frame and label counts must be positive")
        if self.noise_model not in ("scale", "endpoints"):
            raise ValueError("noise_model must be 'scale' or 'endpoints'")
        if self.truncation_shrink <= 0:
            raise ValueError("truncation_shrink must be positive")
        for name in ("image_size", "volume", "axis_range", "aniso_scale_range", "orbit_radius", "orbit_height"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def K(self) -> np.ndarray:
        w, h = self.image_size
        return np.array([[self.focal, 0.0, w / 2.0], [0.0, self.focal, h / 2.0], [0.0, 0.0, 1.0]])

    @property
    def noiseless(self) -> bool:
        return (self.center_jitter_px == 0 and self.angle_jitter_deg == 0
                and self.aniso_scale_range == (1.0, 1.0))

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def place_objects(cfg: SynthConfig, rng: np.random.Generator) -> SceneMap:
    """Rejection-sample non-overlapping ellipsoids (bounding spheres kept apart)."""
    half = np.array(cfg.volume) * np.array([0.5, 0.5, 1.0])
    objs, spheres = [], []
    labels = LABELS[: cfg.n_labels] if cfg.n_labels <= len(LABELS) else \
        tuple(f"class{i}" for i in range(cfg.n_labels))
    attempts = 0
    while len(objs) < cfg.n_objects:
        attempts += 1
        if attempts > PLACEMENT_ATTEMPTS:
            raise PlacementFailure(f"could not place {cfg.n_objects} objects in {PLACEMENT_ATTEMPTS} attempts")
        axes = rng.uniform(*cfg.axis_range, size=3)
        radius = float(axes.max())
        center = rng.uniform(-half * np.array([1, 1, 0]), half) + np.array([0.0, 0.0, radius])
        rot = random_rotation(rng)
        if any(np.linalg.norm(center - c) < radius + r for c, r in spheres):
            continue
        spheres.append((center, radius))
        label = labels[len(objs) % len(labels)] if len(objs) < len(labels) else labels[int(rng.integers(len(labels)))]
        objs.append(MapObject(f"obj{len(objs):03d}", label, Ellipsoid(center, axes, rot)))
    return SceneMap(tuple(objs))


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> tuple:
    """(R, t) for a camera at ``position`` looking at ``target`` (image y points down)."""
    f = np.asarray(target, float) - np.asarray(position, float)
    f /= np.linalg.norm(f)
    r = np.cross(f, up)
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    R = np.vstack([r, d, f])
    return R, -R @ np.asarray(position, float)


def perturb_pose(cam: Camera, pos_noise: float, rot_noise_deg: float, rng: np.random.Generator) -> Camera:
    """Move the camera center by exactly ``pos_noise`` and rotate by exactly ``rot_noise_deg``."""
    if pos_noise < 0 or rot_noise_deg < 0:
        raise ValueError("noise magnitudes must be non-negative")
    offset = random_unit_vector(rng) * pos_noise
    axis = random_unit_vector(rng)
    R = cam.R @ rodrigues(axis * math.radians(rot_noise_deg))
    center = cam.position + offset
    return cam.with_pose(R, -R @ center)


def _inside(box, w, h) -> bool:
    return box[0] >= 0 and box[1] >= 0 and box[2] <= w and box[3] <= h


def _yaw_to_column(R, t, X, u_target, K):
    """Rotate the camera about its own vertical axis so that point X lands at column u_target."""
    center = -R.T @ t
    Xc = R @ X + t
    phi = math.atan2(Xc[0], Xc[2])
    phi_target = math.atan((u_target - K[0, 2]) / K[0, 0])
    d = phi - phi_target
    c, s = math.cos(d), math.sin(d)
    Ry = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    R2 = Ry @ R
    return R2, -R2 @ center


def _scale_factors(cfg: SynthConfig, rng, n: int) -> np.ndarray:
    lo, hi = cfg.aniso_scale_range
    if cfg.log_uniform_scale:
        return np.exp(rng.uniform(math.log(lo), math.log(hi), size=n))
    return rng.uniform(lo, hi, size=n)


def _noisy(e: Ellipse, cfg: SynthConfig, rng) -> Ellipse:
    jitter = rng.normal(scale=cfg.center_jitter_px, size=2) if cfg.center_jitter_px > 0 else np.zeros(2)
    dtheta = math.radians(rng.normal(scale=cfg.angle_jitter_deg)) if cfg.angle_jitter_deg > 0 else 0.0
    if cfg.noise_model == "endpoints":
        # each axis endpoint moves on its own, so size error and center shift are coupled
        s = _scale_factors(cfg, rng, 4)
        da, db = 0.5 * e.a * (s[0] - s[1]), 0.5 * e.b * (s[2] - s[3])
        c, sn = math.cos(e.theta), math.sin(e.theta)
        jitter = jitter + (c * da - sn * db, sn * da + c * db)
        return Ellipse(e.cx + jitter[0], e.cy + jitter[1], e.a * 0.5 * (s[0] + s[1]),
                       e.b * 0.5 * (s[2] + s[3]), e.theta + dtheta)
    scale = _scale_factors(cfg, rng, 2)
    return Ellipse(e.cx + jitter[0], e.cy + jitter[1], e.a * scale[0], e.b * scale[1], e.theta + dtheta)


def truncated_detection(proj: Ellipse, image_size, shrink: float = 1.0) -> Ellipse:
    """Axis-aligned ellipse inscribed in the on-image part of the projection's box."""
    x0, y0, x1, y1 = clip_conic_to_image(proj, image_size)
    return Ellipse(0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.5 * (x1 - x0) * shrink, 0.5 * (y1 - y0) * shrink, 0.0)


def _frame_projections(cam: Camera, scene: SceneMap, cfg: SynthConfig) -> list:
    """(object, projected ellipse, fully_inside, center_inside) for every object in front of the camera."""
    w, h = cfg.image_size
    out = []
    for o in scene:
        try:
            proj = project_ellipse(cam, o.dual_quadric)
        except DegenerateProjection:
            continue
        if proj.b < cfg.min_axis_px:
            continue
        box = ellipse_bbox(proj)
        center_in = 0 <= proj.cx <= w and 0 <= proj.cy <= h
        out.append((o, proj, _inside(box, w, h), center_in))
    return out


def _make_frame(cfg: SynthConfig, scene: SceneMap, rng, frame_index: int, want_truncated: bool) -> Optional[FrameRecord]:
    K = cfg.K
    w, h = cfg.image_size
    centroid = np.mean([o.ellipsoid.center for o in scene], axis=0)
    az = rng.uniform(-math.pi, math.pi)
    radius = rng.uniform(*cfg.orbit_radius)
    position = centroid + np.array([radius * math.cos(az), radius * math.sin(az), 0.0])
    position[2] = rng.uniform(*cfg.orbit_height)
    target = centroid + rng.normal(scale=cfg.look_jitter, size=3)
    R, t = look_at(position, target)
    cam = Camera(K, R, t, cfg.image_size)
    chosen = None
    if want_truncated:
        projs = [p for p in _frame_projections(cam, scene, cfg) if p[3]]
        if not projs:
            return None
        o, proj, _, _ = projs[int(rng.integers(len(projs)))]
        half_w = 0.5 * (ellipse_bbox(proj)[2] - ellipse_bbox(proj)[0])
        frac = rng.uniform(0.2, 0.8)
        right = bool(rng.integers(2))
        for _ in range(3):
            u_target = (w - frac * half_w) if right else frac * half_w
            R, t = _yaw_to_column(R, t, o.ellipsoid.center, u_target, K)
            cam = Camera(K, R, t, cfg.image_size)
            try:
                proj = project_ellipse(cam, o.dual_quadric)
            except DegenerateProjection:
                return None
            half_w = 0.5 * (ellipse_bbox(proj)[2] - ellipse_bbox(proj)[0])
        chosen = o.id
    detections = []
    for o, proj, inside, center_in in _frame_projections(cam, scene, cfg):
        if o.id == chosen:
            if inside or not center_in:
                return None
            try:
                det = truncated_detection(proj, cfg.image_size, cfg.truncation_shrink)
            except EmptyIntersection:
                return None
            truncated = True
        elif inside:
            det = _noisy(proj, cfg, rng)
            truncated = False
        else:
            continue
        overlap = 1.0 - iou_distance(det, proj)
        sigma = 1.0 + cfg.sigma_kappa * (1.0 - overlap)
        detections.append(Detection(o.label, det, sigma=sigma, object_id=o.id, truncated=truncated))
    if chosen is not None and not any(d.truncated for d in detections):
        return None
    if len(detections) < cfg.min_detections:
        return None
    return FrameRecord(f"frame{frame_index:05d}", K, cfg.image_size, tuple(detections), cam)


def synth_generate(cfg: SynthConfig) -> tuple:
    """Scene map and frames; frames with a truncated object occur at the configured rate."""
    rng = np.random.default_rng(cfg.seed)
    scene = place_objects(cfg, rng)
    frames = []
    for i in range(cfg.n_frames):
        frame_rng = np.random.default_rng([cfg.seed, 1, i])
        want_truncated = frame_rng.random() < cfg.partial_visibility_rate
        frame = None
        for _ in range(1000):
            frame = _make_frame(cfg, scene, frame_rng, i, want_truncated)
            if frame is not None:
                break
        if frame is None:
            raise PlacementFailure(f"could not generate a valid view for frame {i}")
        frames.append(frame)
    return scene, frames


# ---------------------------------------------------------------------------
# JSON


def _num(x) -> Optional[float]:
    x = float(x)
    return x if math.isfinite(x) else None


def _write_json(path, payload) -> None:
    with atomic_writer(path) as fh:
        json.dump(payload, fh, indent=1, allow_nan=False)
        fh.write("\n")


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def scene_to_dict(scene: SceneMap) -> dict:
    return {"units": "m", "objects": [
        {"id": o.id, "label": o.label, "center": [float(v) for v in o.ellipsoid.center],
         "axes": [float(v) for v in o.ellipsoid.semi_axes],
         "rotation": [float(v) for v in o.ellipsoid.rotation.reshape(-1)]}
        for o in scene]}


def scene_from_dict(d: dict) -> SceneMap:
    return SceneMap(tuple(
        MapObject(str(o["id"]), str(o["label"]),
                  Ellipsoid(np.array(o["center"], float), np.array(o["axes"], float),
                            np.array(o["rotation"], float).reshape(3, 3)))
        for o in d["objects"]))


def ellipse_to_dict(e: Ellipse) -> dict:
    return {"cx": e.cx, "cy": e.cy, "ax": e.a, "ay": e.b, "theta": e.theta}


def ellipse_from_dict(d: dict) -> Ellipse:
    return Ellipse(float(d["cx"]), float(d["cy"]), float(d["ax"]), float(d["ay"]), float(d["theta"]))


def pose_to_dict(cam: Camera) -> dict:
    return {"R": [float(v) for v in cam.R.reshape(-1)], "t": [float(v) for v in cam.t]}


def detection_to_dict(det: Detection) -> dict:
    out = {"label": det.label, "ellipse": ellipse_to_dict(det.ellipse)}
    if det.sigma is not None:
        out["sigma"] = det.sigma
    if det.score is not None:
        out["score"] = det.score
    if det.object_id is not None:
        out["object_id"] = det.object_id
    if det.truncated:
        out["truncated"] = True
    return out


def detection_from_dict(d: dict) -> Detection:
    return Detection(str(d["label"]), ellipse_from_dict(d["ellipse"]), sigma=d.get("sigma"),
                     score=d.get("score"), object_id=d.get("object_id"), truncated=bool(d.get("truncated", False)))


def frame_to_dict(f: FrameRecord) -> dict:
    out = {"id": f.frame_id, "K": [float(v) for v in f.K.reshape(-1)], "image_size": list(f.image_size),
           "detections": [detection_to_dict(d) for d in f.detections]}
    if f.gt_camera is not None:
        out["gt_pose"] = pose_to_dict(f.gt_camera)
    return out


def frame_from_dict(d: dict) -> FrameRecord:
    K = np.array(d["K"], float).reshape(3, 3)
    size = tuple(d["image_size"])
    gt = None
    if d.get("gt_pose") is not None:
        gt = Camera(K, np.array(d["gt_pose"]["R"], float).reshape(3, 3), np.array(d["gt_pose"]["t"], float), size)
    return FrameRecord(str(d["id"]), K, size, tuple(detection_from_dict(x) for x in d["detections"]), gt)


def estimate_to_dict(frame_id: str, est: Optional[PoseEstimate], error: str = "") -> dict:
    if est is None:
        return {"frame_id": frame_id, "R": None, "t": None, "inliers": [], "error": error or "failed"}
    return {"frame_id": frame_id, **pose_to_dict(est.camera),
            "inliers": [[i, o] for i, o in est.inliers.pairs],
            "initial_cost": _num(est.initial_cost), "final_cost": _num(est.final_cost),
            "refined": est.refined, "termination": est.termination}


def estimate_from_dict(d: dict, K, image_size) -> Optional[PoseEstimate]:
    if d.get("R") is None:
        return None
    cam = Camera(np.asarray(K, float), np.array(d["R"], float).reshape(3, 3), np.array(d["t"], float), image_size)
    nan = float("nan")
    ic, fc = d.get("initial_cost"), d.get("final_cost")
    return PoseEstimate(cam, Association(tuple((i, o) for i, o in d.get("inliers", []))),
                        nan if ic is None else ic, nan if fc is None else fc,
                        refined=bool(d.get("refined", False)), termination=d.get("termination", ""))


def save_scene(path, scene: SceneMap) -> None:
    _write_json(path, scene_to_dict(scene))


def load_scene(path) -> SceneMap:
    return scene_from_dict(_read_json(path))


def save_frames(path, frames) -> None:
    _write_json(path, {"frames": [frame_to_dict(f) for f in frames]})


def load_frames(path) -> list:
    return [frame_from_dict(f) for f in _read_json(path)["frames"]]


def save_estimates(path, items) -> None:
    """``items`` is a list of (frame_id, PoseEstimate or None, error message)."""
    _write_json(path, {"estimates": [estimate_to_dict(fid, est, err) for fid, est, err in items]})


def load_estimates(path) -> list:
    return _read_json(path)["estimates"]


def load_config(path) -> SynthConfig:
    return SynthConfig.from_dict(_read_json(path))


def write_dataset(out_dir, scene: SceneMap, frames) -> tuple:
    out = Path(out_dir)
    save_scene(out / "scene.json", scene)
    save_frames(out / "frames.json", frames)
    return out / "scene.json", out / "frames.json"
