"""Pose accuracy against ground truth: per-frame errors and localized-fraction curves."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .conics import Camera
from .errors import FrameMismatch
from .io import atomic_writer

DEFAULT_POS_THRESHOLDS = np.linspace(0.0, 0.5, 100)
DEFAULT_ROT_THRESHOLDS = np.linspace(0.0, 20.0, 100)


def position_error(est: Camera, gt: Camera) -> float:
    return float(np.linalg.norm(est.position - gt.position))


def orientation_error_deg(R_est: np.ndarray, R_gt: np.ndarray) -> float:
    """Geodesic angle of R_est^T R_gt in degrees."""
    M = R_est.T @ R_gt
    # atan2 of the sine (skew part) and cosine (trace) stays accurate near 0 and 180 degrees
    s = 0.5 * math.sqrt((M[2, 1] - M[1, 2]) ** 2 + (M[0, 2] - M[2, 0]) ** 2 + (M[1, 0] - M[0, 1]) ** 2)
    c = 0.5 * (np.trace(M) - 1.0)
    return math.degrees(math.atan2(s, c))


def localized_fraction(errors: Sequence[float], thresholds: Sequence[float]) -> np.ndarray:
    """Fraction of frames whose error is at most each threshold (failures count as inf)."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        return np.zeros(len(thresholds))
    return np.searchsorted(e, np.asarray(thresholds, dtype=float), side="right") / e.size


@dataclass
class FrameError:
    frame_id: str
    position_m: float
    orientation_deg: float
    n_objects: int


@dataclass
class EvalReport:
    frames: list = field(default_factory=list)
    pos_thresholds: np.ndarray = field(default_factory=lambda: DEFAULT_POS_THRESHOLDS.copy())
    rot_thresholds: np.ndarray = field(default_factory=lambda: DEFAULT_ROT_THRESHOLDS.copy())

    @property
    def position_errors(self) -> np.ndarray:
        return np.array([f.position_m for f in self.frames])

    @property
    def orientation_errors(self) -> np.ndarray:
        return np.array([f.orientation_deg for f in self.frames])

    def median_position_error(self) -> float:
        return float(np.median(self.position_errors)) if self.frames else float("nan")

    def median_orientation_error(self) -> float:
        return float(np.median(self.orientation_errors)) if self.frames else float("nan")

    def position_curve(self, thresholds=None) -> np.ndarray:
        t = self.pos_thresholds if thresholds is None else thresholds
        return localized_fraction(self.position_errors, t)

    def orientation_curve(self, thresholds=None) -> np.ndarray:
        t = self.rot_thresholds if thresholds is None else thresholds
        return localized_fraction(self.orientation_errors, t)

    def groups(self) -> dict:
        """Frames split by the number of detected objects."""
        out = {}
        for f in self.frames:
            out.setdefault(f.n_objects, []).append(f)
        return dict(sorted(out.items()))

    def group_curves(self, thresholds=None) -> dict:
        t = self.pos_thresholds if thresholds is None else thresholds
        return {n: localized_fraction([f.position_m for f in fs], t) for n, fs in self.groups().items()}

    def write_frames_csv(self, path) -> None:
        with atomic_writer(path) as fh:
            w = csv.writer(fh)
            w.writerow(["frame_id", "n_objects", "position_error_m", "orientation_error_deg"])
            for f in self.frames:
                w.writerow([f.frame_id, f.n_objects, repr(f.position_m), repr(f.orientation_deg)])

    def write_curves_csv(self, path) -> None:
        groups = self.group_curves()
        with atomic_writer(path) as fh:
            w = csv.writer(fh)
            w.writerow(["position_threshold_m", "fraction_all"] + [f"fraction_{n}_objects" for n in groups]
                       + ["orientation_threshold_deg", "orientation_fraction_all"])
            pos, rot = self.position_curve(), self.orientation_curve()
            for k, thr in enumerate(self.pos_thresholds):
                w.writerow([f"{thr:.6g}", f"{pos[k]:.6g}"] + [f"{g[k]:.6g}" for g in groups.values()]
                           + [f"{self.rot_thresholds[k]:.6g}", f"{rot[k]:.6g}"])


def evaluate(estimates: Mapping[str, Optional[Camera]], ground_truth: Mapping[str, Camera],
             n_objects: Optional[Mapping[str, int]] = None,
             pos_thresholds=None, rot_thresholds=None) -> EvalReport:
    """Compare estimated cameras with ground truth frame by frame.

    A ``None`` estimate is a failed frame and gets infinite errors.  Raises
    FrameMismatch when the two mappings cover different frame ids.
    """
    if set(estimates) != set(ground_truth):
        missing = sorted(set(ground_truth) ^ set(estimates))
        raise FrameMismatch(f"estimates and ground truth disagree on frames: {', '.join(missing[:5])}")
    report = EvalReport()
    if pos_thresholds is not None:
        report.pos_thresholds = np.asarray(pos_thresholds, dtype=float)
    if rot_thresholds is not None:
        report.rot_thresholds = np.asarray(rot_thresholds, dtype=float)
    for fid in ground_truth:
        gt, est = ground_truth[fid], estimates[fid]
        count = (n_objects or {}).get(fid, 0)
        if est is None:
            report.frames.append(FrameError(fid, math.inf, math.inf, count))
        else:
            report.frames.append(FrameError(fid, position_error(est, gt), orientation_error_deg(est.R, gt.R), count))
    return report
