"""Camera pose estimation from ellipse detections and ellipsoid object maps."""

from .conics import (Camera, DualConic, DualQuadric, Ellipse, Ellipsoid, GaussianEllipse, clip_conic_to_image,
                     dual_conic_from_ellipse, ellipse_bbox, ellipse_from_dual_conic, embedding_value,
                     gaussian_from_ellipse, level_set_samples, project_ellipse, project_ellipsoid)
from .errors import *  # noqa: F401,F403
from .metrics import MetricContext, MetricKind, distance
from .model import Association, Detection, FrameRecord, MapObject, PoseEstimate, SceneMap
from .optim import OptimOptions, OptimResult, Termination, apply_pose_params, minimize, numeric_gradient
from .p3p import p3p
from .pose import ransac_init, refine, reprojection_overlap

__version__ = "0.1.0"
