"""Wide-angle camera calibration: models, targets, calibration, simulation
and evaluation."""

from .geometry import Pose, pose_apply, pose_inverse, pose_retract
from .models import CameraSpec, jacobian_params, jacobian_point, project, unproject, validate_params

__version__ = "0.1.0"

__all__ = [
    "CameraSpec",
    "Pose",
    "jacobian_params",
    "jacobian_point",
    "pose_apply",
    "pose_inverse",
    "pose_retract",
    "project",
    "unproject",
    "validate_params",
]
