"""Target-based calibration: linear initialization, robust joint refinement,
outlier trimming and covariance."""

from __future__ import annotations

import logging

from ..models import CameraSpec
from ..targets import TargetLayout
from .linear import (
    CalibrationError,
    DegenerateConfigurationError,
    estimate_homography,
    init_pinhole_intrinsics,
    init_pose_from_homography,
    init_poses,
    init_wideangle_intrinsics,
    initialize,
)
from .observations import Frame, ObservationSet
from .refine import (
    CalibConfig,
    CalibReport,
    RobustLoss,
    compute_covariance,
    compute_rms,
    refine,
    trim_outliers,
)

log = logging.getLogger(__name__)

__all__ = [
    "CalibConfig",
    "CalibReport",
    "CalibrationError",
    "DegenerateConfigurationError",
    "Frame",
    "ObservationSet",
    "RobustLoss",
    "calibrate",
    "compute_covariance",
    "compute_rms",
    "estimate_homography",
    "init_pinhole_intrinsics",
    "init_pose_from_homography",
    "init_poses",
    "init_wideangle_intrinsics",
    "initialize",
    "refine",
    "trim_outliers",
]


def calibrate(obs: ObservationSet, target: TargetLayout, width: int, height: int,
              config: CalibConfig | None = None, meta=None,
              init_spec: CameraSpec | None = None) -> CalibReport:
    """Full pipeline: initialize, refine, trim, then attach the covariance.

    ``init_spec`` replaces the intrinsic initialization; poses are then
    initialized from the rays it unprojects.  Frames with fewer than 4 corners are
    excluded up front.
    """
    config = config or CalibConfig()
    obs.check_ids(len(target))
    usable = obs.with_min_corners(4)
    skipped = [f.frame_id for f in obs.frames if len(f) < 4]
    if skipped:
        log.warning("frames with fewer than 4 corners excluded: %s", skipped)
    if init_spec is None:
        spec0, poses0 = initialize(usable, target, config.model_kind, width, height, meta)
    else:
        spec0 = init_spec
        poses0 = init_poses(usable, target, init_spec)
        if not poses0:
            raise CalibrationError("no frame pose could be initialized from the given spec")
    report = refine(usable, target, spec0, poses0, config)
    _, report = trim_outliers(report, usable, config, target)
    report.dropped_frames = sorted(set(report.dropped_frames) | set(skipped))
    report.param_std, report.condition_number = compute_covariance(report, report.used, target)
    return report

