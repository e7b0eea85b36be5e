"""Linear initialization: homographies, closed-form pinhole intrinsics,
pose recovery and a focal grid search for wide-angle models."""

from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import minimize_scalar

from ..geometry import Pose, nearest_rotation
from ..models import CameraSpec, get_model, unproject
from ..targets import TargetLayout
from .observations import ObservationSet

log = logging.getLogger(__name__)

__all__ = [
    "CalibrationError",
    "DegenerateConfigurationError",
    "PINHOLE_FAMILY",
    "estimate_homography",
    "init_pinhole_intrinsics",
    "init_pose_from_homography",
    "init_wideangle_intrinsics",
    "initialize",
]

# kinds whose neutral point is a plain pinhole, initialized in closed form
PINHOLE_FAMILY = ("Pinhole", "RadTan", "RadTanBackward", "Division", "Rational", "ThinPrism")


class CalibrationError(RuntimeError):
    """A calibration stage could not produce a usable result."""


class DegenerateConfigurationError(CalibrationError):
    pass


# frames used by the focal grid search
SCORE_FRAMES = 12


def _normalizer(xy: np.ndarray) -> np.ndarray:
    c = xy.mean(axis=0)
    d = np.sqrt(((xy - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2) / d if d > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def estimate_homography(obj: np.ndarray, img: np.ndarray) -> np.ndarray:
    """Normalized DLT homography mapping target-plane points to the image.

    ``obj`` holds target points (``(N, 2)`` or ``(N, 3)`` with z = 0).  ``img``
    holds pixels ``(N, 2)`` or homogeneous image directions ``(N, 3)``
    (e.g. unit rays).  The result is scaled so ``H[2, 2] = 1`` when that
    entry is not negligible.
    """
    obj = np.asarray(obj, dtype=float)[:, :2]
    img = np.asarray(img, dtype=float)
    n = len(obj)
    if n < 4 or len(img) != n:
        raise DegenerateConfigurationError("a homography needs at least 4 correspondences")
    To = _normalizer(obj)
    x = np.column_stack([obj, np.ones(n)]) @ To.T
    if img.shape[1] == 2:
        Ti = _normalizer(img)
        y = np.column_stack([img, np.ones(n)]) @ Ti.T
    else:
        Ti = np.eye(3)
        y = img / np.linalg.norm(img, axis=1, keepdims=True)
    z = np.zeros((n, 3))
    rows = [
        np.hstack([z, -y[:, 2:3] * x, y[:, 1:2] * x]),
        np.hstack([y[:, 2:3] * x, z, -y[:, 0:1] * x]),
    ]
    if img.shape[1] == 3:
        rows.append(np.hstack([-y[:, 1:2] * x, y[:, 0:1] * x, z]))
    A = np.vstack(rows)
    if len(A) < 9:
        # the thin SVD must still return the null vector
        A = np.vstack([A, np.zeros((9 - len(A), 9))])
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[-2] <= 1e-10 * s[0]:
        raise DegenerateConfigurationError("correspondences are degenerate (collinear or repeated)")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(Ti, Hn @ To)
    if abs(H[2, 2]) > 1e-12:
        H = H / H[2, 2]
    else:
        H = H / np.linalg.norm(H)
    return H


def _v(H, i, j):
    a, b = H[:, i], H[:, j]
    return np.array([
        a[0] * b[0],
        a[0] * b[1] + a[1] * b[0],
        a[1] * b[1],
        a[2] * b[0] + a[0] * b[2],
        a[2] * b[1] + a[1] * b[2],
        a[2] * b[2],
    ])


def init_pinhole_intrinsics(homographies, width: int = 0, height: int = 0) -> CameraSpec:
    """Closed-form zero-skew pinhole intrinsics from plane homographies
    via the image of the absolute conic."""
    Hs = [np.asarray(H, dtype=float) for H in homographies]
    if len(Hs) < 3:
        raise DegenerateConfigurationError("need at least 3 homographies")
    scale = (width + height) / 2 if width and height else 1.0
    N = np.array([[1 / scale, 0, -width / 2 / scale], [0, 1 / scale, -height / 2 / scale], [0, 0, 1]])
    rows = []
    for H in Hs:
        Hn = N @ H
        Hn = Hn / np.linalg.norm(Hn)
        rows.append(_v(Hn, 0, 1))
        rows.append(_v(Hn, 0, 0) - _v(Hn, 1, 1))
    rows.append([0, 1.0, 0, 0, 0, 0])
    V = np.array(rows)
    _, s, Vt = np.linalg.svd(V)
    cond = s[0] / s[-2] if s[-2] > 0 else np.inf
    if cond > 1e12:
        raise DegenerateConfigurationError(f"ill-conditioned intrinsic constraints (condition {cond:.3g})")
    B11, B12, B22, B13, B23, B33 = Vt[-1]
    den = B11 * B22 - B12 * B12
    v0 = (B12 * B13 - B11 * B23) / den
    lam = B33 - (B13 * B13 + v0 * (B12 * B13 - B11 * B23)) / B11
    if not (lam / B11 > 0 and lam * B11 / den > 0):
        raise DegenerateConfigurationError("homographies do not yield a positive-definite conic")
    fx = np.sqrt(lam / B11)
    fy = np.sqrt(lam * B11 / den)
    u0 = -B13 * fx * fx / lam
    K = np.linalg.solve(N, np.array([[fx, 0, u0], [0, fy, v0], [0, 0, 1]]))
    K = K / K[2, 2]
    return CameraSpec("Pinhole", [K[0, 0], K[1, 1], K[0, 2], K[1, 2]], width, height)


def init_pose_from_homography(H: np.ndarray, spec: CameraSpec | None = None,
                              center=(0.0, 0.0, 0.0)) -> Pose:
    """Pose from a plane homography.

    With ``spec`` the homography maps to pixels and is first multiplied by
    the inverse pinhole matrix built from ``spec``'s first four parameters;
    without it ``H`` already maps to normalized image directions.  The sign
    is chosen so ``center`` (a target point) lies in front of the camera.
    """
    M = np.asarray(H, dtype=float)
    if spec is not None:
        fx, fy, cx, cy = spec.p[:4]
        Kinv = np.array([[1 / fx, 0, -cx / fx], [0, 1 / fy, -cy / fy], [0, 0, 1]])
        M = Kinv @ M
    n1, n2 = np.linalg.norm(M[:, 0]), np.linalg.norm(M[:, 1])
    if n1 == 0 or n2 == 0:
        raise DegenerateConfigurationError("homography has a null column")
    lam = 2.0 / (n1 + n2)
    c = np.array([center[0], center[1], 1.0])
    for sign in (1.0, -1.0):
        r1 = sign * lam * M[:, 0]
        r2 = sign * lam * M[:, 1]
        t = sign * lam * M[:, 2]
        R = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
        if (R @ np.array([c[0], c[1], 0.0]) + t)[2] > 0:
            return Pose(R, t)
    raise CalibrationError("no pose puts the target in front of the camera")


def _ray_residual(xy, rays):
    """Homography fit to target points and rays; per-point sine residuals."""
    H = estimate_homography(xy, rays)
    hp = np.column_stack([xy[:, :2], np.ones(len(xy))]) @ H.T
    cr = np.cross(rays, hp)
    return H, np.linalg.norm(cr, axis=1) / np.linalg.norm(hp, axis=1)


def _frame_rays(spec: CameraSpec, obs: ObservationSet, target: TargetLayout):
    for f in obs.frames:
        rays, ok = unproject(spec, f.pixels)
        yield f, target.points[f.ids[ok]], rays[ok]


def _focal_score(f, kind, cx, cy, width, height, meta, obs, target):
    model = get_model(kind)
    try:
        spec = CameraSpec(kind, model.neutral(f, cx, cy, meta), width, height, meta)
    except ValueError:
        return np.inf
    res = []
    for _, xy, rays in _frame_rays(spec, obs, target):
        if len(xy) < 6:
            continue
        try:
            res.append(_ray_residual(xy, rays)[1])
        except DegenerateConfigurationError:
            continue
    if not res:
        return np.inf
    # angular residual times focal ~ pixels, so pure noise does not favor large f
    return float(f * np.median(np.concatenate(res)))


def init_wideangle_intrinsics(obs: ObservationSet, target: TargetLayout, kind: str,
                              width: int, height: int, meta=None, n_grid: int = 48) -> CameraSpec:
    """Coarse spec: principal point at the image center, neutral distortion,
    focal length from a grid search on homography consistency of the rays
    unprojected by each candidate."""
    meta = dict(meta or {})
    if len(obs) < 5:
        raise CalibrationError("wide-angle initialization needs at least 5 frames")
    cx, cy = width / 2.0, height / 2.0
    base = max(width, height) / 2.0
    if len(obs) > SCORE_FRAMES:
        # the focal score is a median; an evenly spread subset is enough
        pick = np.linspace(0, len(obs) - 1, SCORE_FRAMES).round().astype(int)
        obs = ObservationSet([obs.frames[i] for i in pick])
    grid = np.geomspace(0.1, 1.5, n_grid) * base
    scores = np.array([_focal_score(f, kind, cx, cy, width, height, meta, obs, target) for f in grid])
    if not np.any(np.isfinite(scores)):
        raise CalibrationError("no focal candidate gives a finite residual")
    i = int(np.argmin(scores))
    lo, hi = np.log(grid[max(i - 1, 0)]), np.log(grid[min(i + 1, n_grid - 1)])
    if hi > lo:
        best = minimize_scalar(
            lambda lf: _focal_score(np.exp(lf), kind, cx, cy, width, height, meta, obs, target),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-3},
        )
        f = float(np.exp(best.x)) if best.fun <= scores[i] else float(grid[i])
    else:
        f = float(grid[i])
    return CameraSpec(kind, get_model(kind).neutral(f, cx, cy, meta), width, height, meta)


def init_poses(obs: ObservationSet, target: TargetLayout, spec: CameraSpec) -> dict[int, Pose]:
    """Per-frame poses from homographies fitted to the rays that ``spec``
    unprojects; frames that fail are left out (logged)."""
    poses = {}
    for f, xy, rays in _frame_rays(spec, obs, target):
        if len(xy) < 4:
            continue
        try:
            H, _ = _ray_residual(xy, rays)
            poses[f.frame_id] = init_pose_from_homography(H, None, target.center)
        except CalibrationError:
            log.warning("frame %d: pose initialization failed", f.frame_id)
    return poses


def _mei_from_ucm(obs, target, spec, poses):
    """Start Mei from a distortion-free UCM fit.

    From the neutral init, xi, gamma and k1 can settle in a spurious
    minimum on wide views; the UCM fit puts xi and gamma near the basin.
    """
    from .refine import CalibConfig, refine

    ucm = CameraSpec("UCM", spec.p[:5], spec.width, spec.height)
    try:
        fit = refine(obs, target, ucm, poses, CalibConfig("UCM", trim_rounds=0))
    except CalibrationError as exc:
        log.warning("UCM pre-fit failed (%s); using the neutral Mei init", exc)
        return spec, poses
    if not np.all(np.isfinite(fit.spec.p)) or fit.spec.model.check(fit.spec.p, {}) is not None:
        return spec, poses
    p = spec.p.copy()
    p[:5] = fit.spec.p
    p[5:] = 0.0
    return CameraSpec("Mei", p, spec.width, spec.height, spec.meta), dict(fit.poses)


def initialize(obs: ObservationSet, target: TargetLayout, kind: str, width: int, height: int,
               meta=None) -> tuple[CameraSpec, dict[int, Pose]]:
    """Standard initialization path: initial spec and per-frame poses.

    Frames whose pose cannot be initialized are left out of the pose map.
    """
    meta = dict(meta or {})
    model = get_model(kind)
    kind = model.kind
    obs = obs.with_min_corners(4)
    if len(obs) == 0:
        raise CalibrationError("no frame has 4 or more corners")
    center = target.center
    poses: dict[int, Pose] = {}
    if kind in PINHOLE_FAMILY:
        Hs, fids = [], []
        for f in obs.frames:
            try:
                Hs.append(estimate_homography(target.points[f.ids], f.pixels))
                fids.append(f.frame_id)
            except DegenerateConfigurationError:
                log.warning("frame %d: degenerate homography, skipped", f.frame_id)
        K = init_pinhole_intrinsics(Hs, width, height)
        fx, fy, cx, cy = K.p
        p = model.neutral(fx, cx, cy, meta)
        p[1] = fy
        spec = CameraSpec(kind, p, width, height, meta)
        for fid, H in zip(fids, Hs):
            try:
                poses[fid] = init_pose_from_homography(H, K, center)
            except CalibrationError:
                log.warning("frame %d: pose initialization failed", fid)
    else:
        spec = init_wideangle_intrinsics(obs, target, kind, width, height, meta)
        poses = init_poses(obs, target, spec)
        if kind == "Mei" and poses:
            spec, poses = _mei_from_ucm(obs, target, spec, poses)
    if not poses:
        raise CalibrationError("no frame pose could be initialized")
    return spec, poses
