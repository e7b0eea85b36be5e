"""Synthetic corner observations from a ground-truth camera, target and poses.

Random streams: ``SeedSequence(seed).spawn(1 + frames)`` under PCG64.
Child 0 drives pose sampling; child ``1 + i`` drives the pixel noise of
frame ``i``.  Any reimplementation adopting the same generator and layout
reproduces the streams.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .calibrate.observations import Frame, ObservationSet
from .geometry import Pose, pose_apply
from .models import CameraSpec, param_problem
from .targets import TargetLayout

log = logging.getLogger(__name__)

__all__ = [
    "RNG_ID",
    "PoseSampler",
    "SimConfig",
    "TruthRecord",
    "SamplingError",
    "make_streams",
    "sample_poses",
    "synthesize_observations",
    "in_image",
]

RNG_ID = "numpy.PCG64"
MAX_REJECTIONS = 1000
RIM_SAMPLES = 64


class SamplingError(RuntimeError):
    """Raised when the pose sampler cannot satisfy its constraints."""


@dataclass(frozen=True)
class PoseSampler:
    distance_range: tuple[float, float] = (0.6, 1.5)
    max_tilt: float = 45.0  # degrees
    in_image_fraction: float = 0.6

    def __post_init__(self):
        lo, hi = (float(v) for v in self.distance_range)
        object.__setattr__(self, "distance_range", (lo, hi))
        if not 0 < lo <= hi:
            raise ValueError("distance_range must satisfy 0 < lo <= hi")
        if not 0 <= self.max_tilt < 90:
            raise ValueError("max_tilt must be in [0, 90) degrees")
        if not 0 <= self.in_image_fraction <= 1:
            raise ValueError("in_image_fraction must be in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    noise_sigma: float = 0.7
    frames: int = 40
    seed: int = 0
    pose_sampler: PoseSampler = field(default_factory=PoseSampler)
    drop_invalid: bool = True
    # circle grids only: observe the center of the projected rim ellipse
    circle_bias: bool = False
    circle_radius: float = 0.3  # fraction of the target spacing

    def __post_init__(self):
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.frames < 3:
            raise ValueError("at least 3 frames are required")
        if isinstance(self.pose_sampler, dict):
            object.__setattr__(self, "pose_sampler", PoseSampler(**self.pose_sampler))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pose_sampler"]["distance_range"] = list(self.pose_sampler.distance_range)
        return d

    @classmethod
    def from_dict(cls, d) -> "SimConfig":
        return cls(**dict(d))


@dataclass(eq=False)
class TruthRecord:
    spec: CameraSpec
    poses: dict[int, Pose]
    seed: int
    generator: str = RNG_ID

    def to_dict(self) -> dict:
        ids = sorted(self.poses)
        return {
            "spec": self.spec.to_dict(),
            "frame_ids": ids,
            "poses": [self.poses[i].to_list() for i in ids],
            "seed": self.seed,
            "generator": self.generator,
        }

    @classmethod
    def from_dict(cls, d) -> "TruthRecord":
        poses = d["poses"]
        ids = d.get("frame_ids", list(range(len(poses))))
        return cls(
            CameraSpec.from_dict(d["spec"]),
            {int(i): Pose.from_list(p) for i, p in zip(ids, poses)},
            int(d.get("seed", 0)),
            d.get("generator", RNG_ID),
        )


def make_streams(seed: int, frames: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    children = np.random.SeedSequence(int(seed)).spawn(1 + int(frames))
    pose_rng = np.random.Generator(np.random.PCG64(children[0]))
    noise = [np.random.Generator(np.random.PCG64(c)) for c in children[1:]]
    return pose_rng, noise


def in_image(spec: CameraSpec, uv: np.ndarray, valid: np.ndarray) -> np.ndarray:
    ok = valid & np.all(np.isfinite(uv), axis=1)
    with np.errstate(invalid="ignore"):
        ok &= (uv[:, 0] >= 0) & (uv[:, 0] < spec.width) & (uv[:, 1] >= 0) & (uv[:, 1] < spec.height)
    return ok


def _check_truth(spec: CameraSpec) -> None:
    problem = param_problem(spec.kind, spec.p, spec.meta)
    if problem is not None:
        raise ValueError(f"truth spec is not a valid {spec.kind} camera: {problem}")


def _look_rotation(axis: np.ndarray, roll: float) -> np.ndarray:
    """Camera-to-target rotation whose third column is ``axis``."""
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x0 = ref - (ref @ axis) * axis
    x0 /= np.linalg.norm(x0)
    y0 = np.cross(axis, x0)
    c, s = np.cos(roll), np.sin(roll)
    x = c * x0 + s * y0
    y = np.cross(axis, x)
    return np.column_stack([x, y, axis])


def _propose(rng: np.random.Generator, target: TargetLayout, cfg: PoseSampler) -> Pose | None:
    center = target.center
    d = rng.uniform(*cfg.distance_range)
    cos_max = np.cos(np.deg2rad(cfg.max_tilt))
    cos_t = rng.uniform(cos_max, 1.0)
    az = rng.uniform(0.0, 2 * np.pi)
    sin_t = np.sqrt(max(0.0, 1.0 - cos_t**2))
    axis = np.array([sin_t * np.cos(az), sin_t * np.sin(az), cos_t])
    P = target.points[rng.integers(len(target.points))]
    roll = rng.uniform(0.0, 2 * np.pi)
    # camera center C = P - s * axis with |C - center| = d, s > 0
    q = P - center
    b = float(axis @ q)
    disc = b * b - float(q @ q) + d * d
    if disc < 0:
        return None
    s = b + np.sqrt(disc)
    if s <= 0:
        return None
    C = P - s * axis
    R = _look_rotation(axis, roll).T
    return Pose(R, -R @ C)


def sample_poses(spec: CameraSpec, target: TargetLayout, config: SimConfig) -> list[Pose]:
    """Random poses looking at the target, deterministic given ``config.seed``.

    The target center lies at a uniform distance in ``distance_range``; the
    optical axis passes through a uniformly chosen target point and is
    tilted at most ``max_tilt`` from the target normal; roll is uniform.
    An invalid truth spec (e.g. a folding KB8 polynomial) is an error.
    A proposal is rejected until at least ``in_image_fraction`` of the
    target points project validly inside the image.
    """
    _check_truth(spec)
    rng, _ = make_streams(config.seed, config.frames)
    cfg = config.pose_sampler
    poses = []
    rejections = 0
    while len(poses) < config.frames:
        pose = _propose(rng, target, cfg)
        if pose is not None:
            res_uv, res_valid, _, _ = spec.model.project(spec.p, pose_apply(pose, target.points), spec.meta)
            frac = in_image(spec, res_uv, res_valid).mean()
            if frac >= cfg.in_image_fraction and frac > 0:
                poses.append(pose)
                rejections = 0
                continue
        rejections += 1
        if rejections >= MAX_REJECTIONS:
            raise SamplingError(
                f"pose sampler rejected {MAX_REJECTIONS} consecutive proposals; "
                "the distance/tilt/visibility constraints look infeasible"
            )
    return poses


def _conic_center(uv: np.ndarray) -> np.ndarray:
    """Center of the least-squares conic through 2D points."""
    m = uv.mean(axis=0)
    s = np.sqrt(np.mean(np.sum((uv - m) ** 2, axis=1)))
    x, y = ((uv - m) / s).T
    A = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
    a, b, c, d, e, _ = np.linalg.svd(A)[2][-1]
    cx, cy = np.linalg.solve([[2 * a, b], [b, 2 * c]], [-d, -e])
    return m + s * np.array([cx, cy])


def _biased_centers(spec: CameraSpec, target: TargetLayout, pose: Pose, radius: float) -> np.ndarray:
    phi = np.linspace(0.0, 2 * np.pi, RIM_SAMPLES, endpoint=False)
    rim = radius * np.column_stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)])
    out = np.full((len(target.points), 2), np.nan)
    for k, P in enumerate(target.points):
        uv, valid, _, _ = spec.model.project(spec.p, pose_apply(pose, P + rim), spec.meta)
        if valid.all():
            out[k] = _conic_center(uv)
    return out


def synthesize_observations(spec: CameraSpec, target: TargetLayout, poses, config: SimConfig
                            ) -> tuple[ObservationSet, TruthRecord]:
    """Project every target point through each pose and add Gaussian noise.

    Only valid projections inside the image are kept.  Frame ``i`` uses
    noise stream ``1 + i``.  A frame with fewer than 4 corners is dropped
    when ``drop_invalid``, otherwise it is an error.
    """
    _check_truth(spec)
    poses = list(poses)
    _, noise = make_streams(config.seed, max(len(poses), config.frames))
    bias = config.circle_bias and target.kind.startswith("CircleGrid")
    frames = []
    for i, pose in enumerate(poses):
        uv, valid, _, _ = spec.model.project(spec.p, pose_apply(pose, target.points), spec.meta)
        ok = in_image(spec, uv, valid)
        if bias:
            uv = _biased_centers(spec, target, pose, config.circle_radius * target.spacing)
            ok &= in_image(spec, uv, np.isfinite(uv[:, 0]))
        ids = np.flatnonzero(ok)
        if len(ids) < 4:
            if config.drop_invalid:
                log.warning("frame %d dropped: only %d corners in the image", i, len(ids))
                continue
            raise ValueError(f"frame {i} keeps only {len(ids)} corners")
        pix = uv[ids]
        if config.noise_sigma > 0:
            pix = pix + noise[i].normal(0.0, config.noise_sigma, size=pix.shape)
        frames.append(Frame(i, ids, pix))
    truth = TruthRecord(spec, {i: p for i, p in enumerate(poses)}, int(config.seed))
    return ObservationSet(frames), truth
