"""Joint robust Levenberg-Marquardt refinement of intrinsics and frame poses.

The normal equations have an arrow structure (intrinsics couple to every
frame, frames do not couple to each other); the 6x6 pose blocks are
eliminated with a Schur complement, so the dense solve is only P x P.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geometry import Pose, hat, pose_retract
from ..models import CameraSpec, canonical_kind, get_model
from ..targets import TargetLayout
from .linear import CalibrationError
from .observations import ObservationSet

log = logging.getLogger(__name__)

__all__ = [
    "RobustLoss",
    "CalibConfig",
    "CalibReport",
    "Problem",
    "refine",
    "trim_outliers",
    "compute_covariance",
    "compute_rms",
]

LOSS_KINDS = ("none", "huber", "cauchy")


@dataclass(frozen=True)
class RobustLoss:
    """Loss on the squared residual norm ``s``; ``scale`` in pixels."""

    kind: str = "huber"
    scale: float = 1.0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind != "none" and not self.scale > 0:
            raise ValueError("robust loss scale must be positive")

    def rho(self, s: np.ndarray) -> np.ndarray:
        k2 = self.scale**2
        if self.kind == "huber":
            return np.where(s <= k2, s, 2 * self.scale * np.sqrt(s) - k2)
        if self.kind == "cauchy":
            return k2 * np.log1p(s / k2)
        return s

    def weight(self, s: np.ndarray) -> np.ndarray:
        """``d rho / d s``, the IRLS weight."""
        if self.kind == "huber":
            r = np.sqrt(s)
            return np.where(r <= self.scale, 1.0, self.scale / np.maximum(r, 1e-300))
        if self.kind == "cauchy":
            return 1.0 / (1.0 + s / self.scale**2)
        return np.ones_like(s)


@dataclass(frozen=True)
class CalibConfig:
    model_kind: str = "RadTan"
    loss: RobustLoss = field(default_factory=RobustLoss)
    trim_threshold: float = 2.0
    trim_rounds: int = 2
    max_lm_iterations: int = 100
    lm_tolerance: float = 1e-10
    lm_lambda0: float = 1e-4
    # second-order correction of each LM step along curved valleys
    geodesic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "model_kind", canonical_kind(self.model_kind))
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", RobustLoss(**self.loss))
        if self.trim_rounds < 0:
            raise ValueError("trim_rounds must be >= 0")
        if self.max_lm_iterations < 1:
            raise ValueError("max_lm_iterations must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = {"kind": self.loss.kind, "scale": self.loss.scale}
        return d

    @classmethod
    def from_dict(cls, d) -> "CalibConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = RobustLoss(**d["loss"])
        return cls(**d)


@dataclass(eq=False)
class CalibReport:
    spec: CameraSpec
    poses: dict[int, Pose]
    rms: float
    param_std: np.ndarray
    inliers_used: int
    trimmed: int
    converged: bool
    iterations: int
    condition_number: float = float("nan")
    cost_history: list[float] = field(default_factory=list)
    dropped_frames: list[int] = field(default_factory=list)
    config: CalibConfig | None = None
    # observations actually used, and their residuals (pixel - measurement)
    used: ObservationSet | None = field(default=None, repr=False)
    residuals: np.ndarray | None = field(default=None, repr=False)
    target: TargetLayout | None = field(default=None, repr=False)


class Problem:
    """Flattened corner data for one calibration problem.

    Corners are sorted by frame so per-frame sums are contiguous.
    """

    def __init__(self, obs: ObservationSet, target: TargetLayout, frame_ids):
        frames = {f.frame_id: f for f in obs.frames}
        self.frame_ids = [fid for fid in frame_ids if fid in frames]
        P, uv, fidx, sizes = [], [], [], []
        for k, fid in enumerate(self.frame_ids):
            f = frames[fid]
            P.append(target.points[f.ids])
            uv.append(f.pixels)
            fidx.append(np.full(len(f), k))
            sizes.append(len(f))
        self.points = np.concatenate(P) if P else np.zeros((0, 3))
        self.uv = np.concatenate(uv) if uv else np.zeros((0, 2))
        self.fidx = np.concatenate(fidx) if fidx else np.zeros(0, dtype=int)
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) if sizes else np.zeros(0, int)
        self.n_frames = len(self.frame_ids)

    def camera_points(self, poses: list[Pose]) -> np.ndarray:
        R = np.stack([p.rotation for p in poses])
        t = np.stack([p.translation for p in poses])
        return np.einsum("nij,nj->ni", R[self.fidx], self.points) + t[self.fidx]

    def evaluate(self, spec_p, kind, meta, poses, jac=False, dp_dq=None):
        """Residuals, validity and, with ``jac``, the Jacobians with respect
        to the free intrinsics (through ``dp_dq`` when optimizing in other
        coordinates) and to each point's frame pose."""
        model = get_model(kind)
        Xc = self.camera_points(poses)
        uv, valid, Jx, Jp = model.project(spec_p, Xc, meta, jac)
        r = uv - self.uv
        Jpose = None
        if jac:
            if dp_dq is not None:
                Jp = Jp @ dp_dq
            Jp = Jp[:, :, free_params(model, meta, len(spec_p))]
            D = np.zeros((len(Xc), 3, 6))
            D[:, :, :3] = -hat(Xc)
            D[:, :, 3:] = np.eye(3)
            Jpose = Jx @ D
        return r, valid, Jp, Jpose


def free_params(model, meta, n: int) -> np.ndarray:
    fixed = set(model.gauge_fixed(meta))
    return np.array([i for i in range(n) if i not in fixed], dtype=int)


def _normal_blocks(prob: Problem, r, w, Jp, Jpose):
    wJp = Jp * w[:, None, None]
    wJq = Jpose * w[:, None, None]
    U = np.einsum("nki,nkj->ij", wJp, Jp)
    gp = np.einsum("nki,nk->i", wJp, r)
    V = np.add.reduceat(np.einsum("nki,nkj->nij", wJq, Jpose), prob.starts, axis=0)
    W = np.add.reduceat(np.einsum("nki,nkj->nij", wJp, Jpose), prob.starts, axis=0)
    gq = np.add.reduceat(np.einsum("nki,nk->ni", wJq, r), prob.starts, axis=0)
    return U, V, W, gp, gq


def _scaled_solve(S, b):
    d = np.sqrt(np.maximum(np.diag(S), 1e-300))
    Sn = S / d[:, None] / d[None, :]
    try:
        x = np.linalg.solve(Sn, b / d)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(Sn, b / d, rcond=None)[0]
    return x / d


def _schur_step(U, V, W, gp, gq, lam):
    P = U.shape[0]
    Ud = U + lam * np.diag(np.maximum(np.diag(U), 1e-12 * max(np.trace(U) / max(P, 1), 1e-300)))
    dV = np.einsum("fii->fi", V)
    Vd = V + lam * np.maximum(dV, 1e-12)[:, :, None] * np.eye(6)[None]
    Vinv = np.linalg.inv(Vd)
    WVi = W @ Vinv
    S = Ud - np.einsum("fij,fkj->ik", WVi, W)
    b = -gp + np.einsum("fij,fj->i", WVi, gq)
    dp = _scaled_solve(S, b)
    dq = -np.einsum("fij,fj->fi", Vinv, gq + np.einsum("fji,j->fi", W, dp))
    return dp, dq


# per-corner cost treated as an exact fit (residual RMS 1e-10 px); below it
# only rounding noise is left to minimize
ZERO_COST = 1e-20

# finite-difference step and acceptance ratio of the geodesic correction
GEODESIC_H = 0.1
GEODESIC_ALPHA = 0.75


def _geodesic_correction(prob, model, kind, meta, q, free, poses, r, w, Jp, Jq, U, V, W, lam, dp, dq):
    """Second-order correction along the LM direction (geodesic acceleration).

    The directional second derivative of the residuals is taken by a finite
    difference along the velocity ``(dp, dq)``; the acceleration solves the
    same damped normal equations.  Returns None when the correction is
    unavailable or too large relative to the velocity.
    """
    h = GEODESIC_H
    step = np.zeros_like(q)
    step[free] = h * dp
    p_h, _ = model.from_internal(q + step)
    poses_h = [pose_retract(ps, h * d) for ps, d in zip(poses, dq)]
    r_h, valid_h, _, _ = prob.evaluate(p_h, kind, meta, poses_h)
    if not np.all(valid_h):
        return None
    Jv = np.einsum("nki,i->nk", Jp, dp) + np.einsum("nki,ni->nk", Jq, dq[prob.fidx])
    rvv = (2.0 / h) * ((r_h - r) / h - Jv)
    wJp = Jp * w[:, None, None]
    wJq = Jq * w[:, None, None]
    ga = np.einsum("nki,nk->i", wJp, rvv)
    gqa = np.add.reduceat(np.einsum("nki,nk->ni", wJq, rvv), prob.starts, axis=0)
    ap, aq = _schur_step(U, V, W, ga, gqa, lam)
    if not (np.all(np.isfinite(ap)) and np.all(np.isfinite(aq))):
        return None
    d = np.sqrt(np.maximum(np.diag(U), 1e-300))
    dV = np.sqrt(np.maximum(np.einsum("fii->fi", V), 1e-300))
    v_norm = np.sqrt(np.sum((d * dp) ** 2) + np.sum((dV * dq) ** 2))
    a_norm = np.sqrt(np.sum((d * ap) ** 2) + np.sum((dV * aq) ** 2))
    if not v_norm > 0 or 2 * a_norm / v_norm > GEODESIC_ALPHA:
        return None
    return ap, aq


def _cost(loss: RobustLoss, r):
    return float(np.sum(loss.rho(np.einsum("ij,ij->i", r, r))))


def refine(obs: ObservationSet, target: TargetLayout, init_spec: CameraSpec,
           init_poses: dict[int, Pose], config: CalibConfig | None = None) -> CalibReport:
    """Minimize the robust reprojection cost over intrinsics and all frame poses.

    Frames without an initial pose, or with fewer than 4 corners that
    project validly under the initial estimate, are dropped (logged).
    """
    config = config or CalibConfig(model_kind=init_spec.kind)
    loss = config.loss
    model = init_spec.model
    kind, meta = init_spec.kind, init_spec.meta
    obs = obs.with_min_corners(4)
    dropped = [f.frame_id for f in obs.frames if f.frame_id not in init_poses]

    # keep only corners that project validly at the start
    prob0 = Problem(obs, target, [f.frame_id for f in obs.frames if f.frame_id in init_poses])
    poses0 = [init_poses[fid] for fid in prob0.frame_ids]
    r0, valid0, _, _ = prob0.evaluate(init_spec.p, kind, meta, poses0)
    frames = []
    kept_ids = []
    for k, fid in enumerate(prob0.frame_ids):
        f = next(fr for fr in obs.frames if fr.frame_id == fid)
        ok = valid0[prob0.fidx == k]
        if ok.sum() >= 4:
            frames.append(f.subset(ok))
            kept_ids.append(fid)
        else:
            log.warning("frame %d dropped: fewer than 4 valid projections", fid)
            dropped.append(fid)
    if len(frames) < 1:
        raise CalibrationError("no frame has 4 validly projecting corners")
    used = ObservationSet(frames)
    prob = Problem(used, target, kept_ids)
    p = model.clamp(init_spec.p, meta)
    free = free_params(model, meta, len(p))
    poses = [init_poses[fid] for fid in prob.frame_ids]
    if not np.all(prob.evaluate(p, kind, meta, poses)[1]):
        p = init_spec.p.copy()
    # the optimizer works in the model's internal coordinates q
    q = model.to_internal(p)
    p, dp_dq = model.from_internal(q)
    r, valid, Jp, Jq = prob.evaluate(p, kind, meta, poses, jac=True, dp_dq=dp_dq)
    cost = _cost(loss, r)
    history = [cost]
    lam = config.lm_lambda0
    converged = False
    it = 0
    while it < config.max_lm_iterations:
        it += 1
        w = loss.weight(np.einsum("ij,ij->i", r, r))
        U, V, W, gp, gq = _normal_blocks(prob, r, w, Jp, Jq)
        accepted = False
        tries = 0
        for _ in range(60):
            tries += 1
            dp, dq = _schur_step(U, V, W, gp, gq, lam)
            if config.geodesic and np.all(np.isfinite(dp)) and np.all(np.isfinite(dq)):
                acc = _geodesic_correction(prob, model, kind, meta, q, free, poses, r, w, Jp, Jq,
                                           U, V, W, lam, dp, dq)
                if acc is not None:
                    dp, dq = dp + 0.5 * acc[0], dq + 0.5 * acc[1]
            step = np.zeros_like(q)
            step[free] = dp
            p_new, _ = model.from_internal(q + step)
            p_new = model.clamp(p_new, meta)
            q_new = model.to_internal(p_new)
            if model.check(p_new, meta) is None and np.all(np.isfinite(dq)):
                poses_new = [pose_retract(ps, d) for ps, d in zip(poses, dq)]
                r_new, valid_new, _, _ = prob.evaluate(p_new, kind, meta, poses_new)
                if np.all(valid_new):
                    cost_new = _cost(loss, r_new)
                    if cost_new < cost:
                        accepted = True
                        break
            lam *= 2.0
            if lam > 1e16:
                break
        if not accepted:
            # no descent direction left at working precision
            converged = True
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        log.debug("iter %d cost %.6g lambda %.3g tries %d", it, cost_new, lam, tries)
        q, poses, cost = q_new, poses_new, cost_new
        p, dp_dq = model.from_internal(q)
        history.append(cost)
        lam = max(lam / 3.0, 1e-12)
        r, valid, Jp, Jq = prob.evaluate(p, kind, meta, poses, jac=True, dp_dq=dp_dq)
        if rel < config.lm_tolerance or cost <= ZERO_COST * len(r):
            converged = True
            break
    spec = init_spec.with_params(p)
    rms = float(np.sqrt(np.mean(np.einsum("ij,ij->i", r, r))))
    return CalibReport(
        spec=spec,
        poses=dict(zip(prob.frame_ids, poses)),
        rms=rms,
        param_std=np.full(len(p), np.nan),
        inliers_used=len(prob.uv),
        trimmed=0,
        converged=converged,
        iterations=it,
        cost_history=history,
        dropped_frames=dropped,
        config=config,
        used=used,
        residuals=r,
        target=target,
    )


def compute_rms(spec: CameraSpec, poses: dict[int, Pose], obs: ObservationSet, target: TargetLayout,
                inlier_mask=None) -> float:
    """Root mean square of the per-corner residual norms over the inliers.

    ``inlier_mask`` is aligned with the corners of ``obs`` in frame order.
    """
    prob = Problem(obs, target, [f.frame_id for f in obs.frames])
    missing = [fid for fid in prob.frame_ids if fid not in poses]
    if missing:
        raise ValueError(f"no pose for frames {missing}")
    r, valid, _, _ = prob.evaluate(spec.p, spec.kind, spec.meta, [poses[f] for f in prob.frame_ids])
    mask = np.ones(len(r), dtype=bool) if inlier_mask is None else np.asarray(inlier_mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty inlier set")
    if not np.all(valid[mask]):
        raise ValueError("an inlier does not project validly")
    rr = r[mask]
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", rr, rr))))


def compute_covariance(report: CalibReport, obs: ObservationSet | None = None,
                       target: TargetLayout | None = None) -> tuple[np.ndarray, float]:
    """Intrinsic standard deviations and the intrinsic-block condition number.

    The pose blocks are marginalized with a Schur complement.  The condition
    number is that of the information matrix after scaling to unit diagonal,
    so it measures parameter correlation rather than units.
    """
    obs = obs if obs is not None else report.used
    target = target if target is not None else report.target
    if target is None:
        raise ValueError("target layout required")
    spec = report.spec
    loss = report.config.loss if report.config else RobustLoss("none")
    prob = Problem(obs, target, [f.frame_id for f in obs.frames if f.frame_id in report.poses])
    poses = [report.poses[fid] for fid in prob.frame_ids]
    r, valid, Jp, Jq = prob.evaluate(spec.p, spec.kind, spec.meta, poses, jac=True)
    keep = valid
    s = np.einsum("ij,ij->i", r, r)
    w = np.where(keep, loss.weight(s), 0.0)
    r = np.where(keep[:, None], r, 0.0)
    Jp = np.where(keep[:, None, None], Jp, 0.0)
    Jq = np.where(keep[:, None, None], Jq, 0.0)
    U, V, W, gp, gq = _normal_blocks(prob, r, w, Jp, Jq)
    n_all = len(spec.p)
    free = free_params(spec.model, spec.meta, n_all)
    P = U.shape[0]
    dof = 2 * int(keep.sum()) - P - 6 * prob.n_frames
    sigma2 = float(np.sum(w * s * keep)) / max(dof, 1)
    try:
        Vinv = np.linalg.inv(V)
        S = U - np.einsum("fij,fkj->ik", W @ Vinv, W)
        d = np.sqrt(np.diag(S))
        Sn = S / d[:, None] / d[None, :]
        ev = np.linalg.eigvalsh(Sn)
        if not np.all(np.isfinite(ev)) or ev[0] <= 1e-15 * ev[-1]:
            raise np.linalg.LinAlgError("singular information matrix")
        cond = float(ev[-1] / ev[0])
        cov = np.linalg.inv(Sn) / d[:, None] / d[None, :]
        std = np.sqrt(np.maximum(np.diag(cov), 0.0) * sigma2)
    except (np.linalg.LinAlgError, FloatingPointError):
        return np.full(n_all, np.nan), float("inf")
    out = np.zeros(n_all)
    out[free] = std
    return out, cond


def trim_outliers(report: CalibReport, obs: ObservationSet | None = None, config: CalibConfig | None = None,
                  target: TargetLayout | None = None) -> tuple[ObservationSet, CalibReport]:
    """Drop corners with large residuals and re-refine, up to ``trim_rounds`` times.

    A corner is removed when its residual norm exceeds
    ``max(trim_threshold, 3 * 1.4826 * MAD)`` of the current residual norms.
    """
    config = config or report.config or CalibConfig(model_kind=report.spec.kind)
    target = target if target is not None else report.target
    current = report.used if report.used is not None else obs
    total = report.trimmed
    for _ in range(config.trim_rounds):
        norms = np.linalg.norm(report.residuals, axis=1)
        mad = np.median(np.abs(norms - np.median(norms)))
        thr = max(config.trim_threshold, 3 * 1.4826 * mad)
        keep = norms <= thr
        if keep.all():
            break
        frames = []
        offset = 0
        for f in current.frames:
            k = keep[offset:offset + len(f)]
            offset += len(f)
            if k.sum() >= 4:
                frames.append(f.subset(k))
            else:
                log.warning("frame %d dropped after trimming", f.frame_id)
        new_obs = ObservationSet(frames)
        if len(new_obs) < 3:
            raise CalibrationError("fewer than 3 frames remain after trimming")
        removed = current.n_corners - new_obs.n_corners
        total += removed
        report = refine(new_obs, target, report.spec, report.poses, config)
        report.trimmed = total
        current = report.used
    report.trimmed = total
    return current, report
