"""Rigid transforms and the minimal pose parameterization used by the optimizer.

Convention: a :class:`Pose` maps target-frame points into the camera frame,
``x_c = R @ x_t + t``.  Increments are applied on the left,
``retract(p, d) = Exp(d) * p`` with ``Exp(d) = (exp([w]x), v)`` for
``d = (w, v)``, so the camera-frame derivative of ``retract(p, d) x`` at
``d = 0`` is ``[-[x_c]x | I]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Pose",
    "hat",
    "so3_exp",
    "so3_log",
    "nearest_rotation",
    "pose_apply",
    "pose_compose",
    "pose_inverse",
    "pose_retract",
    "pose_log",
    "normalize_rays",
]

# re-orthonormalize after this many consecutive retractions
REORTHO_PERIOD = 50


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector (or a stack of them)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula, with a Taylor branch near the identity."""
    w = np.asarray(w, dtype=float)
    theta2 = float(w @ w)
    K = hat(w)
    if theta2 < 1e-12:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, valid up to angle pi."""
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return 0.5 * vee * (1.0 + theta**2 / 6.0)
    if np.pi - theta < 1e-6:
        # axis from the symmetric part; sign fixed by the tiny antisymmetric part
        B = (R + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(B)))
        axis = B[:, i] / np.sqrt(B[i, i])
        if axis @ vee < 0:
            axis = -axis
        return theta * axis / np.linalg.norm(axis)
    return theta / (2.0 * np.sin(theta)) * vee


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class Pose:
    """Target-to-camera rigid transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # retractions since the last re-orthonormalization
    drift_count: int = field(default=0, compare=False)

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def to_list(self) -> list[float]:
        """12 numbers: row-major rotation followed by translation."""
        return [float(v) for v in self.rotation.ravel()] + [float(v) for v in self.translation]

    @classmethod
    def from_list(cls, values) -> "Pose":
        values = np.asarray(values, dtype=float)
        if values.shape != (12,):
            raise ValueError(f"pose needs 12 numbers, got {values.size}")
        return cls(values[:9].reshape(3, 3), values[9:])

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None


def pose_apply(p: Pose, x: np.ndarray) -> np.ndarray:
    """``R x + t`` for a single point (3,) or a stack (N, 3)."""
    x = np.asarray(x, dtype=float)
    return x @ p.rotation.T + p.translation


def pose_compose(a: Pose, b: Pose) -> Pose:
    """``a * b``: apply ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def pose_inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -Rt @ p.translation)


def pose_retract(p: Pose, delta: np.ndarray) -> Pose:
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (6,):
        raise ValueError("pose increment must have 6 components")
    if not np.any(delta):
        return p
    dR = so3_exp(delta[:3])
    R = dR @ p.rotation
    t = dR @ p.translation + delta[3:]
    count = p.drift_count + 1
    if count >= REORTHO_PERIOD:
        R = nearest_rotation(R)
        count = 0
    return Pose(R, t, drift_count=count)


def pose_log(p: Pose) -> np.ndarray:
    """Inverse of ``pose_retract(identity, .)``: (axis-angle, translation)."""
    return np.concatenate([so3_log(p.rotation), p.translation])


def normalize_rays(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
