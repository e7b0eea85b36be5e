"""Parametric camera models: forward/backward projection, validity, Jacobians.

Every function takes a :class:`CameraSpec` and accepts either one point
(shape ``(3,)`` / ``(2,)``) or a stack (``(N, 3)`` / ``(N, 2)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._base import EPS, CameraModel, CameraSpec, ParameterError, available_kinds, canonical_kind, get_model
from . import pinhole as _pinhole  # noqa: F401  (registers kinds)
from . import fisheye as _fisheye  # noqa: F401
from . import omni as _omni  # noqa: F401

__all__ = [
    "CameraSpec",
    "CameraModel",
    "ParameterError",
    "ProjectionResult",
    "KINDS",
    "ITERATIVE_FORWARD",
    "canonical_kind",
    "get_model",
    "validate_params",
    "param_problem",
    "project",
    "project_points",
    "unproject",
    "jacobian_point",
    "jacobian_params",
    "convert_ucm_forms",
    "focal_of",
    "canonical_spec",
]

KINDS = tuple(available_kinds())
# kinds whose forward projection is an iterative solve
ITERATIVE_FORWARD = ("RadTanBackward", "Rational", "Scaramuzza")


@dataclass(frozen=True)
class ProjectionResult:
    """Projected pixel(s) and validity.

    Invalid entries hold NaN and must not be used.  ``nonconverged`` counts
    points in front of the camera whose iterative forward solve failed.
    """

    pixel: np.ndarray
    valid: np.ndarray
    nonconverged: int = 0


def param_problem(kind: str, params, meta=None) -> str | None:
    """Why ``params`` are unusable for ``kind``, or None.

    Raises :class:`ParameterError` when the vector length does not match.
    """
    model = get_model(kind)
    meta = dict(meta or {})
    params = np.asarray(params, dtype=float).ravel()
    n = model.n_params(meta, params.size)
    if n != params.size:
        raise ParameterError(
            "length_mismatch", f"{model.kind} expects {n} parameters, got {params.size}"
        )
    return model.check(params, meta)


def validate_params(kind: str, params, meta=None) -> bool:
    return param_problem(kind, params, meta) is None


def _stack(x, width):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != width:
        raise ValueError(f"expected points with {width} coordinates, got shape {x.shape}")
    return x, single


def project_points(spec: CameraSpec, X: np.ndarray, jac: bool = False):
    """Raw vectorized projection: ``(uv, valid, J_x, J_p)`` for ``(N, 3)`` input."""
    return spec.model.project(spec.p, np.asarray(X, dtype=float), spec.meta, jac)


def project(spec: CameraSpec, x) -> ProjectionResult:
    X, single = _stack(x, 3)
    uv, valid, _, _ = project_points(spec, X)
    nonconv = 0
    if spec.kind in ITERATIVE_FORWARD:
        nonconv = int(np.count_nonzero(~valid & (X[:, 2] > EPS * np.linalg.norm(X, axis=1))))
    if single:
        return ProjectionResult(uv[0], bool(valid[0]), nonconv)
    return ProjectionResult(uv, valid, nonconv)


def unproject(spec: CameraSpec, m):
    """Unit ray(s) for pixel(s) ``m`` and the validity flag(s)."""
    M, single = _stack(m, 2)
    rays, valid = spec.model.unproject(spec.p, M, spec.meta)
    if single:
        return rays[0], bool(valid[0])
    return rays, valid


def _jac(spec, x, which):
    X, single = _stack(x, 3)
    _, valid, Jx, Jp = project_points(spec, X, jac=True)
    if not np.all(valid):
        raise ValueError("Jacobian requested at a point outside the projectable region")
    J = Jx if which == "x" else Jp
    return J[0] if single else J


def jacobian_point(spec: CameraSpec, x) -> np.ndarray:
    """d pixel / d camera-frame point, shape (2, 3) per point."""
    return _jac(spec, x, "x")


def jacobian_params(spec: CameraSpec, x) -> np.ndarray:
    """d pixel / d params in layout order, shape (2, P) per point."""
    return _jac(spec, x, "p")


def convert_ucm_forms(spec: CameraSpec) -> CameraSpec:
    """UCM (gamma, xi) <-> UCMAlpha (f, alpha) via alpha = xi / (1 + xi), f = gamma / (1 + xi)."""
    p = spec.p
    if spec.kind == "UCM":
        xi = p[4]
        if xi < 0:
            raise ValueError("xi must be non-negative")
        new = [p[0] / (1 + xi), p[1] / (1 + xi), p[2], p[3], xi / (1 + xi)]
        return CameraSpec("UCMAlpha", new, spec.width, spec.height, spec.meta)
    if spec.kind == "UCMAlpha":
        alpha = p[4]
        if alpha == 1:
            raise ZeroDivisionError("alpha = 1 has no finite xi")
        if alpha > 1:
            raise ValueError("alpha must be below 1")
        xi = alpha / (1 - alpha)
        new = [p[0] * (1 + xi), p[1] * (1 + xi), p[2], p[3], xi]
        return CameraSpec("UCM", new, spec.width, spec.height, spec.meta)
    raise ValueError(f"{spec.kind} is not a unified-model spec")


def focal_of(spec: CameraSpec) -> tuple[float, float]:
    """Focal lengths comparable across kinds (gamma / (1 + xi) for UCM and
    Mei, a0 for Scaramuzza)."""
    return spec.model.focal(spec.p)


def canonical_spec(spec: CameraSpec) -> CameraSpec:
    """Image-equivalent spec in the gauge the optimizer uses (identity for
    kinds without a gauge freedom)."""
    return spec.with_params(spec.model.canonical(spec.p, spec.meta))
