"""Camera specification container, model registry and shared numerics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

# denominator validity threshold, normalized units
EPS = 1e-9

_REGISTRY: dict[str, "CameraModel"] = {}
_ALIASES: dict[str, str] = {}


class ParameterError(ValueError):
    """Parameter vector does not fit the camera kind.

    ``code`` is a short machine-readable tag (``length_mismatch``,
    ``unknown_kind``, ...).
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def register(cls: type) -> type:
    model = cls()
    _REGISTRY[model.kind] = model
    _ALIASES[model.kind.lower()] = model.kind
    for alias in model.aliases:
        _ALIASES[alias.lower()] = model.kind
    return cls


def canonical_kind(kind: str) -> str:
    try:
        return _ALIASES[str(kind).lower()]
    except KeyError:
        raise ParameterError("unknown_kind", f"unknown camera kind {kind!r}") from None


def get_model(kind: str) -> "CameraModel":
    return _REGISTRY[canonical_kind(kind)]


def available_kinds() -> list[str]:
    return list(_REGISTRY)


@dataclass(frozen=True, eq=False)
class CameraSpec:
    """Model kind, ordered parameter vector and image size.

    ``meta`` carries the few layout options that cannot be read off the
    parameter vector: ``theta_max`` (KB8 valid incidence angle, radians,
    default pi) and ``p``/``q`` (numerator/denominator orders of the
    Rational model).
    """

    kind: str
    params: tuple
    width: int = 0
    height: int = 0
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        object.__setattr__(self, "params", tuple(float(v) for v in np.ravel(self.params)))
        object.__setattr__(self, "meta", dict(self.meta))
        model = get_model(self.kind)
        n = model.n_params(self.meta, len(self.params))
        if n != len(self.params):
            raise ParameterError(
                "length_mismatch",
                f"{self.kind} expects {n} parameters, got {len(self.params)}",
            )

    @property
    def model(self) -> "CameraModel":
        return get_model(self.kind)

    @property
    def p(self) -> np.ndarray:
        return np.array(self.params)

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.model.param_names(self.meta, len(self.params))

    def with_params(self, params) -> "CameraSpec":
        return CameraSpec(self.kind, tuple(params), self.width, self.height, self.meta)

    def __eq__(self, other):
        if not isinstance(other, CameraSpec):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.params == other.params
            and self.width == other.width
            and self.height == other.height
            and dict(self.meta) == dict(other.meta)
        )

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "params": list(self.params),
            "width": int(self.width),
            "height": int(self.height),
        }
        if self.meta:
            out["meta"] = dict(self.meta)
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "CameraSpec":
        return cls(d["kind"], tuple(d["params"]), int(d.get("width", 0)),
                   int(d.get("height", 0)), d.get("meta", {}))


class CameraModel:
    """Vectorized projection math for one camera kind.

    ``project`` returns ``(uv, valid, J_x, J_p)`` for an ``(N, 3)`` stack;
    Jacobians are ``None`` unless ``jac=True``.  ``unproject`` returns unit
    rays and a validity mask.  Invalid entries hold NaN.
    """

    kind = ""
    aliases: tuple[str, ...] = ()
    names: tuple[str, ...] = ()
    # forward and backward both closed-form
    closed_form = False
    # parameters carrying the focal scale
    focal_indices: tuple[int, ...] = (0, 1)
    # index of parameters kept inside a box after each optimizer step
    bounds: dict[int, tuple[float, float]] = {}

    def n_params(self, meta, given: int) -> int:
        return len(self.names)

    def param_names(self, meta, given: int | None = None) -> tuple[str, ...]:
        return self.names

    def check(self, p: np.ndarray, meta) -> str | None:
        """Reason string when ``p`` is outside the model's domain, else None."""
        if not np.all(np.isfinite(p)):
            return "non-finite parameter"
        fx, fy = self.focal(p)
        if not (fx > 0 and fy > 0):
            return "focal lengths must be positive"
        return None

    def gauge_fixed(self, meta) -> tuple[int, ...]:
        """Indices of parameters held fixed to remove an exact gauge freedom."""
        return ()

    def canonical(self, p: np.ndarray, meta) -> np.ndarray:
        """Equivalent parameters in the gauge selected by ``gauge_fixed``."""
        return np.array(p, dtype=float)

    def to_internal(self, p: np.ndarray) -> np.ndarray:
        """Optimizer coordinates for ``p`` (identity unless overridden)."""
        return np.array(p, dtype=float)

    def from_internal(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Parameters for optimizer coordinates ``q`` and ``d p / d q``."""
        q = np.array(q, dtype=float)
        return q, np.eye(len(q))

    def clamp(self, p: np.ndarray, meta) -> np.ndarray:
        p = p.copy()
        for i, (lo, hi) in self.bounds.items():
            p[i] = min(max(p[i], lo), hi)
        return p

    def focal(self, p: np.ndarray) -> tuple[float, float]:
        return float(p[0]), float(p[1])

    def neutral(self, f: float, cx: float, cy: float, meta) -> np.ndarray:
        raise NotImplementedError

    def project(self, p, X, meta, jac=False):
        raise NotImplementedError

    def unproject(self, p, uv, meta):
        raise NotImplementedError


class AffineModel(CameraModel):
    """Models of the form ``pixel = diag(f) m(X; d) + c`` with ``p = [f, c, d]``."""

    def _forward(self, d, X, meta, jac):
        """Normalized image point ``m`` with ``dm/dX`` and ``dm/dd``."""
        raise NotImplementedError

    def _backward(self, d, m, meta):
        raise NotImplementedError

    def project(self, p, X, meta, jac=False):
        p = np.asarray(p, dtype=float)
        f, c, d = p[0:2], p[2:4], p[4:]
        with np.errstate(all="ignore"):
            m, valid, dm_dX, dm_dd = self._forward(d, X, meta, jac)
            uv = m * f + c
        uv[~valid] = np.nan
        if not jac:
            return uv, valid, None, None
        n = X.shape[0]
        Jx = dm_dX * f[None, :, None]
        Jp = np.zeros((n, 2, p.size))
        Jp[:, 0, 0] = m[:, 0]
        Jp[:, 1, 1] = m[:, 1]
        Jp[:, 0, 2] = 1.0
        Jp[:, 1, 3] = 1.0
        if d.size:
            Jp[:, :, 4:] = dm_dd * f[None, :, None]
        return uv, valid, Jx, Jp

    def unproject(self, p, uv, meta):
        p = np.asarray(p, dtype=float)
        m = (uv - p[2:4]) / p[0:2]
        with np.errstate(all="ignore"):
            rays, valid = self._backward(p[4:], m, meta)
        rays[~valid] = np.nan
        return rays, valid


def safe_norm(X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", X, X))


def pinhole_norm(X, jac):
    """``(X/Z, Y/Z)`` with validity ``Z > EPS |X|`` and its 2x3 Jacobian."""
    Z = X[:, 2]
    valid = Z > EPS * safe_norm(X)
    iz = 1.0 / Z
    m = X[:, :2] * iz[:, None]
    J = None
    if jac:
        J = np.zeros((X.shape[0], 2, 3))
        J[:, 0, 0] = iz
        J[:, 1, 1] = iz
        J[:, 0, 2] = -m[:, 0] * iz
        J[:, 1, 2] = -m[:, 1] * iz
    return m, valid, J


def ray_from_plane(xy: np.ndarray) -> np.ndarray:
    v = np.concatenate([xy, np.ones((xy.shape[0], 1))], axis=1)
    return v / safe_norm(v)[:, None]


def brown(xy, radial, p1, p2, prism=()):
    """Radial-tangential (plus optional thin-prism) distortion of ``xy``.

    ``radial`` are the even-power coefficients ``k_1..k_n`` (r^2..r^2n).
    ``prism`` is ``(s1, s2)`` meaning ``du = s1 r^2, dv = s2 r^2`` or
    ``(s1, s2, s3, s4)`` meaning ``du = s1 r^2 + s2 r^4, dv = s3 r^2 + s4 r^4``.

    Returns ``(xy_d, J_xy, J_coef)`` with coefficients ordered
    ``radial, p1, p2, prism``.
    """
    x, y = xy[:, 0], xy[:, 1]
    r2 = x * x + y * y
    R = np.ones_like(r2)
    dR = np.zeros_like(r2)
    powers = [np.ones_like(r2)]
    for j, k in enumerate(radial, start=1):
        powers.append(powers[-1] * r2)
        R = R + k * powers[j]
        dR = dR + j * k * powers[j - 1]
    xd = x * R + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
    yd = y * R + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
    du, dv, ddu, ddv = 0.0, 0.0, 0.0, 0.0
    if len(prism) == 2:
        s1, s2 = prism
        du, dv = s1 * r2, s2 * r2
        ddu, ddv = s1, s2
    elif len(prism) == 4:
        s1, s2, s3, s4 = prism
        du, dv = s1 * r2 + s2 * r2 * r2, s3 * r2 + s4 * r2 * r2
        ddu, ddv = s1 + 2 * s2 * r2, s3 + 2 * s4 * r2
    xd = xd + du
    yd = yd + dv
    n = xy.shape[0]
    J = np.empty((n, 2, 2))
    J[:, 0, 0] = R + 2 * x * x * dR + 2 * p1 * y + 6 * p2 * x + 2 * x * ddu
    J[:, 0, 1] = 2 * x * y * dR + 2 * p1 * x + 2 * p2 * y + 2 * y * ddu
    J[:, 1, 0] = 2 * x * y * dR + 2 * p1 * x + 2 * p2 * y + 2 * x * ddv
    J[:, 1, 1] = R + 2 * y * y * dR + 6 * p1 * y + 2 * p2 * x + 2 * y * ddv
    nk = len(radial)
    C = np.zeros((n, 2, nk + 2 + len(prism)))
    for j in range(nk):
        C[:, 0, j] = x * powers[j + 1]
        C[:, 1, j] = y * powers[j + 1]
    C[:, 0, nk] = 2 * x * y
    C[:, 1, nk] = r2 + 2 * y * y
    C[:, 0, nk + 1] = r2 + 2 * x * x
    C[:, 1, nk + 1] = 2 * x * y
    o = nk + 2
    if len(prism) == 2:
        C[:, 0, o] = r2
        C[:, 1, o + 1] = r2
    elif len(prism) == 4:
        C[:, 0, o] = r2
        C[:, 0, o + 1] = r2 * r2
        C[:, 1, o + 2] = r2
        C[:, 1, o + 3] = r2 * r2
    return np.stack([xd, yd], axis=1), J, C


def newton2(fun, target, x0, iters=30, tol=1e-15):
    """Solve ``fun(x) = target`` row-wise; ``fun`` returns ``(value, J)``.

    Returns ``(x, ok)`` where ``ok`` flags rows whose final residual is tiny
    and whose Jacobian keeps a positive determinant.
    """
    x = x0.copy()
    with np.errstate(all="ignore"):
        for _ in range(iters):
            val, J = fun(x)
            r = val - target
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            sx = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
            sy = (J[:, 0, 0] * r[:, 1] - J[:, 1, 0] * r[:, 0]) / det
            x = x - np.stack([sx, sy], axis=1)
            step = np.maximum(np.abs(sx), np.abs(sy))
            if not np.any(step > tol * (1.0 + np.abs(x).max(axis=1))):
                break
        val, J = fun(x)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        res = np.abs(val - target).max(axis=1)
        ok = np.isfinite(res) & (res < 1e-11 * (1.0 + np.abs(target).max(axis=1))) & (det > 0)
    return x, ok


def inv2(J):
    """Batched 2x2 inverse."""
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    out = np.empty_like(J)
    out[:, 0, 0] = J[:, 1, 1] / det
    out[:, 1, 1] = J[:, 0, 0] / det
    out[:, 0, 1] = -J[:, 0, 1] / det
    out[:, 1, 0] = -J[:, 1, 0] / det
    return out
