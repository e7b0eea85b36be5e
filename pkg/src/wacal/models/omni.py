"""Unified-sphere models: UCM (both parameterizations), EUCM and Mei."""

from __future__ import annotations

import numpy as np

from ._base import EPS, AffineModel, CameraModel, brown, newton2, register, safe_norm


def _valid_branch(alpha, Z, rho, scale):
    # the unprojection formulas pick the branch alpha Z + (1 - alpha) rho >= 0
    return alpha * Z + (1 - alpha) * rho > EPS * scale


@register
class EUCM(AffineModel):
    kind = "EUCM"
    aliases = ("eucm", "extended-unified")
    names = ("fx", "fy", "cx", "cy", "alpha", "beta")
    closed_form = True
    bounds = {4: (0.0, 1.0), 5: (1e-9, np.inf)}

    def check(self, p, meta):
        reason = super().check(p, meta)
        if reason:
            return reason
        if not (0 <= p[4] <= 1):
            return "alpha must lie in [0, 1]"
        if not p[5] > 0:
            return "beta must be positive"
        return None

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 0.5, 1.0])

    def _ab(self, d):
        return d[0], d[1]

    def _forward(self, d, X, meta, jac):
        alpha, beta = self._ab(d)
        n = X.shape[0]
        R2 = X[:, 0] ** 2 + X[:, 1] ** 2
        Z = X[:, 2]
        rho = np.sqrt(beta * R2 + Z * Z)
        den = alpha * rho + (1 - alpha) * Z
        norm = safe_norm(X)
        valid = (den > EPS * norm) & _valid_branch(alpha, Z, rho, norm)
        m = X[:, :2] / den[:, None]
        if not jac:
            return m, valid, None, None
        drho = np.column_stack([beta * X[:, 0], beta * X[:, 1], Z]) / rho[:, None]
        dden = alpha * drho
        dden[:, 2] += 1 - alpha
        J = np.zeros((n, 2, 3))
        J[:, 0, 0] = 1 / den
        J[:, 1, 1] = 1 / den
        J -= (X[:, :2] / den[:, None] ** 2)[:, :, None] * dden[:, None, :]
        C = np.empty((n, 2, 2))
        C[:, :, 0] = -m * ((rho - Z) / den)[:, None]
        C[:, :, 1] = -m * (alpha * R2 / (2 * rho) / den)[:, None]
        return m, valid, J, C[:, :, : d.size]

    def _backward(self, d, m, meta):
        alpha, beta = self._ab(d)
        r2 = m[:, 0] ** 2 + m[:, 1] ** 2
        s = 1 - (2 * alpha - 1) * beta * r2
        valid = s >= 0
        zd = (1 - beta * alpha * alpha * r2) / (alpha * np.sqrt(s) + 1 - alpha)
        rays = np.column_stack([m, zd])
        return rays / safe_norm(rays)[:, None], valid


@register
class UCMAlpha(EUCM):
    """Unified model in the (f, alpha) form: EUCM with beta fixed to one."""

    kind = "UCMAlpha"
    aliases = ("ucmalpha", "ucm-alpha", "ucm_usenko")
    names = ("fx", "fy", "cx", "cy", "alpha")
    bounds = {4: (0.0, 1.0)}

    def check(self, p, meta):
        reason = CameraModel.check(self, p, meta)
        if reason:
            return reason
        if not (0 <= p[4] <= 1):
            return "alpha must lie in [0, 1]"
        return None

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 0.5])

    def _ab(self, d):
        return d[0], 1.0


def _ucm_norm(xi, X, jac):
    """``(X, Y) / (Z + xi rho)`` with validity, ``dm/dX`` and ``dm/dxi``."""
    rho = safe_norm(X)
    Z = X[:, 2]
    den = Z + xi * rho
    valid = (den > EPS * rho) & (rho + xi * Z > EPS * rho)
    m = X[:, :2] / den[:, None]
    if not jac:
        return m, valid, None, None
    dden = xi * X / rho[:, None]
    dden[:, 2] += 1.0
    J = np.zeros((X.shape[0], 2, 3))
    J[:, 0, 0] = 1 / den
    J[:, 1, 1] = 1 / den
    J -= (X[:, :2] / den[:, None] ** 2)[:, :, None] * dden[:, None, :]
    dxi = -m * (rho / den)[:, None]
    return m, valid, J, dxi


def _ucm_lift(xi, m):
    r2 = m[:, 0] ** 2 + m[:, 1] ** 2
    s = 1 + (1 - xi * xi) * r2
    valid = s >= 0
    k = (xi + np.sqrt(s)) / (1 + r2)
    rays = np.column_stack([k[:, None] * m, k - xi])
    return rays / safe_norm(rays)[:, None], valid


@register
class UCM(AffineModel):
    """Unified model in the (gamma, xi) form."""

    kind = "UCM"
    aliases = ("ucm", "unified")
    names = ("gamma_x", "gamma_y", "cx", "cy", "xi")
    closed_form = True
    bounds = {4: (0.0, np.inf)}

    def focal(self, p):
        return float(p[0] / (1 + p[4])), float(p[1] / (1 + p[4]))

    def check(self, p, meta):
        if not np.all(np.isfinite(p)):
            return "non-finite parameter"
        if not (p[0] > 0 and p[1] > 0):
            return "gamma must be positive"
        if p[4] < 0:
            return "xi must be non-negative"
        return None

    def neutral(self, f, cx, cy, meta):
        return np.array([2 * f, 2 * f, cx, cy, 1.0])

    def _forward(self, d, X, meta, jac):
        m, valid, J, dxi = _ucm_norm(d[0], X, jac)
        return m, valid, J, (dxi[:, :, None] if jac else None)

    def _backward(self, d, m, meta):
        return _ucm_lift(d[0], m)


@register
class Mei(CameraModel):
    """Unified sphere followed by radial-tangential distortion and skew."""

    kind = "Mei"
    aliases = ("mei", "omni", "mei-rives")
    names = ("gamma_x", "gamma_y", "cx", "cy", "xi", "k1", "k2", "k3", "p1", "p2", "s")
    bounds = {4: (0.0, np.inf)}

    def focal(self, p):
        return float(p[0] / (1 + p[4])), float(p[1] / (1 + p[4]))

    def check(self, p, meta):
        if not np.all(np.isfinite(p)):
            return "non-finite parameter"
        if not (p[0] > 0 and p[1] > 0):
            return "gamma must be positive"
        if p[4] < 0:
            return "xi must be non-negative"
        return None

    def to_internal(self, p):
        # (gamma, xi) trade off along a curved valley; f = gamma / (1 + xi)
        # is nearly decoupled from xi, which keeps the optimizer off that curve
        q = np.array(p, dtype=float)
        q[:2] = q[:2] / (1.0 + q[4])
        return q

    def from_internal(self, q):
        q = np.asarray(q, dtype=float)
        p = q.copy()
        p[:2] = q[:2] * (1.0 + q[4])
        J = np.eye(len(q))
        J[0, 0] = J[1, 1] = 1.0 + q[4]
        J[0, 4], J[1, 4] = q[0], q[1]
        return p, J

    def neutral(self, f, cx, cy, meta):
        out = np.zeros(11)
        out[:5] = [2 * f, 2 * f, cx, cy, 1.0]
        return out

    @staticmethod
    def _distort(d, xy):
        return brown(xy, d[:3], d[3], d[4])

    def project(self, p, X, meta, jac=False):
        p = np.asarray(p, dtype=float)
        gx, gy, cx, cy, xi = p[:5]
        dist, s = p[5:10], p[10]
        with np.errstate(all="ignore"):
            nrm, valid, Jn, dxi = _ucm_norm(xi, X, jac)
            md, Jb, C = self._distort(dist, nrm)
            uv = np.column_stack([gx * (md[:, 0] + s * md[:, 1]) + cx, gy * md[:, 1] + cy])
        uv[~valid] = np.nan
        if not jac:
            return uv, valid, None, None
        A = np.array([[gx, gx * s], [0.0, gy]])
        n = X.shape[0]
        with np.errstate(all="ignore"):
            AJb = A[None] @ Jb
            Jx = AJb @ Jn
            Jp = np.zeros((n, 2, 11))
            Jp[:, 0, 0] = md[:, 0] + s * md[:, 1]
            Jp[:, 1, 1] = md[:, 1]
            Jp[:, 0, 2] = 1.0
            Jp[:, 1, 3] = 1.0
            Jp[:, :, 4] = (AJb @ dxi[:, :, None])[:, :, 0]
            Jp[:, :, 5:10] = A[None] @ C
            Jp[:, 0, 10] = gx * md[:, 1]
        return uv, valid, Jx, Jp

    def unproject(self, p, uv, meta):
        p = np.asarray(p, dtype=float)
        gx, gy, cx, cy, xi = p[:5]
        dist, s = p[5:10], p[10]
        yd = (uv[:, 1] - cy) / gy
        xd = (uv[:, 0] - cx) / gx - s * yd
        md = np.column_stack([xd, yd])
        k1, k2, k3, p1, p2 = dist
        with np.errstate(all="ignore"):
            n = md.copy()
            for _ in range(10):
                x, y = n[:, 0], n[:, 1]
                r2 = x * x + y * y
                R = 1 + r2 * (k1 + r2 * (k2 + r2 * k3))
                tx = 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
                ty = p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
                n = np.column_stack([(xd - tx) / R, (yd - ty) / R])
            n, ok = newton2(lambda v: self._distort(dist, v)[:2], md, n)
            rays, valid = _ucm_lift(xi, n)
        valid = valid & ok
        rays[~valid] = np.nan
        return rays, valid
