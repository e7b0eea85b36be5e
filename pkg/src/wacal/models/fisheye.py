"""Fisheye models: Kannala-Brandt (KB8), Scaramuzza, FOV and Double Sphere."""

from __future__ import annotations

import numpy as np

from ._base import EPS, AffineModel, CameraModel, pinhole_norm, ray_from_plane, register, safe_norm

# below this ratio of r_c to |x| a point is treated as on the optical axis
_AXIS = 1e-12


@register
class KB8(AffineModel):
    """Equidistant-polynomial model; ``d(theta) = theta + k1 theta^3 + ... + k4 theta^9``.

    Works directly on the incidence angle, so points behind the image plane
    (``Z <= 0``) project as long as ``theta <= theta_max``.
    """

    kind = "KB8"
    aliases = ("kb8", "kb-8", "kannala-brandt", "equidistant")
    names = ("fx", "fy", "cx", "cy", "k1", "k2", "k3", "k4")

    @staticmethod
    def theta_max(meta) -> float:
        return float(meta.get("theta_max", np.pi))

    @staticmethod
    def d_theta(k, theta):
        t2 = theta * theta
        d = theta * (1 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))
        dd = 1 + t2 * (3 * k[0] + t2 * (5 * k[1] + t2 * (7 * k[2] + t2 * 9 * k[3])))
        return d, dd

    def check(self, p, meta):
        reason = super().check(p, meta)
        if reason:
            return reason
        theta = np.linspace(0.0, self.theta_max(meta), 2049)
        _, dd = self.d_theta(p[4:], theta)
        if np.any(dd <= 0):
            return "d(theta) is not strictly increasing on [0, theta_max]"
        return None

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 0.0, 0.0, 0.0, 0.0])

    def _forward(self, k, X, meta, jac):
        n = X.shape[0]
        rc = np.hypot(X[:, 0], X[:, 1])
        Z = X[:, 2]
        rho2 = rc * rc + Z * Z
        theta = np.arctan2(rc, Z)
        axis = rc <= _AXIS * np.sqrt(rho2)
        valid = (theta <= self.theta_max(meta)) & (rho2 > 0) & ~(axis & (Z <= 0))
        d, dd = self.d_theta(k, theta)
        s = np.where(axis, 1.0 / Z, d / np.where(axis, 1.0, rc))
        m = X[:, :2] * s[:, None]
        if not jac:
            return m, valid, None, None
        rcs = np.where(axis, 1.0, rc)
        dth = np.stack([Z * X[:, 0] / (rcs * rho2), Z * X[:, 1] / (rcs * rho2), -rc / rho2], axis=1)
        ds = dd[:, None] * dth / rcs[:, None]
        ds[:, :2] -= (d / rcs**3)[:, None] * X[:, :2]
        ds[axis] = 0.0
        ds[axis, 2] = -1.0 / Z[axis] ** 2
        J = np.zeros((n, 2, 3))
        J[:, 0, 0] = s
        J[:, 1, 1] = s
        J += X[:, :2, None] * ds[:, None, :]
        C = np.empty((n, 2, 4))
        for j in range(4):
            g = np.where(axis, 0.0, theta ** (2 * j + 3) / rcs)
            C[:, :, j] = X[:, :2] * g[:, None]
        return m, valid, J, C

    def _backward(self, k, m, meta):
        tmax = self.theta_max(meta)
        r = np.hypot(m[:, 0], m[:, 1])
        theta = np.minimum(r, tmax)
        for _ in range(20):
            d, dd = self.d_theta(k, theta)
            step = (d - r) / dd
            theta = np.clip(theta - step, 0.0, tmax)
            if np.all(np.abs(step) < 1e-12):
                break
        d, dd = self.d_theta(k, theta)
        valid = np.isfinite(theta) & (np.abs(d - r) < 1e-10 * (1 + r)) & (dd > 0)
        sin_over_r = np.where(r > 0, np.sin(theta) / np.where(r > 0, r, 1.0), 1.0)
        rays = np.column_stack([m * sin_over_r[:, None], np.cos(theta)])
        return rays / safe_norm(rays)[:, None], valid


@register
class FOV(AffineModel):
    kind = "FOV"
    aliases = ("fov", "atan")
    names = ("fx", "fy", "cx", "cy", "omega")
    bounds = {4: (0.0, np.pi - 1e-6)}
    # below this omega the model is the pinhole limit
    tiny = 1e-8

    def check(self, p, meta):
        reason = super().check(p, meta)
        if reason:
            return reason
        if not (0 <= p[4] < np.pi):
            return "omega must lie in [0, pi)"
        return None

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 1.0])

    def _forward(self, d, X, meta, jac):
        w = d[0]
        n = X.shape[0]
        if w < self.tiny:
            m, valid, J = pinhole_norm(X, jac)
            return m, valid, J, (np.zeros((n, 2, 1)) if jac else None)
        ru = np.hypot(X[:, 0], X[:, 1])
        Z = X[:, 2]
        tau = np.tan(w / 2)
        A = 2 * ru * tau
        phi = np.arctan2(A, Z)
        axis = ru <= _AXIS * safe_norm(X)
        valid = ~(axis & (Z <= 0)) & (safe_norm(X) > 0)
        rus = np.where(axis, 1.0, ru)
        q = np.where(axis, 2 * tau / (w * Z), phi / (w * rus))
        m = X[:, :2] * q[:, None]
        if not jac:
            return m, valid, None, None
        den = A * A + Z * Z
        dq_dru = np.where(axis, 0.0, (2 * tau * Z / den * ru - phi) / (w * rus * rus))
        dq_dZ = np.where(axis, -q / Z, -2 * tau / (w * den))
        dphi_dw = Z * ru * (1 + tau * tau) / den
        dq_dw = np.where(
            axis,
            2 * ((1 + tau * tau) / 2 * w - tau) / (w * w * Z),
            (dphi_dw * w - phi) / (w * w * rus),
        )
        dq = np.zeros((n, 3))
        dq[:, 0] = dq_dru * X[:, 0] / rus
        dq[:, 1] = dq_dru * X[:, 1] / rus
        dq[:, 2] = dq_dZ
        J = np.zeros((n, 2, 3))
        J[:, 0, 0] = q
        J[:, 1, 1] = q
        J += X[:, :2, None] * dq[:, None, :]
        C = (X[:, :2] * dq_dw[:, None])[:, :, None]
        return m, valid, J, C

    def _backward(self, d, m, meta):
        w = d[0]
        if w < self.tiny:
            return ray_from_plane(m), np.all(np.isfinite(m), axis=1)
        rd = np.hypot(m[:, 0], m[:, 1])
        phi = rd * w
        valid = phi < np.pi
        # sin(rd w) / rd, finite at rd = 0
        sr = w * np.sinc(phi / np.pi)
        rays = np.column_stack([m * (sr / (2 * np.tan(w / 2)))[:, None], np.cos(phi)])
        return rays / safe_norm(rays)[:, None], valid


@register
class DS(AffineModel):
    """Double sphere: two unit spheres offset by xi, then a generalized pinhole."""

    kind = "DS"
    aliases = ("ds", "double-sphere", "doublesphere")
    names = ("fx", "fy", "cx", "cy", "xi", "alpha")
    closed_form = True
    bounds = {4: (-1 + 1e-9, 1 - 1e-9), 5: (1e-9, 1.0)}

    def check(self, p, meta):
        reason = super().check(p, meta)
        if reason:
            return reason
        if not (-1 < p[4] < 1):
            return "xi must lie in (-1, 1)"
        if not (0 < p[5] <= 1):
            return "alpha must lie in (0, 1]"
        return None

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 0.0, 0.5])

    @staticmethod
    def _w2(xi, alpha):
        w1 = alpha / (1 - alpha) if alpha <= 0.5 else (1 - alpha) / alpha
        return (w1 + xi) / np.sqrt(2 * w1 * xi + xi * xi + 1)

    def _forward(self, d, X, meta, jac):
        xi, alpha = d
        n = X.shape[0]
        d1 = safe_norm(X)
        e = xi * d1 + X[:, 2]
        d2 = np.sqrt(X[:, 0] ** 2 + X[:, 1] ** 2 + e * e)
        den = alpha * d2 + (1 - alpha) * e
        valid = (den > EPS * d1) & (X[:, 2] > -self._w2(xi, alpha) * d1)
        m = X[:, :2] / den[:, None]
        if not jac:
            return m, valid, None, None
        dd1 = X / d1[:, None]
        de = xi * dd1
        de[:, 2] += 1.0
        dd2 = (e / d2)[:, None] * de
        dd2[:, :2] += X[:, :2] / d2[:, None]
        dden = alpha * dd2 + (1 - alpha) * de
        J = np.zeros((n, 2, 3))
        J[:, 0, 0] = 1 / den
        J[:, 1, 1] = 1 / den
        J -= (X[:, :2] / den[:, None] ** 2)[:, :, None] * dden[:, None, :]
        dden_dxi = alpha * e * d1 / d2 + (1 - alpha) * d1
        dden_dalpha = d2 - e
        C = np.empty((n, 2, 2))
        C[:, :, 0] = -m * (dden_dxi / den)[:, None]
        C[:, :, 1] = -m * (dden_dalpha / den)[:, None]
        return m, valid, J, C

    def _backward(self, d, m, meta):
        xi, alpha = d
        r2 = m[:, 0] ** 2 + m[:, 1] ** 2
        s1 = 1 - (2 * alpha - 1) * r2
        valid = s1 >= 0
        zd = (1 - alpha * alpha * r2) / (alpha * np.sqrt(s1) + 1 - alpha)
        s2 = zd * zd + (1 - xi * xi) * r2
        valid &= s2 >= 0
        k = (zd * xi + np.sqrt(s2)) / (zd * zd + r2)
        rays = np.column_stack([k[:, None] * m, k * zd - xi])
        return rays / safe_norm(rays)[:, None], valid


@register
class Scaramuzza(CameraModel):
    """Backward polynomial model ``w(rho) = a0 + a2 rho^2 + a3 rho^3 + a4 rho^4``
    with a 2x2 stretch ``[[c, d], [e, 1]]``.

    Forward projection takes the smallest positive real root of
    ``w(rho) - (Z / r_c) rho = 0``.  The sign of ``w`` fixes the hemisphere:
    with ``a0 > 0`` the optical axis is ``+z``.
    """

    kind = "Scaramuzza"
    aliases = ("scaramuzza", "ocam", "omnidir-poly")
    names = ("a0", "a2", "a3", "a4", "cx", "cy", "c", "d", "e")
    focal_indices = (0,)

    def focal(self, p):
        return float(p[0]), float(p[0])

    def check(self, p, meta):
        if not np.all(np.isfinite(p)):
            return "non-finite parameter"
        if p[0] == 0:
            return "a0 must be non-zero"
        if p[6] == p[7] * p[8]:
            return "singular stretch matrix"
        return None

    def gauge_fixed(self, meta):
        # a stretch A and A Rot(phi) / s give identical images once the pose
        # absorbs a roll and the polynomial absorbs the scale; pin e = 0
        return (8,)

    def canonical(self, p, meta):
        """Equivalent parameters with ``e = 0`` (upper-triangular stretch).

        The accompanying poses turn by ``atan(e)`` about the optical axis.
        """
        p = np.array(p, dtype=float)
        a0, a2, a3, a4, cx, cy, c, d, e = p
        phi = -np.arctan(e)
        cs, sn = np.cos(phi), np.sin(phi)
        A = np.array([[c, d], [e, 1.0]]) @ np.array([[cs, -sn], [sn, cs]])
        s = A[1, 1]
        A /= s
        return np.array([a0 * s, a2 / s, a3 / s**2, a4 / s**3, cx, cy, A[0, 0], A[0, 1], 0.0])

    def neutral(self, f, cx, cy, meta):
        # second-order match to an equidistant lens of focal f
        return np.array([f, -1.0 / (3.0 * f), 0.0, 0.0, cx, cy, 1.0, 0.0, 0.0])

    @staticmethod
    def rho_limit(p) -> float:
        """First radius where ``w(rho)/rho`` stops decreasing (inf if never)."""
        a0, a2, a3, a4 = p[:4]
        # rho w' - w = 3 a4 r^4 + 2 a3 r^3 + a2 r^2 - a0
        roots = np.roots([3 * a4, 2 * a3, a2, 0.0, -a0]) if any((a2, a3, a4)) else []
        pos = [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-9 * (1 + abs(r)) and r.real > 0]
        return min(pos) if pos else np.inf

    def _solve_rho(self, p, t):
        a0, a2, a3, a4 = p[:4]
        coef = [a4, a3, a2]
        lead = next((i for i, c in enumerate(coef) if c != 0.0), None)
        n = t.size
        if lead is None:
            rho = a0 / t
            return np.where(rho > 0, rho, np.nan)
        deg = 4 - lead
        # monic companion matrices, one per point
        full = np.zeros((n, 5))
        full[:, 0] = a4
        full[:, 1] = a3
        full[:, 2] = a2
        full[:, 3] = -t
        full[:, 4] = a0
        poly = full[:, lead:] / full[:, lead:lead + 1]
        comp = np.zeros((n, deg, deg))
        comp[:, 0, :] = -poly[:, 1:]
        if deg > 1:
            idx = np.arange(deg - 1)
            comp[:, idx + 1, idx] = 1.0
        roots = np.linalg.eigvals(comp)
        real = np.abs(roots.imag) <= 1e-7 * (1.0 + np.abs(roots))
        cand = np.where(real & (roots.real > 0), roots.real, np.inf)
        rho = cand.min(axis=1)
        rho[~np.isfinite(rho)] = np.nan
        for _ in range(3):
            P = a0 + rho * rho * (a2 + rho * (a3 + rho * a4)) - t * rho
            dP = rho * (2 * a2 + rho * (3 * a3 + 4 * a4 * rho)) - t
            rho = rho - P / dP
        return rho

    def project(self, p, X, meta, jac=False):
        p = np.asarray(p, dtype=float)
        a0, a2, a3, a4, cx, cy, c, dd, e = p
        A = np.array([[c, dd], [e, 1.0]])
        n = X.shape[0]
        rc = np.hypot(X[:, 0], X[:, 1])
        Z = X[:, 2]
        axis = rc <= _AXIS * safe_norm(X)
        rcs = np.where(axis, 1.0, rc)
        with np.errstate(all="ignore"):
            t = Z / rcs
            rho = np.zeros(n)
            off = ~axis
            if np.any(off):
                rho[off] = self._solve_rho(p, t[off])
            dP = rho * (2 * a2 + rho * (3 * a3 + 4 * a4 * rho)) - t
            valid = np.isfinite(rho) & ((dP < 0) | axis) & ~(axis & ((Z <= 0) | (a0 <= 0)))
            ex = X[:, :2] / rcs[:, None]
            ex[axis] = 0.0
            h = ex * rho[:, None]
            uv = h @ A.T + np.array([cx, cy])
        uv[~valid] = np.nan
        if not jac:
            return uv, valid, None, None
        with np.errstate(all="ignore"):
            dPs = np.where(axis, 1.0, dP)
            drho_dt = rho / dPs
            dt = np.stack([-Z * X[:, 0] / rcs**3, -Z * X[:, 1] / rcs**3, 1 / rcs], axis=1)
            drho = drho_dt[:, None] * dt
            de = np.zeros((n, 2, 3))
            de[:, 0, 0] = X[:, 1] ** 2 / rcs**3
            de[:, 0, 1] = -X[:, 0] * X[:, 1] / rcs**3
            de[:, 1, 0] = -X[:, 0] * X[:, 1] / rcs**3
            de[:, 1, 1] = X[:, 0] ** 2 / rcs**3
            Jh = ex[:, :, None] * drho[:, None, :] + rho[:, None, None] * de
            # on axis rho ~ a0 r_c / Z, so h ~ a0 (X, Y) / Z
            Jh[axis] = 0.0
            Jh[axis, 0, 0] = a0 / Z[axis]
            Jh[axis, 1, 1] = a0 / Z[axis]
            Jx = A[None] @ Jh
            Jp = np.zeros((n, 2, 9))
            for j, power in enumerate((0, 2, 3, 4)):
                drho_da = -(rho**power) / dPs
                Jp[:, :, j] = (ex @ A.T) * drho_da[:, None]
            Jp[:, 0, 4] = 1.0
            Jp[:, 1, 5] = 1.0
            Jp[:, 0, 6] = h[:, 0]
            Jp[:, 0, 7] = h[:, 1]
            Jp[:, 1, 8] = h[:, 0]
        return uv, valid, Jx, Jp

    def unproject(self, p, uv, meta):
        p = np.asarray(p, dtype=float)
        a0, a2, a3, a4, cx, cy, c, dd, e = p
        Ainv = np.linalg.inv(np.array([[c, dd], [e, 1.0]]))
        h = (uv - np.array([cx, cy])) @ Ainv.T
        rho = np.hypot(h[:, 0], h[:, 1])
        w = a0 + rho * rho * (a2 + rho * (a3 + rho * a4))
        valid = np.isfinite(w) & (rho < self.rho_limit(p))
        rays = np.column_stack([h, w])
        rays = rays / safe_norm(rays)[:, None]
        rays[~valid] = np.nan
        return rays, valid
