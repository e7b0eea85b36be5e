"""Perspective models: plain pinhole and its distortion families.

Forward-defined (RadTan, ThinPrism) distort normalized coordinates and are
inverted by 2D Newton.  Backward-defined (RadTanBackward, Division,
Rational) map distorted to undistorted coordinates; their forward
projection solves that map, and its Jacobians follow from the implicit
function theorem.
"""

from __future__ import annotations

import numpy as np

from ._base import (
    AffineModel,
    ParameterError,
    brown,
    inv2,
    newton2,
    pinhole_norm,
    ray_from_plane,
    register,
)


@register
class Pinhole(AffineModel):
    kind = "Pinhole"
    aliases = ("pinhole",)
    names = ("fx", "fy", "cx", "cy")
    closed_form = True

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy])

    def _forward(self, d, X, meta, jac):
        m, valid, J = pinhole_norm(X, jac)
        return m, valid, J, None

    def _backward(self, d, m, meta):
        return ray_from_plane(m), np.all(np.isfinite(m), axis=1)


class _ForwardDistortion(AffineModel):
    def _distort(self, d, xy):
        raise NotImplementedError

    def _forward(self, d, X, meta, jac):
        n, valid, Jn = pinhole_norm(X, jac)
        m, Jxy, C = self._distort(d, n)
        if not jac:
            return m, valid, None, None
        return m, valid, Jxy @ Jn, C

    def _backward(self, d, m, meta):
        xn, ok = newton2(lambda x: self._distort(d, x)[:2], m, m.copy())
        return ray_from_plane(xn), ok


@register
class RadTan(_ForwardDistortion):
    kind = "RadTan"
    aliases = ("radtan", "pinhole-radtan", "plumb_bob")
    names = ("fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2")

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 0.0, 0.0, 0.0, 0.0])

    def _distort(self, d, xy):
        return brown(xy, d[:2], d[2], d[3])


@register
class ThinPrism(_ForwardDistortion):
    """Nine parameters (s1, s2 prism) or eleven (extended s1..s4)."""

    kind = "ThinPrism"
    aliases = ("thinprism", "thin-prism")
    names = ("fx", "fy", "cx", "cy", "k1", "p1", "p2", "s1", "s2")
    extended_names = names + ("s3", "s4")

    def n_params(self, meta, given):
        return 11 if given == 11 else 9

    def param_names(self, meta, given=None):
        return self.extended_names if given == 11 else self.names

    def neutral(self, f, cx, cy, meta):
        n = 11 if meta.get("extended") else 9
        p = np.zeros(n)
        p[:4] = [f, f, cx, cy]
        return p

    def _distort(self, d, xy):
        return brown(xy, d[:1], d[1], d[2], tuple(d[3:]))


class _BackwardDistortion(AffineModel):
    """``m`` solves ``g(m; d) = (X/Z, Y/Z)``."""

    def _g(self, d, xd, meta):
        """Undistorted point, ``dg/dxd`` and ``dg/dd``."""
        raise NotImplementedError

    def _g_valid(self, d, xd, meta):
        return np.ones(xd.shape[0], dtype=bool)

    def _forward(self, d, X, meta, jac):
        n, valid, Jn = pinhole_norm(X, jac)
        m, ok = newton2(lambda x: self._g(d, x, meta)[:2], n, n.copy())
        valid = valid & ok & self._g_valid(d, m, meta)
        if not jac:
            return m, valid, None, None
        _, Jg, G = self._g(d, m, meta)
        Ji = inv2(Jg)
        return m, valid, Ji @ Jn, -(Ji @ G)

    def _backward(self, d, m, meta):
        xn, Jg, _ = self._g(d, m, meta)
        ok = np.all(np.isfinite(xn), axis=1) & self._g_valid(d, m, meta)
        return ray_from_plane(xn), ok


@register
class RadTanBackward(_BackwardDistortion):
    """Radial-tangential polynomial evaluated on the distorted radius."""

    kind = "RadTanBackward"
    aliases = ("radtanbackward", "radtan-backward", "radtan_inv")
    names = RadTan.names

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 0.0, 0.0, 0.0, 0.0])

    def _g(self, d, xd, meta):
        return brown(xd, d[:2], d[2], d[3])


@register
class Division(_BackwardDistortion):
    kind = "Division"
    aliases = ("division",)
    names = ("fx", "fy", "cx", "cy", "k1")

    def neutral(self, f, cx, cy, meta):
        return np.array([f, f, cx, cy, 0.0])

    def _g(self, d, xd, meta):
        k1 = d[0]
        r2 = np.einsum("ij,ij->i", xd, xd)
        s = 1.0 / (1.0 + k1 * r2)
        xn = xd * s[:, None]
        n = xd.shape[0]
        J = np.zeros((n, 2, 2))
        J[:, 0, 0] = s
        J[:, 1, 1] = s
        J -= 2 * k1 * (s * s)[:, None, None] * xd[:, :, None] * xd[:, None, :]
        G = (-r2 * s * s)[:, None, None] * xd[:, :, None]
        return xn, J, G

    def _g_valid(self, d, xd, meta):
        return 1.0 + d[0] * np.einsum("ij,ij->i", xd, xd) > 0

    def _forward(self, d, X, meta, jac):
        # root of k1 rn rd^2 - rd + rn = 0 that stays finite as k1 -> 0
        k1 = d[0]
        n, valid, Jn = pinhole_norm(X, jac)
        rn2 = np.einsum("ij,ij->i", n, n)
        disc = 1.0 - 4.0 * k1 * rn2
        valid = valid & (disc > 0)
        q = np.sqrt(disc)
        s = 2.0 / (1.0 + q)
        m = n * s[:, None]
        valid = valid & self._g_valid(d, m, meta)
        if not jac:
            return m, valid, None, None
        ds_drn2 = 4.0 * k1 / (q * (1.0 + q) ** 2)
        ds_dk = 4.0 * rn2 / (q * (1.0 + q) ** 2)
        Jm = s[:, None, None] * np.eye(2)[None] + 2 * ds_drn2[:, None, None] * n[:, :, None] * n[:, None, :]
        return m, valid, Jm @ Jn, (ds_dk[:, None] * n)[:, :, None]


@register
class Rational(_BackwardDistortion):
    """Backward rational radial model with numerator order p and
    denominator order q (both at most 3).

    ``meta['p']``/``meta['q']`` select the split of the distortion
    coefficients; without them the split is ``p = ceil(n/2)``.
    """

    kind = "Rational"
    aliases = ("rational",)
    names = ("fx", "fy", "cx", "cy")

    @staticmethod
    def orders(meta, n_dist):
        if "p" in meta or "q" in meta:
            p = int(meta.get("p", n_dist - int(meta.get("q", 0))))
            q = int(meta.get("q", n_dist - p))
        else:
            p = (n_dist + 1) // 2
            q = n_dist - p
        return p, q

    def n_params(self, meta, given):
        p, q = self.orders(meta, max(given - 4, 0))
        if not (0 <= p <= 3 and 0 <= q <= 3):
            raise ParameterError("bad_order", f"Rational needs p <= 3 and q <= 3, got p={p}, q={q}")
        return 4 + p + q

    def param_names(self, meta, given=None):
        p, q = self.orders(meta, (given or 10) - 4)
        return self.names + tuple(f"k1_{j}" for j in range(1, p + 1)) + tuple(
            f"k2_{j}" for j in range(1, q + 1)
        )

    def neutral(self, f, cx, cy, meta):
        p, q = self.orders(meta, 6)
        out = np.zeros(4 + p + q)
        out[:4] = [f, f, cx, cy]
        return out

    def _split(self, d, meta):
        p, q = self.orders(meta, d.size)
        return d[:p], d[p:p + q]

    def _poly(self, coef, r2):
        val = np.ones_like(r2)
        der = np.zeros_like(r2)
        pw = [np.ones_like(r2)]
        for j, k in enumerate(coef, start=1):
            pw.append(pw[-1] * r2)
            val = val + k * pw[j]
            der = der + j * k * pw[j - 1]
        return val, der, pw

    def _g(self, d, xd, meta):
        a, b = self._split(d, meta)
        r2 = np.einsum("ij,ij->i", xd, xd)
        N, dN, pw = self._poly(a, r2)
        D, dD, _ = self._poly(b, r2)
        s = N / D
        ds = (dN * D - N * dD) / (D * D)
        xn = xd * s[:, None]
        J = s[:, None, None] * np.eye(2)[None] + 2 * ds[:, None, None] * xd[:, :, None] * xd[:, None, :]
        G = np.zeros((xd.shape[0], 2, d.size))
        for j in range(a.size):
            G[:, :, j] = xd * (pw[j + 1] / D)[:, None]
        for j in range(b.size):
            G[:, :, a.size + j] = -xd * (N * pw[j + 1] / (D * D))[:, None]
        return xn, J, G

    def _g_valid(self, d, xd, meta):
        _, b = self._split(d, meta)
        D, _, _ = self._poly(b, np.einsum("ij,ij->i", xd, xd))
        return D > 0
