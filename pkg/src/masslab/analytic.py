"""Closed-form scalar functions on R^3 with pointwise first and second derivatives.

These supply the conformal factors, boundary data and test fields used across
the lab.  Derivatives are plain coordinate (Euclidean) derivatives; anything
metric-aware is assembled on top of these jets elsewhere.  All evaluators
accept either a single point of shape (3,) or a batch of shape (..., 3) and
broadcast accordingly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

SQRT_PI = np.sqrt(np.pi)


def _radius(p):
    return np.sqrt(np.sum(np.asarray(p, dtype=float) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# radial profiles: scalar functions of r = |x| with two derivatives
# ---------------------------------------------------------------------------

class RadialProfile:
    """Scalar profile f(r) with closed-form f' and f''."""

    def f(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def laplacian(self, r):
        """Euclidean Laplacian f'' + 2 f'/r of the radial function."""
        r = np.asarray(r, dtype=float)
        return self.d2(r) + 2.0 * self.d1(r) / r


class ConstantProfile(RadialProfile):
    def __init__(self, c):
        self.c = float(c)

    def f(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.c)

    def d1(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    d2 = d1


class MonopoleProfile(RadialProfile):
    """c / r, harmonic away from the origin."""

    def __init__(self, c):
        self.c = float(c)

    def f(self, r):
        return self.c / np.asarray(r, dtype=float)

    def d1(self, r):
        return -self.c / np.asarray(r, dtype=float) ** 2

    def d2(self, r):
        return 2.0 * self.c / np.asarray(r, dtype=float) ** 3


class GaussianProfile(RadialProfile):
    """A exp(-((r - r0)/s)^2); sign-changing Laplacian (not superharmonic)."""

    def __init__(self, amplitude, center, width):
        self.A = float(amplitude)
        self.r0 = float(center)
        self.s = float(width)

    def _xi(self, r):
        return (np.asarray(r, dtype=float) - self.r0) / self.s

    def f(self, r):
        return self.A * np.exp(-self._xi(r) ** 2)

    def d1(self, r):
        xi = self._xi(r)
        return self.A * np.exp(-(xi ** 2)) * (-2.0 * xi / self.s)

    def d2(self, r):
        xi = self._xi(r)
        return self.A * np.exp(-(xi ** 2)) * (4.0 * xi ** 2 - 2.0) / self.s ** 2


class ShellPotentialProfile(RadialProfile):
    """Newtonian potential of a unit-mass Gaussian shell of density ~ exp(-((t-r0)/s)^2).

    f(r) = M(r)/(M_inf r) + I1(r,inf)/M_inf with M(r) the enclosed mass integral.
    Superharmonic everywhere (Laplacian = -G(r)/M_inf <= 0), smooth at the
    origin, and f -> 1/r at infinity, so A * f adds exactly 2A to the ADM mass
    of a conformally flat metric.
    """

    def __init__(self, center, width):
        self.r0 = float(center)
        self.s = float(width)
        self.m_inf = self._i2(0.0, np.inf)

    def _xi(self, t):
        return (np.asarray(t, dtype=float) - self.r0) / self.s

    def _gauss(self, t):
        return np.exp(-self._xi(t) ** 2)

    def _i2(self, a, b):
        # int_a^b t^2 exp(-((t-r0)/s)^2) dt via erf/exp antiderivatives
        r0, s = self.r0, self.s
        xa, xb = self._xi(a), self._xi(b)

        def ef(x):
            return erf(x) if np.isfinite(x) else np.sign(x)

        def ex(x):
            return np.exp(-x * x) if np.isfinite(x) else 0.0

        j0 = 0.5 * SQRT_PI * (ef(xb) - ef(xa))
        j1 = 0.5 * (ex(xa) - ex(xb))
        j2 = 0.25 * SQRT_PI * (ef(xb) - ef(xa)) - 0.5 * (
            (xb * ex(xb) if np.isfinite(xb) else 0.0)
            - (xa * ex(xa) if np.isfinite(xa) else 0.0)
        )
        return s * (r0 ** 2 * j0 + 2.0 * r0 * s * j1 + s ** 2 * j2)

    def _i1(self, a):
        # int_a^inf t exp(-((t-r0)/s)^2) dt
        r0, s = self.r0, self.s
        xa = self._xi(a)
        j0 = 0.5 * SQRT_PI * (1.0 - erf(xa))
        j1 = 0.5 * np.exp(-xa * xa)
        return s * (r0 * j0 + s * j1)

    def _mass(self, r):
        r = np.asarray(r, dtype=float)
        xa, xr = self._xi(0.0), self._xi(r)
        j0 = 0.5 * SQRT_PI * (erf(xr) - erf(xa))
        j1 = 0.5 * (np.exp(-xa * xa) - np.exp(-xr * xr))
        j2 = 0.25 * SQRT_PI * (erf(xr) - erf(xa)) - 0.5 * (
            xr * np.exp(-xr * xr) - xa * np.exp(-xa * xa)
        )
        return self.s * (self.r0 ** 2 * j0 + 2.0 * self.r0 * self.s * j1 + self.s ** 2 * j2)

    def f(self, r):
        r = np.asarray(r, dtype=float)
        xa = self._xi(r)
        j0 = 0.5 * SQRT_PI * (1.0 - erf(xa))
        j1 = 0.5 * np.exp(-xa * xa)
        outer = self.s * (self.r0 * j0 + self.s * j1)
        return (self._mass(r) / r + outer) / self.m_inf

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return -self._mass(r) / (self.m_inf * r ** 2)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return -self._gauss(r) / self.m_inf - 2.0 * self.d1(r) / r

    def laplacian(self, r):
        return -self._gauss(r) / self.m_inf


class SumProfile(RadialProfile):
    def __init__(self, *parts):
        self.parts = parts

    def f(self, r):
        return sum(p.f(r) for p in self.parts)

    def d1(self, r):
        return sum(p.d1(r) for p in self.parts)

    def d2(self, r):
        return sum(p.d2(r) for p in self.parts)

    def laplacian(self, r):
        return sum(p.laplacian(r) for p in self.parts)


class ScaledProfile(RadialProfile):
    def __init__(self, c, base):
        self.c = float(c)
        self.base = base

    def f(self, r):
        return self.c * self.base.f(r)

    def d1(self, r):
        return self.c * self.base.d1(r)

    def d2(self, r):
        return self.c * self.base.d2(r)

    def laplacian(self, r):
        return self.c * self.base.laplacian(r)


# ---------------------------------------------------------------------------
# analytic functions of a point, with gradient and Hessian
# ---------------------------------------------------------------------------

class Analytic:
    """Scalar function on R^3 with closed-form gradient and Hessian."""

    def value(self, p):
        raise NotImplementedError

    def grad(self, p):
        raise NotImplementedError

    def hess(self, p):
        raise NotImplementedError

    def __call__(self, p):
        return self.value(p)


class Constant(Analytic):
    def __init__(self, c):
        self.c = float(c)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1], self.c) if p.ndim > 1 else self.c

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape)

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape[:-1] + (3, 3))


class Linear(Analytic):
    """a . x"""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)

    def value(self, p):
        return np.asarray(p, dtype=float) @ self.a

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(self.a, p.shape).copy()

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape[:-1] + (3, 3))


class QuadraticForm(Analytic):
    """x . Q x + b . x + c with Q symmetric."""

    def __init__(self, Q, b=None, c=0.0):
        self.Q = np.asarray(Q, dtype=float)
        self.b = np.zeros(3) if b is None else np.asarray(b, dtype=float)
        self.c = float(c)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return np.einsum("...i,ij,...j->...", p, self.Q, p) + p @ self.b + self.c

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        return 2.0 * np.einsum("ij,...j->...i", self.Q, p) + self.b

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(2.0 * self.Q, p.shape[:-1] + (3, 3)).copy()


class RadialFn(Analytic):
    """f(|x|) for a RadialProfile; requires |x| > 0."""

    def __init__(self, profile):
        self.profile = profile

    def value(self, p):
        return self.profile.f(_radius(p))

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        r = _radius(p)[..., None]
        return self.profile.d1(r[..., 0])[..., None] * p / r

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        r = _radius(p)
        n = p / r[..., None]
        nn = n[..., :, None] * n[..., None, :]
        eye = np.broadcast_to(np.eye(3), nn.shape)
        d1 = self.profile.d1(r)[..., None, None]
        d2 = self.profile.d2(r)[..., None, None]
        return d2 * nn + d1 * (eye - nn) / r[..., None, None]


class Sum(Analytic):
    def __init__(self, *fs):
        self.fs = fs

    def value(self, p):
        return sum(f.value(p) for f in self.fs)

    def grad(self, p):
        return sum(f.grad(p) for f in self.fs)

    def hess(self, p):
        return sum(f.hess(p) for f in self.fs)


class Product(Analytic):
    def __init__(self, f, g):
        self.f = f
        self.g = g

    def value(self, p):
        return self.f.value(p) * self.g.value(p)

    def grad(self, p):
        fv = np.asarray(self.f.value(p))[..., None]
        gv = np.asarray(self.g.value(p))[..., None]
        return self.f.grad(p) * gv + fv * self.g.grad(p)

    def hess(self, p):
        fv = np.asarray(self.f.value(p))[..., None, None]
        gv = np.asarray(self.g.value(p))[..., None, None]
        fg, gg = self.f.grad(p), self.g.grad(p)
        cross = fg[..., :, None] * gg[..., None, :]
        return (
            self.f.hess(p) * gv
            + fv * self.g.hess(p)
            + cross
            + np.swapaxes(cross, -1, -2)
        )


class Reciprocal(Analytic):
    """1/f, valid where f != 0."""

    def __init__(self, f):
        self.f = f

    def value(self, p):
        return 1.0 / self.f.value(p)

    def grad(self, p):
        fv = np.asarray(self.f.value(p))[..., None]
        return -self.f.grad(p) / fv ** 2

    def hess(self, p):
        fv = np.asarray(self.f.value(p))[..., None, None]
        fg = self.f.grad(p)
        outer = fg[..., :, None] * fg[..., None, :]
        return -self.f.hess(p) / fv ** 2 + 2.0 * outer / fv ** 3


# ---------------------------------------------------------------------------
# finite-difference fallbacks for callables without closed-form jets
# ---------------------------------------------------------------------------

_E = np.eye(3)


def fd_grad(func, p, h):
    """Second-order central gradient of a scalar callable."""
    p = np.asarray(p, dtype=float)
    return np.array(
        [(func(p + h * _E[i]) - func(p - h * _E[i])) / (2.0 * h) for i in range(3)]
    )

def fd_hess(func, p, h):
    """Second-order central Hessian of a scalar callable."""
    p = np.asarray(p, dtype=float)
    out = np.empty((3, 3))
    f0 = func(p)
    for i in range(3):
        out[i, i] = (func(p + h * _E[i]) - 2.0 * f0 + func(p - h * _E[i])) / h ** 2
    for i in range(3):
        for j in range(i + 1, 3):
            v = (
                func(p + h * (_E[i] + _E[j]))
                - func(p + h * (_E[i] - _E[j]))
                - func(p - h * (_E[i] - _E[j]))
                + func(p - h * (_E[i] + _E[j]))
            ) / (4.0 * h ** 2)
            out[i, j] = out[j, i] = v
    return out


_W4_1 = np.array([-1.0, 8.0, -8.0, 1.0]) / 12.0   # offsets +2h,+h,-h,-2h
_OFF4 = np.array([2.0, 1.0, -1.0, -2.0])


def fd4_diff(func, p, direction, h):
    """Fourth-order central first derivative along a unit direction."""
    p = np.asarray(p, dtype=float)
    d = np.asarray(direction, dtype=float)
    return sum(
        w * func(p + o * h * d) for w, o in zip(_W4_1, _OFF4)
    ) / h


def fd4_grad(func, p, h):
    return np.array([fd4_diff(func, p, _E[i], h) for i in range(3)])


def fd4_hess(func, p, h):
    """Fourth-order central Hessian of a scalar callable."""
    p = np.asarray(p, dtype=float)
    out = np.empty((3, 3))
    f0 = func(p)
    for i in range(3):
        fp1 = func(p + h * _E[i])
        fm1 = func(p - h * _E[i])
        fp2 = func(p + 2 * h * _E[i])
        fm2 = func(p - 2 * h * _E[i])
        out[i, i] = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h ** 2)
    for i in range(3):
        for j in range(i + 1, 3):
            def gi(q):
                return fd4_diff(func, q, _E[i], h)
            v = fd4_diff(gi, p, _E[j], h)
            out[i, j] = out[j, i] = v
    return out


class FDWrap(Analytic):
    """Analytic interface for a bare callable, jets by central differences.

    step(r) sets the stencil width; defaults to 1e-4 * max(1, r), balancing
    truncation against round-off for fourth-order stencils.
    """

    def __init__(self, func, step=None, order=4):
        self.func = func
        self.step = step or (lambda r: 1e-4 * max(1.0, r))
        self.order = order

    def value(self, p):
        return self.func(np.asarray(p, dtype=float))

    def grad(self, p):
        h = self.step(_radius(p))
        if self.order >= 4:
            return fd4_grad(self.func, p, h)
        return fd_grad(self.func, p, h)

    def hess(self, p):
        h = self.step(_radius(p))
        if self.order >= 4:
            return fd4_hess(self.func, p, h)
        return fd_hess(self.func, p, h)
