"""Field evaluators: uniform access to u, du, d^2u at arbitrary points.

Three providers share one protocol (value/grad/hess, batched over (..., 3)):

  AnalyticEval  closed-form jets of an Analytic function
  FDEval        exact values, derivatives by central differences of width h
                (isolates pure stencil truncation error on closed-form data)
  GridEval      node stencils blended trilinearly between lattice nodes

Metric-aware norms |grad u|_g are composed here as plain callables so they
can be finite-differenced like any other scalar field.
"""

from __future__ import annotations

import numpy as np

from . import grid as gr
from .analytic import Linear, Product, Reciprocal

_E = np.eye(3)


class AnalyticEval:
    def __init__(self, fn):
        self.fn = fn

    def value(self, p):
        return self.fn.value(p)

    def grad(self, p):
        return self.fn.grad(p)

    def hess(self, p):
        return self.fn.hess(p)


class FDEval:
    """Closed-form values, second-order central derivatives with step h."""

    def __init__(self, fn, h):
        self.fn = fn
        self.h = float(h)

    def value(self, p):
        return self.fn.value(p)

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        h = self.h
        cols = [
            (self.fn.value(p + h * _E[i]) - self.fn.value(p - h * _E[i])) / (2 * h)
            for i in range(3)
        ]
        return np.stack(cols, axis=-1)

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        h = self.h
        out = np.empty(p.shape[:-1] + (3, 3))
        f0 = np.asarray(self.fn.value(p))
        for i in range(3):
            out[..., i, i] = (
                self.fn.value(p + h * _E[i]) - 2.0 * f0 + self.fn.value(p - h * _E[i])
            ) / h ** 2
        for i in range(3):
            for j in range(i + 1, 3):
                v = (
                    self.fn.value(p + h * (_E[i] + _E[j]))
                    - self.fn.value(p + h * (_E[i] - _E[j]))
                    - self.fn.value(p - h * (_E[i] - _E[j]))
                    + self.fn.value(p - h * (_E[i] + _E[j]))
                ) / (4 * h ** 2)
                out[..., i, j] = v
                out[..., j, i] = v
        return out


def trilinear(field, pts):
    """Vectorized trilinear interpolation of nodal values."""
    dom = field.domain
    pts = np.asarray(pts, dtype=float)
    flat = pts.reshape(-1, 3)
    u = (flat + dom.half) / dom.h
    i0 = np.clip(np.floor(u).astype(int), 0, dom.n - 2)
    f = u - i0
    vals = np.zeros(len(flat))
    V = field.values
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                vals += wx * wy * wz * V[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return vals.reshape(pts.shape[:-1])


class GridEval:
    """Derivatives of a solved field at off-node points.

    Node-stencil gradients/Hessians (one-sided within two layers of the
    lattice faces) are evaluated at the eight surrounding nodes and blended
    trilinearly, keeping everything second order.
    """

    def __init__(self, field, spec=None):
        self.field = field
        self.spec = spec  # only needed by covariant helpers downstream

    def value(self, p):
        return trilinear(self.field, p)

    def _blend(self, p, node_fn, shape):
        dom = self.field.domain
        pts = np.asarray(p, dtype=float)
        flat = pts.reshape(-1, 3)
        out = np.zeros((len(flat),) + shape)
        for k, q in enumerate(flat):
            u = (q + dom.half) / dom.h
            i0 = np.clip(np.floor(u).astype(int), 0, dom.n - 2)
            f = u - i0
            acc = np.zeros(shape)
            for dx in (0, 1):
                wx = f[0] if dx else 1.0 - f[0]
                for dy in (0, 1):
                    wy = f[1] if dy else 1.0 - f[1]
                    for dz in (0, 1):
                        wz = f[2] if dz else 1.0 - f[2]
                        wgt = wx * wy * wz
                        if wgt == 0.0:
                            continue
                        acc += wgt * node_fn((i0[0] + dx, i0[1] + dy, i0[2] + dz))
            out[k] = acc
        return out.reshape(pts.shape[:-1] + shape)

    def grad(self, p):
        dom = self.field.domain
        vals = self.field.values

        def node_fn(idx):
            return np.array([gr._node_d1(vals, dom.h, idx, ax, dom.n)
                             for ax in range(3)])

        return self._blend(p, node_fn, (3,))

    def hess(self, p):
        dom = self.field.domain
        fld = self.field

        def node_fn(idx):
            # coordinate Hessian only; covariant correction happens downstream
            vals, h, n = fld.values, dom.h, dom.n
            out = np.empty((3, 3))
            for a in range(3):
                out[a, a] = gr._node_d2(vals, h, idx, a, n)
            for a in range(3):
                for b in range(a + 1, 3):
                    i = idx[b]
                    if 0 < i < n - 1:
                        js, ws = (i + 1, i - 1), (0.5 / h, -0.5 / h)
                    elif i == 0:
                        js, ws = (0, 1, 2), (-1.5 / h, 2.0 / h, -0.5 / h)
                    else:
                        js, ws = (n - 1, n - 2, n - 3), (1.5 / h, -2.0 / h, 0.5 / h)
                    v = 0.0
                    for j, wgt in zip(js, ws):
                        jdx = list(idx)
                        jdx[b] = j
                        v += wgt * gr._node_d1(vals, h, tuple(jdx), a, n)
                    out[a, b] = out[b, a] = v
            return out

        return self._blend(p, node_fn, (3, 3))


# ---------------------------------------------------------------------------
# metric-aware compositions
# ---------------------------------------------------------------------------

def metric_gradnorm_fn(spec, ev):
    """x -> |grad u|_g(x) as a plain scalar callable (batched)."""

    def fn(p):
        du = ev.grad(p)
        ginv = gr.ginv_arrays(spec, p)
        sq = np.einsum("...ij,...i,...j->...", ginv, du, du)
        return np.sqrt(np.maximum(sq, 0.0))

    return fn


def normfield_grad(spec, ev, p, h):
    """Coordinate gradient of |grad u|_g by differencing the norm field.

    This is deliberately independent of the Hessian route (nabla|grad u| =
    nabla^2 u(nu, .)); comparing the two is what gives the curvature and
    Bochner identity checks their nonzero O(h^2) residuals.
    """
    fn = metric_gradnorm_fn(spec, ev)
    p = np.asarray(p, dtype=float)
    cols = [(fn(p + h * _E[i]) - fn(p - h * _E[i])) / (2 * h) for i in range(3)]
    return np.stack(cols, axis=-1)


def covariant_hessian_at(spec, ev, p):
    """nabla^2 u = d^2 u - Gamma^l du_l at arbitrary points."""
    p = np.asarray(p, dtype=float)
    du = ev.grad(p)
    corr = gr.christoffel_contraction_arrays(spec, p, du)
    return ev.hess(p) - corr


def linear_harmonic(m, direction=(1.0, 0.0, 0.0)):
    """u = (a . x) / (1 + m/2r): the exact asymptotically linear harmonic
    function of the Schwarzschild family (reduces to a . x when m = 0)."""
    from . import metric as mt

    a = np.asarray(direction, dtype=float)
    if m == 0.0:
        return Linear(a)
    spec = mt.schwarzschild(m)
    return Product(Linear(a), Reciprocal(spec.w))
