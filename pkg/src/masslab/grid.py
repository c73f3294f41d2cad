"""Structured grids, finite-difference operators and quadrature.

Node-centered cubic lattice with spacing h; boundary nodes sit on the
truncation surface for box domains.  Cylinder domains and excised balls are
masked on the same lattice (staircase boundary, first-order accurate there,
documented).  Interior derivative stencils are second-order central with
one-sided second-order fallbacks within two layers of the lattice faces.

All reductions run in fixed lexicographic (C-order) node order so repeated
runs are bit-identical.
"""

from __future__ import annotations

import numpy as np

from . import metric as mt

EYE3 = np.eye(3)

# boundary classes
B_NONE = 0
B_BOX = 1
B_CAP = 2
B_TUBE = 3
B_EXCISED = 4          # interior node adjacent to the excised ball

CLASS_NAMES = {B_NONE: "none", B_BOX: "box", B_CAP: "cap",
               B_TUBE: "tube", B_EXCISED: "excised"}


class GridDomain:
    """Truncated computational domain on a cubic lattice.

    shape "box":      [-L, L]^3.
    shape "cylinder": |x . a| <= L and |x|^2 - (x . a)^2 <= L^2 for a unit
                      axis a; the lattice is the bounding box.
    r_exc > 0 excises the open ball |x| < r_exc (homogeneous Neumann there).
    """

    def __init__(self, shape, L, h, axis=(1.0, 0.0, 0.0), r_exc=0.0,
                 excision="neumann"):
        if shape not in ("box", "cylinder"):
            raise ValueError(f"unknown domain shape {shape!r}")
        if excision not in ("neumann", "dirichlet"):
            raise ValueError("excision must be 'neumann' or 'dirichlet'")
        L, h = float(L), float(h)
        if h <= 0 or L <= 0:
            raise ValueError("need h > 0 and L > 0")
        ratio = L / h
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("L/h must be an integer")
        if r_exc >= L:
            raise ValueError("excised radius must satisfy r_exc < L")
        self.shape = shape
        self.L = L
        self.h = h
        self.axis = np.asarray(axis, dtype=float)
        self.axis = self.axis / np.linalg.norm(self.axis)
        self.r_exc = float(r_exc)
        self.excision = excision

        if shape == "box":
            half = L
        else:
            ext = np.abs(self.axis) * L + np.sqrt(
                np.clip(1.0 - self.axis ** 2, 0.0, None)) * L
            half = h * np.ceil(np.max(ext) / h - 1e-9)
        self.half = float(half)
        self.n = int(round(2 * self.half / h)) + 1
        self.xs = -self.half + h * np.arange(self.n)
        self._build_masks()

    # -- lattice geometry ---------------------------------------------------

    def points(self):
        """All lattice nodes, shape (n, n, n, 3)."""
        X, Y, Z = np.meshgrid(self.xs, self.xs, self.xs, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def _build_masks(self):
        pts = self.points()
        r2 = np.sum(pts ** 2, axis=-1)
        if self.shape == "box":
            inside = np.ones((self.n,) * 3, dtype=bool)
            face = np.zeros_like(inside)
            for ax in range(3):
                sl = [slice(None)] * 3
                for end in (0, -1):
                    sl[ax] = end
                    face[tuple(sl)] = True
            trunc_class = np.where(face, B_BOX, B_NONE).astype(np.uint8)
        else:
            ax_c = pts @ self.axis
            perp2 = r2 - ax_c ** 2
            tol = 1e-9 * self.h
            inside = (np.abs(ax_c) <= self.L + tol) & (perp2 <= self.L ** 2 + tol)
            outside = ~inside
            near_out = _dilate(outside) & inside
            # lattice faces double as truncation when the cylinder touches them
            for axi in range(3):
                sl = [slice(None)] * 3
                for end in (0, -1):
                    sl[axi] = end
                    near_out[tuple(sl)] |= inside[tuple(sl)]
            d_cap = self.L - np.abs(ax_c)
            d_tube = self.L - np.sqrt(np.clip(perp2, 0.0, None))
            trunc_class = np.where(
                near_out, np.where(d_cap <= d_tube, B_CAP, B_TUBE), B_NONE
            ).astype(np.uint8)

        excised = np.zeros_like(inside)
        if self.r_exc > 0.0:
            excised = r2 < self.r_exc ** 2
            inside = inside & ~excised
            trunc_class = np.where(excised, B_NONE, trunc_class).astype(np.uint8)

        self.active = inside
        self.excised = excised
        self.dirichlet = (trunc_class != B_NONE) & inside
        bclass = trunc_class.copy()
        if self.r_exc > 0.0:
            near_exc = _dilate(excised) & inside & ~self.dirichlet
            bclass = np.where(near_exc, B_EXCISED, bclass).astype(np.uint8)
            if self.excision == "dirichlet":
                self.dirichlet = self.dirichlet | near_exc
        self.boundary_class = bclass
        self.interior = inside & ~self.dirichlet

    @property
    def n_active(self):
        return int(np.count_nonzero(self.active))

    def to_dict(self):
        return {"shape": self.shape, "L": self.L, "h": self.h,
                "axis": self.axis.tolist(), "r_exc": self.r_exc,
                "excision": self.excision}


def _dilate(mask):
    out = mask.copy()
    for ax in range(3):
        src = [slice(None)] * 3
        dst = [slice(None)] * 3
        src[ax], dst[ax] = slice(1, None), slice(None, -1)
        out[tuple(dst)] |= mask[tuple(src)]
        src[ax], dst[ax] = slice(None, -1), slice(1, None)
        out[tuple(dst)] |= mask[tuple(src)]
    return out


class ScalarField:
    """Node-indexed scalar data on a GridDomain."""

    def __init__(self, domain, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (domain.n,) * 3:
            raise ValueError("field shape does not match domain lattice")
        if not np.all(np.isfinite(values[domain.active])):
            raise ValueError("field has non-finite values on active nodes")
        self.domain = domain
        self.values = values

    @classmethod
    def sample(cls, domain, func):
        pts = domain.points()
        vals = np.asarray(func(pts.reshape(-1, 3)), dtype=float).reshape(pts.shape[:-1])
        vals = np.where(domain.active, vals, 0.0)
        return cls(domain, vals)


# ---------------------------------------------------------------------------
# derivative stencils (vectorized over the lattice)
# ---------------------------------------------------------------------------

def d1_array(vals, h, axis):
    """Second-order first derivative: central interior, one-sided at faces."""
    return np.gradient(vals, h, axis=axis, edge_order=2)


def d2_array(vals, h, axis):
    """Second-order second derivative along one axis (compact interior)."""
    out = np.empty_like(vals)
    v = np.moveaxis(vals, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h ** 2
    o[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h ** 2
    o[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h ** 2
    return out


def grad_arrays(domain, vals):
    """Coordinate gradient at every node, shape (n, n, n, 3)."""
    return np.stack([d1_array(vals, domain.h, ax) for ax in range(3)], axis=-1)


def hess_arrays(domain, vals):
    """Coordinate Hessian at every node, shape (n, n, n, 3, 3)."""
    h = domain.h
    out = np.empty(vals.shape + (3, 3))
    d1 = [d1_array(vals, h, ax) for ax in range(3)]
    for a in range(3):
        out[..., a, a] = d2_array(vals, h, a)
    for a in range(3):
        for b in range(a + 1, 3):
            cross = 0.5 * (d1_array(d1[a], h, b) + d1_array(d1[b], h, a))
            out[..., a, b] = cross
            out[..., b, a] = cross
    return out


def stencil_validity(domain, width=2):
    """Nodes whose surrounding (2*width+1)^3 block is fully active.

    Out-of-lattice neighbors count as fine (stencils fall back one-sided at
    lattice faces); interior mask edges (excised ball, cylinder staircase)
    invalidate the contaminated band.  Derivative arrays are only trusted on
    the returned mask; excluded active measure is reported by callers.
    """
    from scipy.ndimage import binary_erosion

    size = 2 * width + 1
    return binary_erosion(domain.active, structure=np.ones((size,) * 3, dtype=bool),
                          border_value=1)


# ---------------------------------------------------------------------------
# metric coefficient arrays
# ---------------------------------------------------------------------------

def gmat_arrays(spec, pts):
    return mt.metric_value(spec, pts)


def ginv_arrays(spec, pts):
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1] + (3, 3)
    if spec.kind == "flat":
        return np.broadcast_to(EYE3, shape).copy()
    if spec.kind == "constant":
        return np.broadcast_to(np.linalg.inv(spec.g0), shape).copy()
    if spec.kind == "conformal":
        w = np.asarray(spec.w.value(pts))
        return w[..., None, None] ** -4 * np.broadcast_to(EYE3, shape)
    if spec.kind == "radial":
        rho = np.sqrt(np.sum(pts ** 2, axis=-1))
        n = pts / rho[..., None]
        nn = np.einsum("...a,...b->...ab", n, n)
        T = np.asarray(spec.t_profile.f(rho))[..., None, None]
        U = np.asarray(spec.u_profile.f(rho))[..., None, None]
        return (1.0 / T) * (np.broadcast_to(EYE3, shape) - nn) + nn / (T + U)
    raise mt.MetricError(f"unknown metric kind {spec.kind!r}")


def sqrt_det_arrays(spec, pts):
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    if spec.kind == "flat":
        return np.ones(shape)
    if spec.kind == "constant":
        return np.full(shape, np.sqrt(np.linalg.det(spec.g0)))
    if spec.kind == "conformal":
        return np.asarray(spec.w.value(pts)) ** 6
    if spec.kind == "radial":
        rho = np.sqrt(np.sum(pts ** 2, axis=-1))
        T = np.asarray(spec.t_profile.f(rho))
        U = np.asarray(spec.u_profile.f(rho))
        return np.sqrt(T * T * (T + U))
    raise mt.MetricError(f"unknown metric kind {spec.kind!r}")


def christoffel_contraction_arrays(spec, pts, grad):
    """(Gamma^l_ij d_l f) at many points, shape (..., 3, 3).

    Conformal closed form: 2 (L_i f_j + L_j f_i - delta_ij L . f) with
    L = grad(log w); flat metrics contribute zero.
    """
    pts = np.asarray(pts, dtype=float)
    if spec.kind in ("flat", "constant"):
        return np.zeros(pts.shape[:-1] + (3, 3))
    if spec.kind == "conformal":
        w = np.asarray(spec.w.value(pts))
        Lg = spec.w.grad(pts) / w[..., None]
        dot = np.einsum("...i,...i->...", Lg, grad)
        cross = np.einsum("...i,...j->...ij", Lg, grad)
        return 2.0 * (cross + np.swapaxes(cross, -1, -2)
                      - dot[..., None, None] * EYE3)
    gam = mt.christoffel(mt.metric_jet(spec, pts))
    return np.einsum("...lij,...l->...ij", gam, grad)


def covariant_hessian_arrays(spec, domain, vals):
    """nabla^2 f = d^2 f - Gamma^l_ij d_l f at every node."""
    pts = domain.points()
    grad = grad_arrays(domain, vals)
    hess = hess_arrays(domain, vals)
    return hess - christoffel_contraction_arrays(spec, pts, grad)


def gradnorm_arrays(spec, pts, grad):
    """|grad f|_g = sqrt(g^{ij} d_i f d_j f)."""
    ginv = ginv_arrays(spec, pts)
    sq = np.einsum("...ij,...i,...j->...", ginv, grad, grad)
    return np.sqrt(np.maximum(sq, 0.0))


# ---------------------------------------------------------------------------
# pointwise node operations (spec'd API; one-sided within two layers)
# ---------------------------------------------------------------------------

def _node_d1(vals, h, idx, axis, n):
    i = idx[axis]
    sl = list(idx)

    def at(j):
        sl[axis] = j
        return vals[tuple(sl)]

    if 0 < i < n - 1:
        return (at(i + 1) - at(i - 1)) / (2 * h)
    if i == 0:
        return (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h)
    return (3 * at(n - 1) - 4 * at(n - 2) + at(n - 3)) / (2 * h)


def _node_d2(vals, h, idx, axis, n):
    i = idx[axis]
    sl = list(idx)

    def at(j):
        sl[axis] = j
        return vals[tuple(sl)]

    if 0 < i < n - 1:
        return (at(i + 1) - 2 * at(i) + at(i - 1)) / h ** 2
    if i == 0:
        return (2 * at(0) - 5 * at(1) + 4 * at(2) - at(3)) / h ** 2
    return (2 * at(n - 1) - 5 * at(n - 2) + 4 * at(n - 3) - at(n - 4)) / h ** 2


def node_gradient(spec, field, idx):
    """(coordinate gradient, metric gradient, |grad f|_g) at a node."""
    dom = field.domain
    cg = np.array([_node_d1(field.values, dom.h, tuple(idx), ax, dom.n)
                   for ax in range(3)])
    p = np.array([dom.xs[idx[0]], dom.xs[idx[1]], dom.xs[idx[2]]])
    ginv = ginv_arrays(spec, p)
    mg = ginv @ cg
    norm = float(np.sqrt(max(cg @ mg, 0.0)))
    return cg, mg, norm


def node_covariant_hessian(spec, field, idx):
    """Symmetric covariant Hessian at a node."""
    dom = field.domain
    vals, h, n = field.values, dom.h, dom.n
    idx = tuple(idx)
    hess = np.empty((3, 3))
    for a in range(3):
        hess[a, a] = _node_d2(vals, h, idx, a, n)
    for a in range(3):
        for b in range(a + 1, 3):
            da = np.empty(3)
            # cross derivative via nested one-dimensional stencils
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
                v += wgt * _node_d1(vals, h, tuple(jdx), a, n)
            hess[a, b] = hess[b, a] = v
    cg = np.array([_node_d1(vals, h, idx, ax, n) for ax in range(3)])
    p = np.array([dom.xs[idx[0]], dom.xs[idx[1]], dom.xs[idx[2]]])
    corr = christoffel_contraction_arrays(spec, p, cg)
    return hess - corr


# ---------------------------------------------------------------------------
# volume quadrature
# ---------------------------------------------------------------------------

def trapezoid_weights(domain):
    """Product trapezoid weights, zeroed off the active set."""
    w1 = np.ones(domain.n)
    w1[0] = w1[-1] = 0.5
    w = w1[:, None, None] * w1[None, :, None] * w1[None, None, :]
    return np.where(domain.active, w, 0.0)


def volume_integral(spec, domain, node_values, mask=None):
    """Trapezoid-weighted sum of node_values * sqrt(det g) * h^3.

    node_values may be an (n,n,n) array or a callable on (...,3) points.
    The reduction is a plain C-order sum (deterministic).
    """
    pts = domain.points()
    if callable(node_values):
        vals = np.asarray(node_values(pts.reshape(-1, 3))).reshape((domain.n,) * 3)
    else:
        vals = np.asarray(node_values, dtype=float)
    w = trapezoid_weights(domain)
    if mask is not None:
        w = np.where(mask, w, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(w > 0.0, sqrt_det_arrays(spec, pts), 0.0)
        contrib = np.where(w > 0.0, vals * dens * w, 0.0)
    return float(np.sum(contrib) * domain.h ** 3)


def masked_measure(spec, domain, mask):
    """Metric volume of the masked-in nodes (same weights as volume_integral)."""
    return volume_integral(spec, domain, np.ones((domain.n,) * 3), mask=mask)


# ---------------------------------------------------------------------------
# surface quadrature
# ---------------------------------------------------------------------------

class SurfacePatch:
    """Quadrature nodes with Euclidean weights and unit outward normals."""

    def __init__(self, points, weights, normals, tag):
        self.points = points
        self.weights = weights
        self.normals = normals
        self.tag = tag


def _frame(axis):
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = int(np.argmin(np.abs(a)))
    e1 = np.zeros(3)
    e1[k] = 1.0
    e1 = e1 - (e1 @ a) * a
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return a, e1, e2


def sphere_patches(r, n_theta=64, n_phi=128):
    """Gauss-Legendre in cos(theta) times periodic trapezoid in phi."""
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    wphi = 2.0 * np.pi / n_phi
    mu_g, phi_g = np.meshgrid(mu, phi, indexing="ij")
    st = np.sqrt(1.0 - mu_g ** 2)
    n = np.stack([mu_g, st * np.cos(phi_g), st * np.sin(phi_g)], axis=-1).reshape(-1, 3)
    w = (np.broadcast_to(wmu[:, None], mu_g.shape) * wphi * r * r).reshape(-1)
    return [SurfacePatch(r * n, w, n, "sphere")]


def cylinder_patches(L, axis=(1.0, 0.0, 0.0), n_ang=128, n_len=64, n_rad=64):
    """Caps (polar Gauss-Legendre x angle) and tube (angle x length GL)."""
    a, e1, e2 = _frame(axis)
    ang = 2.0 * np.pi * np.arange(n_ang) / n_ang
    wang = 2.0 * np.pi / n_ang
    ca, sa = np.cos(ang), np.sin(ang)

    xg, wg = np.polynomial.legendre.leggauss(n_rad)
    srad = 0.5 * L * (xg + 1.0)
    wrad = 0.5 * L * wg
    patches = []
    for sgn, tag in ((1.0, "cap+"), (-1.0, "cap-")):
        pts = (sgn * L) * a + srad[:, None, None] * (
            ca[None, :, None] * e1 + sa[None, :, None] * e2)
        w = (wrad[:, None] * srad[:, None] * wang * np.ones((1, n_ang))).reshape(-1)
        nrm = np.broadcast_to(sgn * a, pts.reshape(-1, 3).shape).copy()
        patches.append(SurfacePatch(pts.reshape(-1, 3), w, nrm, tag))

    xg, wg = np.polynomial.legendre.leggauss(n_len)
    t = L * xg
    wt = L * wg
    pts = t[:, None, None] * a + L * (ca[None, :, None] * e1 + sa[None, :, None] * e2)
    nrm = (ca[None, :, None] * e1 + sa[None, :, None] * e2) * np.ones(
        (n_len, 1, 1))
    w = (wt[:, None] * wang * L * np.ones((1, n_ang))).reshape(-1)
    patches.append(SurfacePatch(pts.reshape(-1, 3), w, nrm.reshape(-1, 3), "tube"))
    return patches


def induced_area_factor(spec, points, normals):
    """dA_g / dA_euclid = sqrt(det g * g^{-1}(n, n)) for unit Euclidean n."""
    ginv = ginv_arrays(spec, points)
    dens = sqrt_det_arrays(spec, points) ** 2
    nn = np.einsum("...ij,...i,...j->...", ginv, normals, normals)
    return np.sqrt(dens * nn)


def metric_normal(spec, points, normals):
    """g-unit outward normal field from the Euclidean unit normal covector."""
    ginv = ginv_arrays(spec, points)
    up = np.einsum("...ij,...j->...i", ginv, normals)
    nn = np.einsum("...i,...i->...", normals, up)
    return up / np.sqrt(nn)[..., None]


def _integrate_patches(spec, integrand, patches, element):
    total = 0.0
    for patch in patches:
        vals = np.asarray(integrand(patch.points, patch.normals), dtype=float)
        w = patch.weights
        if element == "induced":
            w = w * induced_area_factor(spec, patch.points, patch.normals)
        total += float(np.sum(vals * w))
    return total


def surface_integral(spec, integrand, surface, element="euclidean",
                     rtol=1e-6, max_doublings=3):
    """Integrate integrand(points, normals) over a sphere or cylinder.

    surface: ("sphere", r) or ("cylinder", L, axis).  Resolution starts at
    the defaults and doubles until the value changes by < rtol relatively.
    """
    if element not in ("euclidean", "induced"):
        raise ValueError("element must be 'euclidean' or 'induced'")
    kind = surface[0]

    def make(scale):
        if kind == "sphere":
            return sphere_patches(surface[1], 64 * scale, 128 * scale)
        if kind == "cylinder":
            axis = surface[2] if len(surface) > 2 else (1.0, 0.0, 0.0)
            return cylinder_patches(surface[1], axis, 128 * scale,
                                    64 * scale, 64 * scale)
        raise ValueError(f"unknown surface kind {kind!r}")

    prev = _integrate_patches(spec, integrand, make(1), element)
    scale = 2
    for _ in range(max_doublings):
        cur = _integrate_patches(spec, integrand, make(scale), element)
        if abs(cur - prev) <= rtol * max(abs(cur), 1.0):
            return cur
        prev = cur
        scale *= 2
    return prev
