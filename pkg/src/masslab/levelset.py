"""Level sets of harmonic functions: extraction, topology, curvature.

Meshes come from marching cubes on the lattice, then exact per-triangle
clipping against the region surfaces (coordinate ball, cylinder caps/tube),
which leaves boundary polylines lying on those surfaces.  Curvature data is
extrinsic: the second fundamental form is the tangential projection of the
covariant Hessian over |grad u|, and the Gauss curvature comes from the
doubly traced Gauss equation

    R_g - 2 Ric(nu, nu) = R_Sigma + |II|^2 - H^2,   R_Sigma = 2K,

with the Gauss-Bonnet defect as the independent cross-check.  Boundary
circles on coordinate spheres and tubes are parameterized by meridian root
solves, so their geodesic curvature integrals carry only quadrature error.
"""

from __future__ import annotations

import csv

import numpy as np
from scipy.optimize import brentq
from skimage import measure

from . import grid as gr
from . import metric as mt

EYE3 = np.eye(3)


class LevelRangeError(ValueError):
    """Requested level lies outside the sampled range."""


class TransversalityError(RuntimeError):
    """Level set fails to intersect the reference surface transversally."""


# ---------------------------------------------------------------------------
# mesh container and topology
# ---------------------------------------------------------------------------

class LevelSetMesh:
    def __init__(self, level, vertices, triangles, edge_tags=None):
        self.level = float(level)
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.edge_tags = edge_tags or {}
        self._topology = None

    # topology -------------------------------------------------------------

    def _edges(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return e

    def _compute_topology(self):
        V = len(np.unique(self.triangles))
        e = self._edges()
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        E = len(uniq)
        F = len(self.triangles)
        boundary_edges = uniq[counts == 1]
        if np.any(counts > 2):
            raise ValueError("non-manifold mesh: an edge borders > 2 triangles")

        # connected components over shared edges
        parent = {}

        def find(a):
            while parent.get(a, a) != a:
                parent[a] = parent.get(parent[a], parent[a])
                a = parent[a]
            return a

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

        edge_to_tri = {}
        for ti, tri in enumerate(self.triangles):
            parent.setdefault(ti, ti)
            for a, b in ((0, 1), (1, 2), (2, 0)):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                if key in edge_to_tri:
                    union(ti, edge_to_tri[key])
                else:
                    edge_to_tri[key] = ti
        comps = len({find(t) for t in range(F)}) if F else 0

        bset = {(int(a), int(b)) for a, b in boundary_edges}
        loops = _directed_loops(self.triangles, bset)
        self._topology = {
            "V": V, "E": E, "F": F,
            "euler_characteristic": V - E + F,
            "components": comps,
            "boundary_edges": boundary_edges,
            "loops": loops,
        }

    @property
    def topology(self):
        if self._topology is None:
            self._compute_topology()
        return self._topology

    @property
    def euler_characteristic(self):
        return self.topology["euler_characteristic"]

    @property
    def component_count(self):
        return self.topology["components"]

    def boundary_loops(self):
        """Ordered vertex-index loops with their dominant surface tag."""
        out = []
        for loop in self.topology["loops"]:
            tags = []
            for a, b in zip(loop, loop[1:] + loop[:1]):
                tags.append(self.edge_tags.get((min(a, b), max(a, b)), "box"))
            tag = max(set(tags), key=tags.count)
            out.append({"vertices": loop, "tag": tag})
        return out


def _directed_loops(triangles, boundary_edge_set):
    """Boundary loops walked in the orientation induced by triangle winding
    (surface on the left of the traversal w.r.t. the mesh normal)."""
    nxt = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            a, b = int(a), int(b)
            if (min(a, b), max(a, b)) in boundary_edge_set:
                if a in nxt:
                    raise ValueError("pinched boundary: vertex on two loops")
                nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def ball_clip(radius):
    return (lambda p: np.linalg.norm(p, axis=-1) - radius, "sphere")


def cylinder_clips(L, axis=(1.0, 0.0, 0.0)):
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)

    def cap(p):
        return np.abs(p @ a) - L

    def tube(p):
        p = np.asarray(p)
        return np.sqrt(np.maximum(np.sum(p * p, axis=-1) - (p @ a) ** 2, 0.0)) - L

    return [(cap, "cap"), (tube, "tube")]


def fill_inactive(field):
    """Extend nodal values across inactive nodes by layered neighbor means.

    Keeps marching cubes free of spurious crossings along staircase mask
    boundaries; the extended region is removed again by the exact domain
    clips, so only continuity matters there.
    """
    dom = field.domain
    vals = field.values.copy()
    filled = dom.active.copy()
    while not filled.all():
        num = np.zeros_like(vals)
        cnt = np.zeros_like(vals)
        for ax in range(3):
            for sgn in (1, -1):
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if sgn > 0:
                    src[ax], dst[ax] = slice(1, None), slice(None, -1)
                else:
                    src[ax], dst[ax] = slice(None, -1), slice(1, None)
                num[tuple(dst)] += np.where(filled[tuple(src)],
                                            vals[tuple(src)], 0.0)
                cnt[tuple(dst)] += filled[tuple(src)]
        frontier = ~filled & (cnt > 0)
        if not frontier.any():
            raise RuntimeError("inactive fill stalled (disconnected lattice)")
        vals[frontier] = num[frontier] / cnt[frontier]
        filled |= frontier
    return vals


def domain_clips(domain):
    clips = []
    if domain.shape == "cylinder":
        clips.extend(cylinder_clips(domain.L, domain.axis))
    if domain.r_exc > 0.0:
        r_exc = domain.r_exc
        clips.append((lambda p: r_exc - np.linalg.norm(p, axis=-1), "excised"))
    return clips


def extract(values, domain, level, clips=(), include_domain_clips=True):
    """Marching-cubes level set of nodal values, clipped to region surfaces.

    ScalarFields on masked domains are extended across inactive nodes first
    and the mesh is cut back by the exact domain surfaces (excised sphere,
    cylinder caps and tube), so boundary polylines land on those surfaces.
    Levels that collide with a nodal value are nudged by 1e-9 h to break
    marching-cubes ties deterministically.
    """
    if hasattr(values, "values"):
        vals = fill_inactive(values) if not domain.active.all() else values.values
    else:
        vals = np.asarray(values)
    active = domain.active
    vmin = vals[active].min()
    vmax = vals[active].max()
    if not (vmin < level < vmax):
        raise LevelRangeError(f"level {level} outside sampled range "
                              f"[{vmin:.3g}, {vmax:.3g}]")
    t = float(level)
    if np.min(np.abs(vals[active] - t)) < 1e-12 * max(1.0, abs(t)):
        t = t + 1e-9 * domain.h

    clips = (domain_clips(domain) if include_domain_clips else []) + list(clips)
    verts, faces, _, _ = measure.marching_cubes(
        vals, level=t, spacing=(domain.h,) * 3)
    verts = verts - domain.half
    edge_tags = {}
    for sfunc, tag in clips:
        verts, faces, cut_edges = _clip_mesh(verts, faces, sfunc(verts))
        edge_tags = {_remap_edge(k, cut_edges["remap"]): v
                     for k, v in edge_tags.items()
                     if _remap_edge(k, cut_edges["remap"]) is not None}
        for e in cut_edges["new_edges"]:
            edge_tags[e] = tag
    mesh = LevelSetMesh(level, verts, faces, edge_tags)
    return mesh


def _remap_edge(edge, remap):
    a, b = remap.get(edge[0], -1), remap.get(edge[1], -1)
    if a < 0 or b < 0:
        return None
    return (min(a, b), max(a, b))


def _clip_mesh(verts, faces, svals, tol=0.0):
    """Keep the s <= 0 side; linear interpolation along crossing edges.

    Returns (new_verts, new_faces, info) where info carries the vertex
    remap for surviving old vertices and the freshly created boundary edges
    lying on {s = 0}.
    """
    svals = np.asarray(svals, dtype=float)
    scale = max(float(np.max(np.abs(svals))) if len(svals) else 1.0, 1.0)
    eps = 1e-12 * scale
    svals = np.where(np.abs(svals) < eps, -eps, svals)  # on-surface ties keep
    keep = svals <= tol
    new_verts = []
    remap = {}
    for i in np.flatnonzero(keep):
        remap[int(i)] = len(new_verts)
        new_verts.append(verts[i])

    cut_cache = {}

    def cut(i, j):
        key = (min(i, j), max(i, j))
        if key in cut_cache:
            return cut_cache[key]
        si, sj = svals[i], svals[j]
        lam = si / (si - sj)
        p = verts[i] + lam * (verts[j] - verts[i])
        idx = len(new_verts)
        new_verts.append(p)
        cut_cache[key] = idx
        return idx

    new_faces = []
    new_edges = set()
    for tri in faces:
        order = [int(v) for v in tri]
        kk = [bool(keep[v]) for v in order]
        nk = sum(kk)
        if nk == 0:
            continue
        if nk == 3:
            new_faces.append([remap[v] for v in order])
            continue
        if nk == 1:
            while not kk[0]:
                order = order[1:] + order[:1]
                kk = kk[1:] + kk[:1]
            a, b, c = order
            pab = cut(a, b)
            pca = cut(c, a)
            new_faces.append([remap[a], pab, pca])
            new_edges.add((min(pab, pca), max(pab, pca)))
        else:
            while kk[2]:
                order = order[1:] + order[:1]
                kk = kk[1:] + kk[:1]
            a, b, c = order
            pbc = cut(b, c)
            pca = cut(c, a)
            new_faces.append([remap[a], remap[b], pbc])
            new_faces.append([remap[a], pbc, pca])
            new_edges.add((min(pbc, pca), max(pbc, pca)))
    info = {"remap": remap, "new_edges": new_edges}
    return np.asarray(new_verts), np.asarray(new_faces, dtype=np.int64), info


# ---------------------------------------------------------------------------
# curvature sampling
# ---------------------------------------------------------------------------

class CurvatureSample:
    """Extrinsic curvature data of a level set at one point."""

    def __init__(self, point, normal, second_fundamental, mean, gauss, skipped=False):
        self.point = point
        self.normal = normal
        self.II = second_fundamental
        self.H = mean
        self.K = gauss
        self.skipped = skipped


def tangent_frames(spec, pts, du):
    """Deterministic g-orthonormal tangent frames (e1, e2) with e1 x e2 ~ nu.

    Frame seeds are the two coordinate directions least aligned with the
    gradient covector, ordered by coordinate index.
    """
    pts = np.asarray(pts, dtype=float)
    ginv = gr.ginv_arrays(spec, pts)
    g = gr.gmat_arrays(spec, pts)
    nu = np.einsum("...ij,...j->...i", ginv, du)
    norm = np.sqrt(np.einsum("...i,...ij,...j->...", nu, g, nu))
    nu = nu / norm[..., None]

    # seed picks: two smallest |du_i| components, ascending index
    order = np.argsort(np.abs(du), axis=-1, kind="stable")
    pick = np.sort(order[..., :2], axis=-1)

    def gdot(x, y):
        return np.einsum("...i,...ij,...j->...", x, g, y)

    e_a = np.zeros_like(du)
    e_b = np.zeros_like(du)
    np.put_along_axis(e_a, pick[..., 0:1], 1.0, axis=-1)
    np.put_along_axis(e_b, pick[..., 1:2], 1.0, axis=-1)

    v1 = e_a - gdot(e_a, nu)[..., None] * nu
    v1 = v1 / np.sqrt(gdot(v1, v1))[..., None]
    v2 = e_b - gdot(e_b, nu)[..., None] * nu - gdot(e_b, v1)[..., None] * v1
    v2 = v2 / np.sqrt(gdot(v2, v2))[..., None]
    det = np.einsum("...i,...i->...", np.cross(v1, v2), nu)
    v2 = np.where(det[..., None] < 0, -v2, v2)
    return nu, v1, v2


def curvature_data(spec, ev, pts, gradient_floor=None):
    """Batched level-set curvature quantities at points.

    Returns dict with nu, II (2x2), H, K, gradnorm, hess_cov, skipped mask.
    """
    from .fields import covariant_hessian_at

    pts = np.asarray(pts, dtype=float)
    du = ev.grad(pts)
    hess = covariant_hessian_at(spec, ev, pts)
    gradnorm = gr.gradnorm_arrays(spec, pts, du)
    floor = gradient_floor
    if floor is None:
        floor = 1e-3 * max(float(np.median(gradnorm)), 1e-300)
    skipped = gradnorm < floor

    safe = np.maximum(gradnorm, 1e-300)
    nu, v1, v2 = tangent_frames(spec, pts, du)
    II = np.empty(pts.shape[:-1] + (2, 2))
    frames = (v1, v2)
    for a in range(2):
        for b in range(2):
            II[..., a, b] = np.einsum("...i,...ij,...j->...",
                                      frames[a], hess, frames[b]) / safe
    H = II[..., 0, 0] + II[..., 1, 1]
    II2 = np.einsum("...ab,...ab->...", II, II)
    R = np.asarray(mt.scalar_curvature(spec, pts))
    ric = mt.ricci(spec, pts)
    ric_nn = np.einsum("...ij,...i,...j->...", ric, nu, nu)
    K = 0.5 * (R - 2.0 * ric_nn - II2 + H * H)
    return {"nu": nu, "II": II, "H": H, "K": K, "gradnorm": gradnorm,
            "hess_cov": hess, "skipped": skipped, "floor": floor,
            "frame": frames}


def curvature_at(spec, ev, p, gradient_floor=None):
    data = curvature_data(spec, ev, np.asarray(p, dtype=float)[None, :],
                          gradient_floor=gradient_floor)
    if data["skipped"][0] and gradient_floor is not None:
        return CurvatureSample(p, data["nu"][0], data["II"][0],
                               float(data["H"][0]), float(data["K"][0]),
                               skipped=True)
    return CurvatureSample(p, data["nu"][0], data["II"][0],
                           float(data["H"][0]), float(data["K"][0]))


# ---------------------------------------------------------------------------
# mesh integrals
# ---------------------------------------------------------------------------

def triangle_areas(spec, mesh):
    """Induced-metric triangle areas via the Gram determinant at centroids."""
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    cent = (p0 + p1 + p2) / 3.0
    g = gr.gmat_arrays(spec, cent)
    e1 = p1 - p0
    e2 = p2 - p0
    g11 = np.einsum("...i,...ij,...j->...", e1, g, e1)
    g22 = np.einsum("...i,...ij,...j->...", e2, g, e2)
    g12 = np.einsum("...i,...ij,...j->...", e1, g, e2)
    return 0.5 * np.sqrt(np.maximum(g11 * g22 - g12 * g12, 0.0)), cent


def mesh_area(spec, mesh):
    areas, _ = triangle_areas(spec, mesh)
    return float(np.sum(areas))


def integrate_gauss_curvature(spec, ev, mesh, gradient_floor=None):
    """Integral of K over the mesh; near-critical triangles are skipped and
    their (metric) area reported."""
    areas, cent = triangle_areas(spec, mesh)
    if len(areas) == 0:
        return {"integral": 0.0, "area": 0.0, "skipped_area": 0.0}
    data = curvature_data(spec, ev, cent, gradient_floor=gradient_floor)
    ok = ~data["skipped"]
    return {
        "integral": float(np.sum(np.where(ok, data["K"], 0.0) * areas)),
        "area": float(np.sum(areas)),
        "skipped_area": float(np.sum(areas[~ok])),
    }


# ---------------------------------------------------------------------------
# boundary circles by meridian root solves
# ---------------------------------------------------------------------------

def boundary_circle_on_sphere(ev, r, t, n=512, axis=(1.0, 0.0, 0.0)):
    """Points of {u = t} on the coordinate sphere S_r, one per meridian.

    Solves u(X, rho cos v, rho sin v) = t for X along each meridian of the
    axis frame (rho = sqrt(r^2 - X^2)); raises TransversalityError when a
    meridian fails to bracket the level.
    """
    a, e1, e2 = gr._frame(axis)
    angles = 2.0 * np.pi * np.arange(n) / n
    pts = np.empty((n, 3))
    lim = r * (1.0 - 1e-12)
    for k, v in enumerate(angles):
        perp = np.cos(v) * e1 + np.sin(v) * e2

        def f(X):
            rho = np.sqrt(max(r * r - X * X, 0.0))
            return float(ev.value(X * a + rho * perp)) - t

        fa, fb = f(-lim), f(lim)
        if fa * fb > 0:
            raise TransversalityError(
                f"level {t} does not cross sphere r={r} on meridian {v:.3f}")
        X = brentq(f, -lim, lim, xtol=1e-13, rtol=1e-15)
        rho = np.sqrt(max(r * r - X * X, 0.0))
        pts[k] = X * a + rho * perp
    return pts


def boundary_circle_on_tube(ev, L, t, n=512, axis=(1.0, 0.0, 0.0)):
    """Points of {u = t} on the tube |x|^2 - (x.a)^2 = L^2."""
    a, e1, e2 = gr._frame(axis)
    angles = 2.0 * np.pi * np.arange(n) / n
    pts = np.empty((n, 3))
    for k, v in enumerate(angles):
        perp = L * (np.cos(v) * e1 + np.sin(v) * e2)

        def f(X):
            return float(ev.value(X * a + perp)) - t

        lim = L * (1.0 + 1e-12)
        fa, fb = f(-lim), f(lim)
        if fa * fb > 0:
            raise TransversalityError(
                f"level {t} does not cross tube L={L} on line {v:.3f}")
        X = brentq(f, -lim, lim, xtol=1e-13, rtol=1e-15)
        pts[k] = X * a + perp
    return pts


def _periodic_d(P, order=1):
    """Fourth-order periodic derivative of uniformly sampled closed curves."""
    n = len(P)
    dth = 2.0 * np.pi / n
    if order == 1:
        return (-np.roll(P, -2, axis=0) + 8 * np.roll(P, -1, axis=0)
                - 8 * np.roll(P, 1, axis=0) + np.roll(P, 2, axis=0)) / (12 * dth)
    return (-np.roll(P, -2, axis=0) + 16 * np.roll(P, -1, axis=0) - 30 * P
            + 16 * np.roll(P, 1, axis=0) - np.roll(P, 2, axis=0)) / (12 * dth ** 2)


def _christoffel_at(spec, pts):
    if spec.kind in ("flat", "constant"):
        return np.zeros(pts.shape[:-1] + (3, 3, 3))
    if spec.kind == "conformal":
        return mt.christoffel_conformal(spec, pts)
    return mt.christoffel(mt.metric_jet(spec, pts))


def total_geodesic_curvature(spec, ev, P, inward):
    """Total geodesic curvature of a closed curve lying on a level set.

    P: (n, 3) uniformly parameterized closed curve (period 2 pi).
    inward: callable p -> direction pointing into the surface region, used
    to orient the in-surface normal.  kappa = <nu~, acc> / (|nu~| |P'|^2)
    with nu~ g-orthogonal to both the curve velocity and grad u.
    """
    P = np.asarray(P, dtype=float)
    n = len(P)
    dth = 2.0 * np.pi / n
    dP = _periodic_d(P, 1)
    ddP = _periodic_d(P, 2)
    gam = _christoffel_at(spec, P)
    acc = ddP + np.einsum("...lij,...i,...j->...l", gam, dP, dP)
    du = ev.grad(P)
    g = gr.gmat_arrays(spec, P)
    ginv = gr.ginv_arrays(spec, P)
    gradvec = np.einsum("...ij,...j->...i", ginv, du)

    def gdot(x, y):
        return np.einsum("...i,...ij,...j->...", x, g, y)

    nu_t = np.cross(dP, du)
    # enforce g-orthogonality to the velocity and the surface normal
    nu_t = nu_t - (gdot(nu_t, dP) / gdot(dP, dP))[..., None] * dP
    nu_t = nu_t - (gdot(nu_t, gradvec) / gdot(gradvec, gradvec))[..., None] * gradvec
    ref = np.asarray(inward(P), dtype=float)
    sign = np.sign(np.mean(gdot(nu_t, ref)))
    if sign == 0:
        raise TransversalityError("cannot orient the in-surface normal")
    nu_t = sign * nu_t

    speed2 = gdot(dP, dP)
    kappa = gdot(nu_t, acc) / (np.sqrt(gdot(nu_t, nu_t)) * speed2)
    ds = np.sqrt(speed2)
    return float(np.sum(kappa * ds) * dth)


def curve_length(spec, P):
    P = np.asarray(P, dtype=float)
    dP = _periodic_d(P, 1)
    g = gr.gmat_arrays(spec, P)
    ds = np.sqrt(np.einsum("...i,...ij,...j->...", dP, g, dP))
    return float(np.sum(ds) * 2.0 * np.pi / len(P))


def parameter_period(ev, P):
    """Parameter length theta_0 of the flow alpha' = grad u x position.

    Computed as the line integral of |dP| / |alpha'(P)| (Euclidean norms)
    around the closed curve.
    """
    P = np.asarray(P, dtype=float)
    dP = _periodic_d(P, 1)
    du = ev.grad(P)
    V = np.cross(du, P)
    num = np.linalg.norm(dP, axis=-1)
    den = np.linalg.norm(V, axis=-1)
    return float(np.sum(num / den) * 2.0 * np.pi / len(P))


# ---------------------------------------------------------------------------
# discrete total turning for mesh boundary loops (handles corners)
# ---------------------------------------------------------------------------

def polyline_total_turning(spec, ev, points, nu_tol=1e-8):
    """Sum of signed turning angles of a closed polyline on a PLANAR level set.

    Valid only where the level-set normal is constant along the loop (then
    the tangent frame is globally parallel and the angle sum is the exact
    total boundary curvature, corners included, e.g. a box-clipped plane).
    On curved level sets a single-valued frame cannot see the holonomy
    -int K, so this would be biased; use the root-solve boundary circles and
    total_geodesic_curvature there instead.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    segs = np.roll(pts, -1, axis=0) - pts  # seg k: pts[k] -> pts[k+1]
    du = ev.grad(pts)
    nu, v1, v2 = tangent_frames(spec, pts, du)
    if np.max(np.abs(nu - nu[0])) > nu_tol:
        raise ValueError("polyline turning needs a planar level set "
                         "(constant normal along the loop)")
    g = gr.gmat_arrays(spec, pts)

    def comp(vecs, idx):
        gi = g[idx]
        return (np.einsum("ij,i,j->", gi, vecs, v1[idx]),
                np.einsum("ij,i,j->", gi, vecs, v2[idx]))

    total = 0.0
    for k in range(n):
        d_in = segs[(k - 1) % n]
        d_out = segs[k]
        a1, b1 = comp(d_in, k)
        a2, b2 = comp(d_out, k)
        total += np.arctan2(a1 * b2 - a2 * b1, a1 * a2 + b1 * b2)
    return float(total)


def loop_points(mesh, loop):
    return mesh.vertices[np.asarray(loop["vertices"], dtype=int)]


def mesh_normal_sign(mesh, ev):
    """+1 when triangle winding normals align with grad u, else -1."""
    t = mesh.triangles[: min(64, len(mesh.triangles))]
    v = mesh.vertices
    nrm = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    cent = (v[t[:, 0]] + v[t[:, 1]] + v[t[:, 2]]) / 3.0
    du = ev.grad(cent)
    s = float(np.sum(np.einsum("ij,ij->i", nrm, du)))
    return 1.0 if s >= 0 else -1.0


def oriented_boundary_turning(spec, ev, mesh, per_loop=False):
    """Signed total turning over boundary loops of a PLANAR level set.

    Loops are walked in triangle-winding order; angles are measured in the
    tangent frame oriented by grad u and flipped when the mesh normal points
    the other way.  A flat disk gives +2 pi, an interior hole -2 pi.
    """
    sign = mesh_normal_sign(mesh, ev)
    loops = mesh.boundary_loops()
    vals = []
    for loop in loops:
        pts = loop_points(mesh, loop)
        vals.append(sign * polyline_total_turning(spec, ev, pts))
    if per_loop:
        return vals, loops
    return float(sum(vals))


def gauss_bonnet_defect(spec, ev, mesh, boundary_kappa=None, gradient_floor=None):
    """| int K dA + boundary curvature - 2 pi chi | for an extracted mesh.

    boundary_kappa: precomputed total geodesic curvature over all boundary
    loops (from total_geodesic_curvature on root-solve circles).  When it is
    omitted the mesh must either be closed or have planar level sets, where
    the polyline turning sum is exact.
    """
    kint = integrate_gauss_curvature(spec, ev, mesh, gradient_floor=gradient_floor)
    chi = mesh.euler_characteristic
    if boundary_kappa is None:
        if len(mesh.topology["loops"]) == 0:
            boundary_kappa = 0.0
        else:
            boundary_kappa = oriented_boundary_turning(spec, ev, mesh)
    defect = abs(kint["integral"] + boundary_kappa - 2.0 * np.pi * chi)
    return {
        "gauss_integral": kint["integral"],
        "boundary_curvature": boundary_kappa,
        "euler_characteristic": chi,
        "defect": defect,
        "defect_rel_2pi": defect / (2.0 * np.pi),
        "skipped_area": kint["skipped_area"],
        "area": kint["area"],
    }


# ---------------------------------------------------------------------------
# transversality and implicit-surface mean curvature
# ---------------------------------------------------------------------------

def transversality_margin(ev, p):
    """1 - |cos angle(grad u, radial)| at a point of a coordinate sphere."""
    p = np.asarray(p, dtype=float)
    du = ev.grad(p)
    r = np.linalg.norm(p, axis=-1)
    cos = np.einsum("...i,...i->...", du, p) / (
        np.linalg.norm(du, axis=-1) * r)
    return 1.0 - np.abs(cos)


def surface_mean_curvature(spec, fdef, p):
    """Mean curvature H = div_g(grad f / |grad f|_g) of the surface f = 0."""
    p = np.asarray(p, dtype=float)
    df = fdef.grad(p)
    hess = fdef.hess(p) - gr.christoffel_contraction_arrays(spec, p, df)
    ginv = gr.ginv_arrays(spec, p)
    lap = np.einsum("...ij,...ij->...", ginv, hess)
    grad_vec = np.einsum("...ij,...j->...i", ginv, df)
    norm = np.sqrt(np.einsum("...i,...i->...", df, grad_vec))
    hnn = np.einsum("...i,...ij,...j->...", grad_vec, hess, grad_vec) / norm ** 2
    return (lap - hnn) / norm


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def write_off(mesh, path):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def write_loops_csv(mesh, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["loop", "tag", "x", "y", "z"])
        for i, loop in enumerate(mesh.boundary_loops()):
            for v in loop["vertices"]:
                p = mesh.vertices[v]
                wr.writerow([i, loop["tag"], f"{p[0]:.17g}", f"{p[1]:.17g}",
                             f"{p[2]:.17g}"])
