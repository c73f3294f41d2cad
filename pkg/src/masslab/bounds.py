"""Mass fluxes, the Stern lower bound, and the boundary-term ledgers.

Mass convention: the coordinate flux (1/16 pi) int Sum_i (g_ij,i - g_ii,j)
nu^j dA is evaluated with the Euclidean unit normal and Euclidean area
element on coordinate spheres and cylinders (the limit is convention
independent for decay order q > 1/2; finite-radius values are not and the
convention is recorded in reports).

The gradient-norm flux int d_nu |grad u| dA is metric-intrinsic: metric
unit normal and induced area element.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dfield

import numpy as np

from . import fields as fl
from . import grid as gr
from . import levelset as ls
from . import metric as mt


# ---------------------------------------------------------------------------
# ADM flux and extrapolation
# ---------------------------------------------------------------------------

def adm_flux(spec, surface):
    """Coordinate mass flux through ("sphere", r) or ("cylinder", L[, axis])."""

    def integrand(pts, normals):
        jet = mt.metric_jet(spec, pts)
        expr = (np.einsum("...iji->...j", jet.dg)
                - np.einsum("...iij->...j", jet.dg))
        return np.einsum("...j,...j->...", expr, normals)

    return gr.surface_integral(spec, integrand, surface,
                               element="euclidean") / (16.0 * np.pi)


@dataclass
class FluxReport:
    parameter: str
    params: list
    values: list
    extrapolated: float
    coefficient: float
    fit_residual: float
    model: str = "f_inf + c/p"
    warnings: list = dfield(default_factory=list)

    def to_dict(self):
        return {
            "parameter": self.parameter, "params": list(self.params),
            "values": list(self.values), "extrapolated": self.extrapolated,
            "coefficient": self.coefficient, "fit_residual": self.fit_residual,
            "model": self.model, "warnings": list(self.warnings),
        }


def extrapolate(params, values):
    """Fit f(p) = f_inf + c/p by least squares; O(1/p) remainder model."""
    params = np.asarray(params, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(params) < 3:
        raise ValueError("extrapolation needs at least 3 samples")
    if np.any(np.diff(params) <= 0):
        raise ValueError("extrapolation parameters must be strictly increasing")
    if params.max() / params.min() < 2.0:
        raise ValueError("degenerate fit: samples span less than a factor 2")
    A = np.stack([np.ones_like(params), 1.0 / params], axis=1)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    resid = values - A @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    warnings = []
    tail = abs(coef[1]) / params.max()
    if tail > 0 and rms > 0.1 * tail:
        warnings.append("fit residual exceeds 10% of the 1/p term")
    return float(coef[0]), float(coef[1]), rms, warnings


def adm_flux_report(spec, kind, params, axis=(1.0, 0.0, 0.0)):
    """Flux sequence over spheres (kind='sphere') or cylinders, extrapolated."""
    params = sorted(float(p) for p in params)
    vals = []
    for p in params:
        surface = ("sphere", p) if kind == "sphere" else ("cylinder", p, axis)
        vals.append(adm_flux(spec, surface))
    f_inf, c, rms, warns = extrapolate(params, vals)
    return FluxReport(parameter="r" if kind == "sphere" else "L",
                      params=params, values=vals, extrapolated=f_inf,
                      coefficient=c, fit_residual=rms, warnings=warns)


# ---------------------------------------------------------------------------
# Stern bound
# ---------------------------------------------------------------------------

@dataclass
class SternReport:
    bound: float
    bound_quarter_eps: float
    eps: float
    mass_estimate: float | None
    margin: float | None
    skipped_fraction: float
    domain: dict
    budget: float | None = None

    def to_dict(self):
        return {
            "bound": self.bound, "bound_quarter_eps": self.bound_quarter_eps,
            "eps": self.eps, "mass_estimate": self.mass_estimate,
            "margin": self.margin, "skipped_fraction": self.skipped_fraction,
            "domain": self.domain, "budget": self.budget,
        }


def _field_node_data(spec, u, dom):
    """(grad, covariant Hessian, |grad|_g, validity) on the lattice."""
    pts = dom.points()
    if hasattr(u, "field"):  # HarmonicSolution
        vals = u.field.values
        grad = gr.grad_arrays(dom, vals)
        hess = gr.covariant_hessian_arrays(spec, dom, vals)
        valid = gr.stencil_validity(dom)
    else:  # closed-form evaluator
        flat = pts.reshape(-1, 3)
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = np.nan_to_num(u.grad(flat).reshape(pts.shape[:-1] + (3,)))
            hess = np.nan_to_num(
                fl.covariant_hessian_at(spec, u, flat).reshape(pts.shape[:-1] + (3, 3)))
        valid = dom.active
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.nan_to_num(gr.gradnorm_arrays(spec, pts, grad))
    return grad, hess, norm, valid


def stern_bound(spec, u, dom, eps=None):
    """B = (1/16 pi) int (|hess u|^2 / phi + R |grad u|) dV on the domain.

    phi = sqrt(|grad u|^2 + eps) regularizes the denominator only; the
    default eps = h^2 (median |grad u|)^2 ties it to the discretization.
    Near-critical nodes (|grad u| below 1e-3 median) are excluded and their
    metric volume fraction reported; the integrand is nonnegative for R >= 0
    so both the exclusion and the phi denominator only lower B.
    """
    pts = dom.points()
    grad, hess, norm, valid = _field_node_data(spec, u, dom)
    med = float(np.median(norm[valid])) if np.any(valid) else 0.0
    if eps is None:
        eps = dom.h ** 2 * med ** 2
    floor = 1e-3 * med
    ok = valid & (norm >= floor)

    with np.errstate(divide="ignore", invalid="ignore"):
        ginv = gr.ginv_arrays(spec, pts)
        hess2 = np.nan_to_num(np.einsum("...ia,...jb,...ij,...ab->...",
                                        ginv, ginv, hess, hess))
        R = np.nan_to_num(np.asarray(mt.scalar_curvature(spec, pts)))

    def bound_at(e):
        phi = np.sqrt(norm ** 2 + e)
        with np.errstate(divide="ignore", invalid="ignore"):
            integ = np.nan_to_num(hess2 / phi) + R * norm
        return gr.volume_integral(spec, dom, integ, mask=ok) / (16.0 * np.pi)

    b = bound_at(eps)
    b4 = bound_at(eps / 4.0)
    total = gr.masked_measure(spec, dom, dom.active)
    skipped = gr.masked_measure(spec, dom, dom.active & ~ok)
    return SternReport(bound=b, bound_quarter_eps=b4, eps=float(eps),
                       mass_estimate=None, margin=None,
                       skipped_fraction=skipped / max(total, 1e-300),
                       domain=dom.to_dict())


# ---------------------------------------------------------------------------
# gradient-norm flux
# ---------------------------------------------------------------------------

def gradnorm_flux(spec, ev, surface, step=None):
    """int d_nu |grad u| dA with metric normal and induced area element."""
    normfn = fl.metric_gradnorm_fn(spec, ev)

    def integrand(pts, normals):
        upsilon = gr.metric_normal(spec, pts, normals)
        scale = np.linalg.norm(pts, axis=-1).max() if len(pts) else 1.0
        d = step if step is not None else 1e-3 * max(1.0, float(scale))
        vals = np.zeros(len(pts))
        for wgt, off in ((-1.0, 2.0), (8.0, 1.0), (-8.0, -1.0), (1.0, -2.0)):
            vals += wgt * normfn(pts + off * d * upsilon)
        return vals / (12.0 * d)

    return gr.surface_integral(spec, integrand, surface, element="induced")


def boxface_gradnorm_flux(spec, sol):
    """int d_nu |grad u| dA over the box truncation faces of a solved field.

    One-sided second-order normal derivative of the |grad u| node array plus
    central tangential terms when the metric normal has them; induced area
    element; trapezoid weights on each face.
    """
    dom = sol.field.domain
    if dom.shape != "box":
        raise ValueError("boxface flux needs a box domain")
    pts = dom.points()
    grad = gr.grad_arrays(dom, sol.field.values)
    norm = gr.gradnorm_arrays(spec, pts, grad)
    h, n = dom.h, dom.n

    w1 = np.ones(n)
    w1[0] = w1[-1] = 0.5
    w2 = np.outer(w1, w1) * h * h

    total = 0.0
    for ax in range(3):
        for end, sgn in ((0, -1.0), (-1, 1.0)):
            sl = [slice(None)] * 3
            sl[ax] = end
            fpts = pts[tuple(sl)].reshape(-1, 3)
            e = np.zeros(3)
            e[ax] = sgn
            ups = gr.metric_normal(spec, fpts, np.broadcast_to(e, fpts.shape))
            # normal derivative: one-sided into the domain
            sl1, sl2 = list(sl), list(sl)
            sl1[ax] = 1 if end == 0 else -2
            sl2[ax] = 2 if end == 0 else -3
            dn = sgn * (3.0 * norm[tuple(sl)] - 4.0 * norm[tuple(sl1)]
                        + norm[tuple(sl2)]) / (2.0 * h)
            # tangential derivatives on the face
            dts = []
            for tax in range(3):
                if tax == ax:
                    dts.append(np.zeros_like(dn))
                else:
                    face_ax = tax if tax < ax else tax - 1
                    dts.append(np.gradient(norm[tuple(sl)], h, axis=face_ax,
                                           edge_order=2))
            dvec = np.stack([d.reshape(-1) for d in dts], axis=-1)
            dvec[:, ax] = dn.reshape(-1)  # already the coordinate derivative
            dval = np.einsum("...i,...i->...", ups, dvec)
            factor = gr.induced_area_factor(spec, fpts,
                                            np.broadcast_to(e, fpts.shape))
            total += float(np.sum(dval * factor * w2.reshape(-1)))
    return total


# ---------------------------------------------------------------------------
# Gauss-curvature integral over levels (dual route)
# ---------------------------------------------------------------------------

def gauss_integral_over_levels(spec, ev, r, lattice_h=0.5, n_levels=64,
                               c0=None, n_circle=512, jobs=1):
    """int_t int_{Sigma_t cap B_r} K dA dt by two routes.

    Direct route: marching-cubes meshes clipped to the coordinate ball,
    Gauss curvature sampled per triangle.  Gauss-Bonnet route: per level
    2 pi chi - the root-solve boundary circle's geodesic curvature.  Levels
    are trapezoid-sampled on [-(r - c0), r - c0] with c0 ~ 2 + m.
    """
    m = spec.mass
    if c0 is None:
        c0 = 2.0 + m
    half = lattice_h * np.ceil((r + 2 * lattice_h) / lattice_h)
    dom = gr.GridDomain("box", L=half, h=lattice_h)
    pts = dom.points()
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.nan_to_num(
            np.asarray(ev.value(pts.reshape(-1, 3))).reshape((dom.n,) * 3))
    levels = np.linspace(-(r - c0), r - c0, n_levels)

    def one_level(t):
        mesh = ls.extract(vals, dom, t, clips=[ls.ball_clip(r)])
        kint = ls.integrate_gauss_curvature(spec, ev, mesh)
        chi = mesh.euler_characteristic
        circ = ls.boundary_circle_on_sphere(ev, r, t, n=n_circle)
        kappa = ls.total_geodesic_curvature(spec, ev, circ, inward=lambda p: -p)
        return {
            "t": float(t), "chi": chi,
            "components": mesh.component_count,
            "loops": len(mesh.topology["loops"]),
            "gauss_integral": kint["integral"],
            "area": kint["area"],
            "skipped_area": kint["skipped_area"],
            "boundary_kappa": kappa,
            "gb_term": 2.0 * np.pi * chi - kappa,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one_level, levels))
    else:
        rows = [one_level(t) for t in levels]

    direct = float(np.trapezoid([row["gauss_integral"] for row in rows], levels))
    gb = float(np.trapezoid([row["gb_term"] for row in rows], levels))
    skipped = max(row["skipped_area"] / max(row["area"], 1e-300) for row in rows)
    return {
        "r": float(r), "c0": float(c0), "levels": n_levels,
        "direct": direct, "gauss_bonnet": gb,
        "route_gap_rel": abs(direct - gb) / max(abs(gb), 1e-300),
        "bound_value": (8.0 * np.pi / 3.0) * m,
        "max_skipped_fraction": skipped,
        "rows": rows,
    }


# ---------------------------------------------------------------------------
# cylinder ledger (harmonic-chart route)
# ---------------------------------------------------------------------------

def cylinder_boundary_terms(spec, L, n_t=64, n_circle=512, ev=None):
    """Boundary ledger on the coordinate cylinder C_L for u = x^1.

    Expects a chart in which u = x^1 is harmonic (the harmonic-chart
    Schwarzschild family); the distinguished coordinate must be the cylinder
    axis.  Returns the metric-derivative expressions for the gradient-norm
    flux and the geodesic-curvature total, the directly computed quantities,
    and the combined identity value that tends to 8 pi m.
    """
    axis = np.array([1.0, 0.0, 0.0])
    if ev is None:
        ev = fl.AnalyticEval(fl.linear_harmonic(0.0, axis))  # u = x

    # direct quantities
    flux = gradnorm_flux(spec, ev, ("cylinder", L, axis))

    xg, wg = np.polynomial.legendre.leggauss(n_t)
    ts = L * xg
    wts = L * wg
    angles = 2.0 * np.pi * np.arange(n_circle) / n_circle
    kappa_total = 0.0
    for t, wt in zip(ts, wts):
        circ = np.stack([
            np.full(n_circle, t),
            L * np.cos(angles),
            L * np.sin(angles),
        ], axis=-1)

        def inward(p):
            q = p.copy()
            q[..., 0] = 0.0
            return -q

        kappa_total += wt * ls.total_geodesic_curvature(spec, ev, circ, inward)

    # metric-derivative expressions (Euclidean elements on the cylinder)
    def cap_expr(pts, sign):
        jet = mt.metric_jet(spec, pts)
        dg = jet.dg
        val = np.zeros(len(pts))
        for j in range(3):
            val += dg[:, 0, j, j] - dg[:, j, j, 0]
        return sign * val

    def tube_expr_61(pts):
        jet = mt.metric_jet(spec, pts)
        dg = jet.dg
        return (pts[:, 1] * (dg[:, 1, 0, 0] - dg[:, 0, 0, 1])
                + pts[:, 2] * (dg[:, 2, 0, 0] - dg[:, 0, 0, 2])) / L

    def tube_expr_62(pts):
        jet = mt.metric_jet(spec, pts)
        dg = jet.dg
        return (pts[:, 1] * (dg[:, 2, 2, 1] - dg[:, 1, 2, 2])
                + pts[:, 2] * (dg[:, 1, 1, 2] - dg[:, 2, 1, 1])) / L

    patches = gr.cylinder_patches(L, axis)
    lemma61 = 0.0
    lemma62 = 4.0 * np.pi * L
    for patch in patches:
        if patch.tag == "cap+":
            lemma61 += 0.5 * float(np.sum(cap_expr(patch.points, +1.0)
                                          * patch.weights))
        elif patch.tag == "cap-":
            lemma61 += 0.5 * float(np.sum(cap_expr(patch.points, -1.0)
                                          * patch.weights))
        else:
            lemma61 += 0.5 * float(np.sum(tube_expr_61(patch.points)
                                          * patch.weights))
            lemma62 += 0.5 * float(np.sum(tube_expr_62(patch.points)
                                          * patch.weights))

    combined = flux - kappa_total + 4.0 * np.pi * L
    mass_flux = adm_flux(spec, ("cylinder", L, axis))
    return {
        "L": float(L),
        "gradnorm_flux": flux,
        "kappa_total": kappa_total,
        "lemma61": lemma61,
        "lemma62": lemma62,
        "flux_vs_lemma61": abs(flux - lemma61),
        "kappa_vs_lemma62": abs(kappa_total - lemma62),
        "combined": combined,
        "combined_over_8pi": combined / (8.0 * np.pi),
        "adm_flux": mass_flux,
    }


# ---------------------------------------------------------------------------
# Stern inequality ledger
# ---------------------------------------------------------------------------

def stern_inequality_report(spec, sol, mode="box", n_levels=48, eps=None,
                            level_margin=None, tolerance=None):
    """Assemble the level-set form of the mass inequality for a solved field.

    Left side: int 1/2 (|hess u|^2/phi + R |grad u|) dV (equals 8 pi B).
    Right side: int_t (2 pi chi - boundary kappa) dt + int d_nu|grad u| dA
    over the truncation, minus the mean-curvature term on an excised
    (Neumann) sphere.  The per-level geodesic total is obtained through
    Gauss-Bonnet from the meshed K integral, so the right side's level term
    is int_t int_Sigma K dA dt; chi per level is recorded.
    """
    dom = sol.field.domain
    rep = stern_bound(spec, sol, dom, eps=eps)
    lhs = 8.0 * np.pi * rep.bound

    ev = fl.GridEval(sol.field, spec)
    vals = sol.field.values
    umin = float(vals[dom.active].min())
    umax = float(vals[dom.active].max())
    if level_margin is None:
        level_margin = max(2.0 * dom.h, 0.02 * (umax - umin))
    levels = np.linspace(umin + level_margin, umax - level_margin, n_levels)

    neumann = mode == "neumann"
    if neumann and (dom.r_exc <= 0 or dom.excision != "neumann"):
        raise ValueError("neumann mode needs a Neumann-excised domain")

    rows = []
    for t in levels:
        mesh = ls.extract(sol.field, dom, t)
        kint = ls.integrate_gauss_curvature(spec, ev, mesh)
        row = {
            "t": float(t),
            "chi": mesh.euler_characteristic,
            "gauss_integral": kint["integral"],
            "area": kint["area"],
            "skipped_area": kint["skipped_area"],
            "h_p1_term": 0.0,
        }
        if neumann:
            hterm = 0.0
            for loop in mesh.boundary_loops():
                if loop["tag"] != "excised":
                    continue
                pts = ls.loop_points(mesh, loop)
                segs = np.roll(pts, -1, axis=0) - pts
                mids = pts + 0.5 * segs
                g = gr.gmat_arrays(spec, mids)
                dl = np.sqrt(np.einsum("...i,...ij,...j->...", segs, g, segs))
                H = ls.surface_mean_curvature(spec, _RadialSurface(), mids)
                hterm += float(np.sum(H * dl))
            row["h_p1_term"] = hterm
        rows.append(row)

    level_term = float(np.trapezoid([r["gauss_integral"] for r in rows], levels))
    h_p1_total = float(np.trapezoid([r["h_p1_term"] for r in rows], levels))
    flux = boxface_gradnorm_flux(spec, sol)
    rhs = level_term + flux
    slack = rhs - lhs - h_p1_total
    report = {
        "mode": mode,
        "lhs_volume": lhs,
        "stern_bound": rep.to_dict(),
        "level_term": level_term,
        "boundary_flux": flux,
        "h_p1_total": h_p1_total,
        "rhs": rhs,
        "slack": slack,
        "levels": [r for r in rows],
        "chi_values": [r["chi"] for r in rows],
    }
    if tolerance is not None:
        report["tolerance"] = float(tolerance)
        report["hard_fail"] = bool(slack < -tolerance)
    return report


class _RadialSurface:
    """grad/hess provider for f = |x| - const (excised-sphere geometry)."""

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1)[..., None]

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1)
        n = p / r[..., None]
        nn = n[..., :, None] * n[..., None, :]
        return (np.eye(3) - nn) / r[..., None, None]


def coarea_gap(spec, ev, dom, n_levels=96):
    """Relative gap between int |grad u| dV and int area(Sigma_t) dt."""
    pts = dom.points()
    flat = pts.reshape(-1, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.nan_to_num(np.asarray(ev.value(flat)).reshape((dom.n,) * 3))
        grad = np.nan_to_num(ev.grad(flat).reshape(pts.shape[:-1] + (3,)))
        norm = np.nan_to_num(gr.gradnorm_arrays(spec, pts, grad))
    vol = gr.volume_integral(spec, dom, norm, mask=dom.active)
    umin, umax = float(vals[dom.active].min()), float(vals[dom.active].max())
    levels = np.linspace(umin, umax, n_levels + 2)[1:-1]
    areas = []
    for t in levels:
        try:
            mesh = ls.extract(vals if dom.active.all() else
                              gr.ScalarField(dom, np.where(dom.active, vals, 0.0)),
                              dom, t)
            areas.append(ls.mesh_area(spec, mesh))
        except ls.LevelRangeError:
            areas.append(0.0)
    # endpoint slivers contribute (umax - umin) / n_levels * O(area_min)
    coarea = float(np.trapezoid(areas, levels))
    coarea += 0.5 * (levels[1] - levels[0]) * (areas[0] + areas[-1])
    return abs(vol - coarea) / max(abs(vol), 1e-300), vol, coarea
