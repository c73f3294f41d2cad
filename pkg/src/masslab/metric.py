"""Asymptotically flat 3-metrics in a global chart and their pointwise geometry.

A metric spec names one of the shipped families and evaluates exact jets
(g, dg, ddg) at points.  Conventions used throughout:

    dg[a, b, c]     = d_c g_ab
    ddg[a, b, c, d] = d_c d_d g_ab
    christoffel(jet)[l, i, j] = Gamma^l_ij

Families:
  * flat            g = delta
  * conformal       g = w^4 delta for a conformal factor w(x) > 0
  * radial          g = T(|x|) delta + U(|x|) n n^T  (anisotropic, e.g. the
                    Schwarzschild metric pulled back to its harmonic chart)
  * constant        g = g0, a fixed SPD matrix (testing)

All evaluators accept points of shape (3,) or batches (..., 3).
"""

from __future__ import annotations

import numpy as np

from .analytic import (
    Analytic,
    ConstantProfile,
    GaussianProfile,
    MonopoleProfile,
    RadialFn,
    RadialProfile,
    ShellPotentialProfile,
    SumProfile,
    ScaledProfile,
    Sum,
    Constant,
    fd4_diff,
)

EYE3 = np.eye(3)


class MetricError(ValueError):
    pass


class SingularPointError(MetricError):
    """Point below the singular cutoff radius of the family."""


class PositivityError(MetricError):
    """Metric matrix failed the positive-definiteness invariant."""


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------

class MetricJet:
    """Pointwise 2-jet of the metric; batched over leading axes."""

    def __init__(self, p, g, dg, ddg):
        self.p = np.asarray(p, dtype=float)
        self.g = g
        self.dg = dg
        self.ddg = ddg

    @property
    def ginv(self):
        return np.linalg.inv(self.g)

    @property
    def sqrt_det(self):
        return np.sqrt(np.linalg.det(self.g))


class MetricSpec:
    """One of the shipped analytic metric families.

    mass is the nominal ADM mass of the family, q the decay order of
    g - delta, and r_min the singular cutoff below which evaluation raises.
    """

    def __init__(self, kind, label, mass=0.0, q=1.0, w=None, w_profile=None,
                 t_profile=None, u_profile=None, g0=None, r_min=0.0,
                 params=None):
        self.kind = kind
        self.label = label
        self.mass = float(mass)
        self.q = float(q)
        self.w = w
        self.w_profile = w_profile
        self.t_profile = t_profile
        self.u_profile = u_profile
        self.g0 = None if g0 is None else np.asarray(g0, dtype=float)
        self.r_min = float(r_min)
        self.params = dict(params or {})

    @property
    def conformal(self):
        return self.kind in ("flat", "conformal")

    def __repr__(self):
        return f"MetricSpec({self.label!r}, mass={self.mass})"


def flat():
    return MetricSpec("flat", "flat", mass=0.0, q=1.0)


def schwarzschild(m):
    """g = (1 + m/2r)^4 delta in isotropic coordinates."""
    prof = SumProfile(ConstantProfile(1.0), MonopoleProfile(m / 2.0))
    return MetricSpec("conformal", "schwarzschild", mass=m, q=1.0,
                      w=RadialFn(prof), w_profile=prof, r_min=m / 4.0,
                      params={"m": m})


def gaussian_bump(m, amplitude, center, width):
    """Conformal factor 1 + m/2r + A exp(-((r-r0)/s)^2); ADM mass m."""
    parts = [ConstantProfile(1.0), GaussianProfile(amplitude, center, width)]
    if m != 0.0:
        parts.insert(1, MonopoleProfile(m / 2.0))
    prof = SumProfile(*parts)
    return MetricSpec("conformal", "gaussian_bump", mass=m, q=1.0,
                      w=RadialFn(prof), w_profile=prof, r_min=m / 4.0,
                      params={"m": m, "amplitude": amplitude,
                              "center": center, "width": width})


def shell_bump(m0, amplitude, center, width):
    """Superharmonic bump: monopole plus the potential of a Gaussian shell.

    The shell potential tends to 1/r, so the ADM mass is m0 + 2*amplitude,
    and Laplacian(w) <= 0 everywhere, giving scalar curvature >= 0.
    """
    parts = [ConstantProfile(1.0),
             ScaledProfile(amplitude, ShellPotentialProfile(center, width))]
    if m0 != 0.0:
        parts.insert(1, MonopoleProfile(m0 / 2.0))
    prof = SumProfile(*parts)
    return MetricSpec("conformal", "shell_bump", mass=m0 + 2.0 * amplitude, q=1.0,
                      w=RadialFn(prof), w_profile=prof, r_min=m0 / 4.0,
                      params={"m0": m0, "amplitude": amplitude,
                              "center": center, "width": width})


class _HarmonicChartRadius:
    """Chart change for Schwarzschild harmonic coordinates xi = x / w.

    rho = |xi| relates to the isotropic radius by rho = r / w(r); inverting,
    r(rho) = (rho + sqrt(rho^2 + 2 m rho)) / 2.
    """

    def __init__(self, m):
        self.m = float(m)

    def r(self, rho):
        rho = np.asarray(rho, dtype=float)
        return 0.5 * (rho + np.sqrt(rho * rho + 2.0 * self.m * rho))

    def dr(self, rho):
        r = self.r(rho)
        w = 1.0 + self.m / (2.0 * r)
        return w * w / (1.0 + self.m / r)

    def d2r(self, rho):
        m = self.m
        r = self.r(rho)
        w = 1.0 + m / (2.0 * r)
        wp = -m / (2.0 * r * r)
        s = 1.0 + m / r
        dr = w * w / s
        d_dr_dr = (2.0 * w * wp * s + w * w * m / r ** 2) / s ** 2
        return d_dr_dr * dr


class _MappedProfile(RadialProfile):
    """Profile F(rho) = f(r(rho)) with exact chain-rule derivatives."""

    def __init__(self, chart, f, df, d2f):
        self.chart = chart
        self._f, self._df, self._d2f = f, df, d2f

    def f(self, rho):
        return self._f(self.chart.r(rho))

    def d1(self, rho):
        r = self.chart.r(rho)
        return self._df(r) * self.chart.dr(rho)

    def d2(self, rho):
        r = self.chart.r(rho)
        dr, d2r = self.chart.dr(rho), self.chart.d2r(rho)
        return self._d2f(r) * dr * dr + self._df(r) * d2r


def schwarzschild_harmonic(m):
    """Schwarzschild pulled back to the harmonic chart xi^i = x^i / w.

    Each xi^i is g-harmonic, so the linear function u = xi . a is harmonic
    with |grad u|^2 = g^(aa); the metric is radial anisotropic,
    g = w^6 [delta - n n^T] + w^8/(1+m/r)^2 n n^T at r = r(|xi|).
    """
    m = float(m)
    chart = _HarmonicChartRadius(m)

    def w(r):
        return 1.0 + m / (2.0 * r)

    def wp(r):
        return -m / (2.0 * r * r)

    def wpp(r):
        return m / r ** 3

    def T(r):
        return w(r) ** 6

    def dT(r):
        return 6.0 * w(r) ** 5 * wp(r)

    def d2T(r):
        return 30.0 * w(r) ** 4 * wp(r) ** 2 + 6.0 * w(r) ** 5 * wpp(r)

    def s(r):
        return 1.0 + m / r

    def sp(r):
        return -m / r ** 2

    def spp(r):
        return 2.0 * m / r ** 3

    def R(r):
        return w(r) ** 8 / s(r) ** 2

    def dR(r):
        return 8.0 * w(r) ** 7 * wp(r) / s(r) ** 2 - 2.0 * w(r) ** 8 * sp(r) / s(r) ** 3

    def d2R(r):
        wv, wpv, wppv = w(r), wp(r), wpp(r)
        sv, spv, sppv = s(r), sp(r), spp(r)
        return (
            56.0 * wv ** 6 * wpv ** 2 / sv ** 2
            + 8.0 * wv ** 7 * wppv / sv ** 2
            - 32.0 * wv ** 7 * wpv * spv / sv ** 3
            + 6.0 * wv ** 8 * spv ** 2 / sv ** 4
            - 2.0 * wv ** 8 * sppv / sv ** 3
        )

    t_prof = _MappedProfile(chart, T, dT, d2T)
    rad_prof = _MappedProfile(chart, R, dR, d2R)

    class _U(RadialProfile):
        def f(self, rho):
            return rad_prof.f(rho) - t_prof.f(rho)

        def d1(self, rho):
            return rad_prof.d1(rho) - t_prof.d1(rho)

        def d2(self, rho):
            return rad_prof.d2(rho) - t_prof.d2(rho)

    return MetricSpec("radial", "schwarzschild_harmonic", mass=m, q=1.0,
                      t_profile=t_prof, u_profile=_U(), r_min=m / 8.0,
                      params={"m": m})


def constant_metric(g0):
    g0 = np.asarray(g0, dtype=float)
    return MetricSpec("constant", "constant", mass=0.0, q=1.0, g0=g0)


# ---------------------------------------------------------------------------
# jet evaluation
# ---------------------------------------------------------------------------

def _check_regular(spec, p):
    if spec.r_min > 0.0:
        r = np.sqrt(np.sum(np.asarray(p, dtype=float) ** 2, axis=-1))
        if np.any(r < spec.r_min):
            raise SingularPointError(
                f"point below singular cutoff r_min={spec.r_min} of {spec.label}"
            )


def _check_positive(g):
    m1 = g[..., 0, 0]
    m2 = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    m3 = np.linalg.det(g)
    if np.any(m1 <= 0) or np.any(m2 <= 0) or np.any(m3 <= 0):
        raise PositivityError("metric is not positive definite at a sampled point")


def metric_value(spec, p):
    """Metric matrix g(p) only, shape (..., 3, 3)."""
    p = np.asarray(p, dtype=float)
    shape = p.shape[:-1] + (3, 3)
    if spec.kind == "flat":
        return np.broadcast_to(EYE3, shape).copy()
    if spec.kind == "constant":
        return np.broadcast_to(spec.g0, shape).copy()
    if spec.kind == "conformal":
        w = np.asarray(spec.w.value(p))
        return w[..., None, None] ** 4 * np.broadcast_to(EYE3, shape)
    if spec.kind == "radial":
        rho = np.sqrt(np.sum(p ** 2, axis=-1))
        n = p / rho[..., None]
        nn = n[..., :, None] * n[..., None, :]
        T = np.asarray(spec.t_profile.f(rho))[..., None, None]
        U = np.asarray(spec.u_profile.f(rho))[..., None, None]
        return T * np.broadcast_to(EYE3, shape) + U * nn
    raise MetricError(f"unknown metric kind {spec.kind!r}")


def metric_jet(spec, p, check=True):
    """Exact analytic 2-jet of the metric at p (batched over leading axes)."""
    p = np.asarray(p, dtype=float)
    if check:
        _check_regular(spec, p)
    shape = p.shape[:-1]
    g = metric_value(spec, p)
    if spec.kind in ("flat", "constant"):
        dg = np.zeros(shape + (3, 3, 3))
        ddg = np.zeros(shape + (3, 3, 3, 3))
    elif spec.kind == "conformal":
        w = np.asarray(spec.w.value(p))
        wg = spec.w.grad(p)
        wh = spec.w.hess(p)
        dw4 = 4.0 * w[..., None] ** 3 * wg
        ddw4 = (12.0 * w[..., None, None] ** 2 * wg[..., :, None] * wg[..., None, :]
                + 4.0 * w[..., None, None] ** 3 * wh)
        dg = dw4[..., None, None, :] * EYE3[..., :, :, None]
        ddg = ddw4[..., None, None, :, :] * EYE3[..., :, :, None, None]
    elif spec.kind == "radial":
        dg, ddg = _radial_dg_ddg(spec, p)
    else:
        raise MetricError(f"unknown metric kind {spec.kind!r}")
    if check:
        _check_positive(g)
    return MetricJet(p, g, dg, ddg)


def _radial_dg_ddg(spec, p):
    rho = np.sqrt(np.sum(p ** 2, axis=-1))
    n = p / rho[..., None]
    nn = np.einsum("...a,...b->...ab", n, n)
    P = EYE3 - nn

    T1 = np.asarray(spec.t_profile.d1(rho))
    T2 = np.asarray(spec.t_profile.d2(rho))
    U0 = np.asarray(spec.u_profile.f(rho))
    U1 = np.asarray(spec.u_profile.d1(rho))
    U2 = np.asarray(spec.u_profile.d2(rho))

    # dg[a,b,c] = T' n_c d_ab + U' n_a n_b n_c + (U/rho)(P_ac n_b + n_a P_bc)
    dg = (
        np.einsum("...,...c,ab->...abc", T1, n, EYE3)
        + np.einsum("...,...a,...b,...c->...abc", U1, n, n, n)
        + (U0 / rho)[..., None, None, None]
        * (np.einsum("...ac,...b->...abc", P, n) + np.einsum("...a,...bc->...abc", n, P))
    )

    u1r = (U1 / rho)[..., None, None, None, None]
    u0r2 = (U0 / rho ** 2)[..., None, None, None, None]

    ddg = (
        np.einsum("...,...c,...d,ab->...abcd", T2, n, n, EYE3)
        + np.einsum("...,...cd,ab->...abcd", T1 / rho, P, EYE3)
        + np.einsum("...,...a,...b,...c,...d->...abcd", U2, n, n, n, n)
        + u1r * (
            np.einsum("...ad,...b,...c->...abcd", P, n, n)
            + np.einsum("...a,...bd,...c->...abcd", n, P, n)
            + np.einsum("...a,...b,...cd->...abcd", n, n, P)
        )
        + (u1r - u0r2) * (
            np.einsum("...ac,...b,...d->...abcd", P, n, n)
            + np.einsum("...a,...bc,...d->...abcd", n, P, n)
        )
        + u0r2 * (
            -np.einsum("...ad,...c,...b->...abcd", P, n, n)
            - np.einsum("...a,...cd,...b->...abcd", n, P, n)
            + np.einsum("...ac,...bd->...abcd", P, P)
            + np.einsum("...ad,...bc->...abcd", P, P)
            - np.einsum("...a,...bd,...c->...abcd", n, P, n)
            - np.einsum("...a,...b,...cd->...abcd", n, n, P)
        )
    )
    # partials commute; symmetrize to remove assembly-order round-off
    ddg = 0.5 * (ddg + np.swapaxes(ddg, -1, -2))
    return dg, ddg


def jet_fd(spec, p, h_jet=None):
    """Jet by fourth-order central differences of g; cross-oracle for the
    analytic jets and fallback for factors without closed-form derivatives."""
    p = np.asarray(p, dtype=float)
    _check_regular(spec, p)
    r = float(np.sqrt(np.sum(p ** 2)))
    h = h_jet if h_jet is not None else 1e-4 * max(1.0, r)
    g = metric_value(spec, p)
    dg = np.empty((3, 3, 3))
    ddg = np.empty((3, 3, 3, 3))
    for c in range(3):
        dg[:, :, c] = fd4_diff(lambda q: metric_value(spec, q), p, EYE3[c], h)
    f0 = g
    for c in range(3):
        fp1 = metric_value(spec, p + h * EYE3[c])
        fm1 = metric_value(spec, p - h * EYE3[c])
        fp2 = metric_value(spec, p + 2 * h * EYE3[c])
        fm2 = metric_value(spec, p - 2 * h * EYE3[c])
        ddg[:, :, c, c] = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h ** 2)
    for c in range(3):
        for d in range(c + 1, 3):
            def gc(q):
                return fd4_diff(lambda s_: metric_value(spec, s_), q, EYE3[c], h)
            v = fd4_diff(gc, p, EYE3[d], h)
            ddg[:, :, c, d] = ddg[:, :, d, c] = v
    _check_positive(g)
    return MetricJet(p, g, dg, ddg)


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

def christoffel(jet):
    """Gamma^l_ij = 1/2 g^{lk} (d_i g_kj + d_j g_ki - d_k g_ij), batched."""
    ginv = jet.ginv
    dg = jet.dg
    s = (np.einsum("...kji->...kij", dg) + np.einsum("...kij->...kij", dg)
         - np.einsum("...ijk->...kij", dg))
    return 0.5 * np.einsum("...lk,...kij->...lij", ginv, s)


def christoffel_conformal(spec, p):
    """Closed form for g = w^4 delta:
    Gamma^l_ij = 2 (d^l_j dlogw_i + d^l_i dlogw_j - d_ij dlogw^l)."""
    p = np.asarray(p, dtype=float)
    L = spec.w.grad(p) / np.asarray(spec.w.value(p))[..., None] if spec.kind == "conformal" \
        else np.zeros(p.shape)
    out = 2.0 * (
        np.einsum("lj,...i->...lij", EYE3, L)
        + np.einsum("li,...j->...lij", EYE3, L)
        - np.einsum("...l,ij->...lij", L, EYE3)
    )
    return out


def _dchristoffel(jet):
    """d_m Gamma^l_ij from the jet, shape (..., m, l, i, j)."""
    ginv = jet.ginv
    dg, ddg = jet.dg, jet.ddg
    s = (np.einsum("...kji->...kij", dg) + dg
         - np.einsum("...ijk->...kij", dg))
    # d_m S_kij = dd_(i,m) g_kj + dd_(j,m) g_ki - dd_(k,m) g_ij
    ds = (np.einsum("...kjim->...mkij", ddg)
          + np.einsum("...kijm->...mkij", ddg)
          - np.einsum("...ijkm->...mkij", ddg))
    dginv = -np.einsum("...la,...abm,...bk->...mlk", ginv, dg, ginv)
    return 0.5 * (np.einsum("...mlk,...kij->...mlij", dginv, s)
                  + np.einsum("...lk,...mkij->...mlij", ginv, ds))


def ricci_from_jet(jet):
    """Ric_ij = d_l Gamma^l_ij - d_i Gamma^l_lj + Gamma^l_lm Gamma^m_ij
    - Gamma^l_im Gamma^m_lj."""
    gam = christoffel(jet)
    dgam = _dchristoffel(jet)
    term1 = np.einsum("...llij->...ij", dgam)
    term2 = np.einsum("...illj->...ij", dgam)
    term3 = np.einsum("...llm,...mij->...ij", gam, gam)
    term4 = np.einsum("...lim,...mlj->...ij", gam, gam)
    return term1 - term2 + term3 - term4


def ricci_conformal(spec, p):
    """Closed form for g = e^{2phi} delta with phi = 2 log w."""
    p = np.asarray(p, dtype=float)
    w = np.asarray(spec.w.value(p))
    wg = spec.w.grad(p)
    wh = spec.w.hess(p)
    phi_i = 2.0 * wg / w[..., None]
    phi_ij = 2.0 * wh / w[..., None, None] - 2.0 * np.einsum(
        "...i,...j->...ij", wg, wg) / w[..., None, None] ** 2
    lap = np.trace(phi_ij, axis1=-2, axis2=-1)
    norm2 = np.sum(phi_i ** 2, axis=-1)
    outer = np.einsum("...i,...j->...ij", phi_i, phi_i)
    return -(phi_ij - outer) - (lap + norm2)[..., None, None] * EYE3


def ricci(spec, p):
    """Ricci tensor, via the conformal closed form when available."""
    if spec.kind == "flat":
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape[:-1] + (3, 3))
    if spec.kind == "conformal":
        return ricci_conformal(spec, p)
    if spec.kind == "constant":
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape[:-1] + (3, 3))
    return ricci_from_jet(metric_jet(spec, p))


def scalar_curvature(spec, p):
    """Scalar curvature; conformal metrics use R = -8 w^-5 Lap_delta(w)."""
    p = np.asarray(p, dtype=float)
    _check_regular(spec, p)
    if spec.kind in ("flat", "constant"):
        return np.zeros(p.shape[:-1]) if p.ndim > 1 else 0.0
    if spec.kind == "conformal":
        w = np.asarray(spec.w.value(p))
        lap = np.trace(spec.w.hess(p), axis1=-2, axis2=-1)
        return -8.0 * lap / w ** 5
    jet = metric_jet(spec, p)
    return np.einsum("...ij,...ij->...", jet.ginv, ricci_from_jet(jet))


# ---------------------------------------------------------------------------
# decay report
# ---------------------------------------------------------------------------

def _sphere_samples(n_theta=12, n_phi=24):
    mu = np.linspace(-1.0 + 1.0 / n_theta, 1.0 - 1.0 / n_theta, n_theta)
    phi = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    mu_g, phi_g = np.meshgrid(mu, phi, indexing="ij")
    st = np.sqrt(1.0 - mu_g ** 2)
    return np.stack([mu_g, st * np.cos(phi_g), st * np.sin(phi_g)], axis=-1).reshape(-1, 3)


def decay_report(spec, radii, q=None):
    """sup_{|x|=r} |d^l (g - delta)| * r^(q+l) for l = 0, 1, 2.

    Columns stay bounded in r exactly when the declared decay order q is
    honest; the trend flag per column checks the log-log slope.
    """
    q = spec.q if q is None else float(q)
    radii = np.asarray(sorted(radii), dtype=float)
    if np.any(radii <= spec.r_min):
        raise SingularPointError("decay radii must exceed the singular cutoff")
    dirs = _sphere_samples()
    rows = []
    for r in radii:
        jet = metric_jet(spec, r * dirs)
        n0 = float(np.max(np.abs(jet.g - EYE3)))
        n1 = float(np.max(np.abs(jet.dg)))
        n2 = float(np.max(np.abs(jet.ddg)))
        rows.append({
            "r": float(r),
            "l0": n0 * r ** q,
            "l1": n1 * r ** (q + 1),
            "l2": n2 * r ** (q + 2),
        })
    flags = {}
    logr = np.log(radii)
    for key in ("l0", "l1", "l2"):
        vals = np.array([row[key] for row in rows])
        if np.all(vals < 1e-14):
            flags[key] = "passing"
            continue
        slope = np.polyfit(logr, np.log(np.maximum(vals, 1e-300)), 1)[0]
        flags[key] = "passing" if slope <= 0.1 else "failing"
    return {"q": q, "rows": rows, "trend": flags}
