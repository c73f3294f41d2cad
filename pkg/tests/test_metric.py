"""Metric families: exact jets, curvature, decay."""

import mpmath
import numpy as np
import pytest

from masslab import metric
from masslab.analytic import ShellPotentialProfile, fd4_grad, fd4_hess

RNG = np.random.default_rng(20250810)


def random_points(n, rmin, rmax):
    pts = RNG.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts * RNG.uniform(rmin, rmax, size=(n, 1))


ALL_CURVED = [
    metric.schwarzschild(1.0),
    metric.gaussian_bump(1.0, 0.01, 5.0, 1.0),
    metric.shell_bump(0.8, 0.1, 4.0, 1.0),
    metric.schwarzschild_harmonic(1.0),
]


def test_flat_jet_is_trivial():
    jet = metric.metric_jet(metric.flat(), np.array([0.3, -1.2, 2.0]))
    assert np.array_equal(jet.g, np.eye(3))
    assert not jet.dg.any()
    assert not jet.ddg.any()
    assert not metric.christoffel(jet).any()


def test_schwarzschild_point_values():
    spec = metric.schwarzschild(1.0)
    jet = metric.metric_jet(spec, np.array([2.0, 0.0, 0.0]))
    # w = 1.25 at r = 2, so g11 = 1.25^4 and d1 g11 = 4 w^3 dw = -0.9765625
    assert jet.g[0, 0] == pytest.approx(2.44140625, abs=1e-14)
    assert jet.dg[0, 0, 0] == pytest.approx(-0.9765625, abs=1e-12)
    gam = metric.christoffel(jet)
    assert gam[0, 0, 0] == pytest.approx(-0.2, abs=1e-12)


def test_schwarzschild_dg_against_mpmath():
    m = 1.0
    x = mpmath.mpf(2)

    def g11(xv):
        r = xv  # on the x axis
        return (1 + m / (2 * r)) ** 4

    oracle = float(mpmath.diff(g11, x))
    jet = metric.metric_jet(metric.schwarzschild(m), np.array([2.0, 0.0, 0.0]))
    assert jet.dg[0, 0, 0] == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("spec", ALL_CURVED, ids=lambda s: s.label)
def test_analytic_jet_matches_fd_jet(spec):
    for p in random_points(8, 1.5, 9.0):
        jet = metric.metric_jet(spec, p)
        fd = metric.jet_fd(spec, p)
        assert np.allclose(jet.g, fd.g, atol=1e-13)
        assert np.allclose(jet.dg, fd.dg, atol=2e-9)
        assert np.allclose(jet.ddg, fd.ddg, atol=2e-6)


def test_jet_symmetries_and_positivity():
    for spec in ALL_CURVED:
        pts = random_points(25, 1.0, 12.0)
        jet = metric.metric_jet(spec, pts)
        assert np.allclose(jet.g, np.swapaxes(jet.g, -1, -2))
        assert np.allclose(jet.dg, np.swapaxes(jet.dg, -3, -2))
        assert np.allclose(jet.ddg, np.swapaxes(jet.ddg, -1, -2))
        assert np.all(np.linalg.eigvalsh(jet.g) > 0)


def test_christoffel_general_equals_conformal_closed_form():
    # general formula on a finite-differenced jet vs the conformal closed form
    for spec in ALL_CURVED[:3]:
        pts = random_points(100, 1.5, 10.0)
        closed = metric.christoffel_conformal(spec, pts)
        exact = metric.christoffel(metric.metric_jet(spec, pts))
        assert np.allclose(closed, exact, atol=1e-12)
        for p in pts[:5]:
            fd = metric.christoffel(metric.jet_fd(spec, p))
            assert np.allclose(fd, metric.christoffel_conformal(spec, p), atol=1e-8)


def test_christoffel_symmetry_in_lower_indices():
    spec = metric.schwarzschild_harmonic(1.0)
    pts = random_points(30, 1.0, 10.0)
    gam = metric.christoffel(metric.metric_jet(spec, pts))
    assert np.allclose(gam, np.swapaxes(gam, -1, -2), atol=1e-12)


def test_ricci_conformal_matches_jet_route():
    for spec in ALL_CURVED[:3]:
        pts = random_points(40, 1.5, 9.0)
        closed = metric.ricci_conformal(spec, pts)
        jet = metric.ricci_from_jet(metric.metric_jet(spec, pts))
        scale = np.maximum(np.max(np.abs(closed)), 1e-6)
        assert np.allclose(closed, jet, atol=1e-9 * scale + 1e-12)


def test_scalar_curvature_flat_and_schwarzschild():
    assert metric.scalar_curvature(metric.flat(), np.array([1.0, 2.0, 3.0])) == 0.0
    spec = metric.schwarzschild(1.0)
    pts = random_points(60, 0.75, 20.0)
    R = metric.scalar_curvature(spec, pts)
    assert np.max(np.abs(R)) < 1e-10


def test_scalar_curvature_gaussian_bump_against_fd_laplacian():
    spec = metric.gaussian_bump(1.0, 0.01, 5.0, 1.0)
    p = np.array([5.0, 0.0, 0.0])
    w = float(spec.w.value(p))
    lap = float(np.trace(fd4_hess(lambda q: float(spec.w.value(q)), p, 1e-3)))
    oracle = -8.0 * lap / w ** 5
    assert metric.scalar_curvature(spec, p) == pytest.approx(oracle, rel=1e-6)


def test_shell_bump_superharmonic_and_mass():
    spec = metric.shell_bump(0.8, 0.1, 4.0, 1.0)
    assert spec.mass == pytest.approx(1.0)
    pts = random_points(200, 0.5, 20.0)
    R = metric.scalar_curvature(spec, pts)
    assert np.all(R >= -1e-13)
    # w-profile Laplacian is nonpositive everywhere sampled
    r = np.linalg.norm(pts, axis=1)
    assert np.all(spec.w_profile.laplacian(r) <= 1e-15)


def test_shell_potential_profile_derivatives():
    prof = ShellPotentialProfile(4.0, 1.0)
    h = 1e-3
    for r in (0.7, 2.0, 4.0, 6.5, 12.0):
        f = prof.f
        d1_num = (-f(r + 2 * h) + 8 * f(r + h) - 8 * f(r - h) + f(r - 2 * h)) / (12 * h)
        d2_num = (-f(r + 2 * h) + 16 * f(r + h) - 30 * f(r) + 16 * f(r - h)
                  - f(r - 2 * h)) / (12 * h ** 2)
        assert prof.d1(r) == pytest.approx(d1_num, rel=1e-8, abs=1e-11)
        assert prof.d2(r) == pytest.approx(d2_num, rel=1e-6, abs=1e-8)
    # tends to a unit monopole
    assert prof.f(50.0) * 50.0 == pytest.approx(1.0, rel=1e-12)


def test_mapped_schwarzschild_is_scalar_flat():
    spec = metric.schwarzschild_harmonic(1.0)
    pts = random_points(40, 1.0, 12.0)
    R = metric.scalar_curvature(spec, pts)
    assert np.max(np.abs(R)) < 1e-6


def test_mapped_chart_sphere_areas_agree():
    # tangential coefficient w(r)^6 must reproduce Schwarzschild sphere areas:
    # rho^2 w(r(rho))^6 == r^2 w(r)^4 with rho = r / w(r)
    m = 1.3
    spec = metric.schwarzschild_harmonic(m)
    for r in (1.0, 3.0, 7.0):
        w = 1.0 + m / (2 * r)
        rho = r / w
        T = spec.t_profile.f(rho)
        assert rho ** 2 * T == pytest.approx(r ** 2 * w ** 4, rel=1e-12)


def test_singular_cutoff_and_positivity_errors():
    spec = metric.schwarzschild(1.0)
    with pytest.raises(metric.SingularPointError):
        metric.metric_jet(spec, np.array([0.1, 0.0, 0.0]))
    bad = metric.constant_metric(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(metric.PositivityError):
        metric.metric_jet(bad, np.array([1.0, 0.0, 0.0]))


def test_decay_report_flat_and_schwarzschild():
    rep = metric.decay_report(metric.flat(), [4.0, 8.0, 16.0])
    assert all(row["l0"] == 0.0 for row in rep["rows"])
    assert rep["trend"]["l0"] == "passing"

    spec = metric.schwarzschild(1.0)
    rep = metric.decay_report(spec, [8.0, 16.0, 32.0])
    row16 = [r for r in rep["rows"] if r["r"] == 16.0][0]
    assert row16["l0"] == pytest.approx(2.0957183837890625, rel=1e-10)
    assert all(v == "passing" for v in rep["trend"].values())

    lying = metric.decay_report(spec, [8.0, 16.0, 32.0], q=2.0)
    assert lying["trend"]["l0"] == "failing"


def test_constant_metric_jets():
    g0 = np.array([[2.0, 0.3, 0.0], [0.3, 1.5, 0.2], [0.0, 0.2, 1.0]])
    jet = metric.metric_jet(metric.constant_metric(g0), np.array([1.0, 1.0, 1.0]))
    assert np.allclose(jet.g, g0)
    assert not jet.dg.any()
    assert not metric.christoffel(jet).any()
