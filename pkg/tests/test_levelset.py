"""Level-set extraction, topology, curvature, geodesic curvature."""

import numpy as np
import pytest

from masslab import fields, grid, levelset, metric
from masslab.analytic import Linear, QuadraticForm, RadialFn, SumProfile, \
    ConstantProfile, MonopoleProfile

E1 = np.array([1.0, 0.0, 0.0])


def sample_box(fn, L, h):
    dom = grid.GridDomain("box", L=L, h=h)
    pts = dom.points()
    vals = np.asarray(fn(pts.reshape(-1, 3))).reshape((dom.n,) * 3)
    return dom, vals


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def sample_schwarzschild(L, h, m=1.0):
    u = fields.linear_harmonic(m)
    dom = grid.GridDomain("box", L=L, h=h)
    pts = dom.points()
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.nan_to_num(u.value(pts.reshape(-1, 3)).reshape((dom.n,) * 3))
    return dom, vals, u


def test_flat_plane_is_a_disk():
    dom, vals = sample_box(lambda p: p[:, 0], 2.0, 0.25)
    mesh = levelset.extract(vals, dom, 0.0)
    topo = mesh.topology
    assert mesh.component_count == 1
    assert mesh.euler_characteristic == 1
    assert len(topo["loops"]) == 1


def test_sphere_level_set_is_closed():
    dom, vals = sample_box(lambda p: np.sum(p ** 2, axis=-1), 2.0, 0.125)
    mesh = levelset.extract(vals, dom, 1.0)
    assert mesh.component_count == 1
    assert mesh.euler_characteristic == 2
    assert len(mesh.topology["loops"]) == 0
    spec = metric.flat()
    area = levelset.mesh_area(spec, mesh)
    assert area == pytest.approx(4 * np.pi, rel=1e-2)
    ev = fields.AnalyticEval(QuadraticForm(np.eye(3)))
    kint = levelset.integrate_gauss_curvature(spec, ev, mesh)
    assert kint["integral"] == pytest.approx(4 * np.pi, rel=1e-2)
    assert kint["skipped_area"] == 0.0


def test_level_outside_range_raises():
    dom, vals = sample_box(lambda p: p[:, 0], 2.0, 0.5)
    with pytest.raises(levelset.LevelRangeError):
        levelset.extract(vals, dom, 5.0)


def test_clipped_disk_topology_and_boundary_tag():
    dom, vals = sample_box(lambda p: p[:, 0], 4.0, 0.25)
    mesh = levelset.extract(vals, dom, 0.1, clips=[levelset.ball_clip(3.0)])
    assert mesh.component_count == 1
    assert mesh.euler_characteristic == 1
    loops = mesh.boundary_loops()
    assert len(loops) == 1
    assert loops[0]["tag"] == "sphere"
    pts = levelset.loop_points(mesh, loops[0])
    assert np.allclose(np.linalg.norm(pts, axis=1), 3.0, atol=5e-3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_schwarzschild_level_connected_disk():
    dom, vals, u = sample_schwarzschild(9.0, 0.25)
    for t in (-3.0, 0.5, 3.0):
        mesh = levelset.extract(vals, dom, t, clips=[levelset.ball_clip(8.0)])
        assert mesh.component_count == 1
        assert mesh.euler_characteristic == 1
        assert len(mesh.topology["loops"]) == 1


def test_curvature_flat_linear():
    spec = metric.flat()
    ev = fields.AnalyticEval(Linear(E1))
    s = levelset.curvature_at(spec, ev, np.array([0.3, 0.2, -0.5]))
    assert abs(s.H) < 1e-13
    assert abs(s.K) < 1e-13
    assert np.allclose(s.II, 0.0, atol=1e-13)
    assert np.allclose(s.normal, E1)


def test_curvature_ruled_surface_has_zero_gauss():
    # u = x^2 - y^2 at (1, 0, 0): hyperbolic-cylinder level set, K = 0
    spec = metric.flat()
    ev = fields.AnalyticEval(QuadraticForm(np.diag([1.0, -1.0, 0.0])))
    s = levelset.curvature_at(spec, ev, np.array([1.0, 0.0, 0.0]))
    assert abs(s.K) < 1e-12
    # mean-curvature identity: H = -hess(nu,nu)/|du| = -2/2 (exact here)
    assert s.H == pytest.approx(-1.0, rel=1e-12)


def test_curvature_round_sphere():
    spec = metric.flat()
    ev = fields.AnalyticEval(QuadraticForm(np.eye(3)))
    p = np.array([0.0, 3.0, 0.0])
    s = levelset.curvature_at(spec, ev, p)
    assert s.K == pytest.approx(1.0 / 9.0, rel=1e-12)
    assert abs(s.H) == pytest.approx(2.0 / 3.0, rel=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_schwarzschild_gauss_curvature_decay():
    spec = metric.schwarzschild(1.0)
    u = fields.linear_harmonic(1.0)
    ev = fields.AnalyticEval(u)
    for r in (8.0, 16.0, 32.0):
        circ = levelset.boundary_circle_on_sphere(ev, r, 0.0, n=16)
        data = levelset.curvature_data(spec, ev, circ)
        assert np.max(np.abs(data["K"])) * r ** 3 < 30.0


def test_gradient_floor_skip():
    spec = metric.flat()
    ev = fields.AnalyticEval(QuadraticForm(np.eye(3)))
    s = levelset.curvature_at(spec, ev, np.array([1e-9, 0.0, 0.0]),
                              gradient_floor=1e-3)
    assert s.skipped


def test_geodesic_curvature_flat_disk():
    spec = metric.flat()
    ev = fields.AnalyticEval(Linear(E1))
    circ = levelset.boundary_circle_on_sphere(ev, 3.0, 0.0, n=256)
    total = levelset.total_geodesic_curvature(spec, ev, circ, inward=lambda p: -p)
    assert total == pytest.approx(2 * np.pi, rel=1e-7)
    theta0 = levelset.parameter_period(ev, circ)
    assert theta0 == pytest.approx(2 * np.pi, rel=1e-7)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_geodesic_curvature_schwarzschild_asymptotics():
    m = 1.0
    spec = metric.schwarzschild(m)
    ev = fields.AnalyticEval(fields.linear_harmonic(m))
    for r, t in ((16.0, 0.0), (16.0, 8.0), (32.0, 0.0)):
        circ = levelset.boundary_circle_on_sphere(ev, r, t, n=512)
        total = levelset.total_geodesic_curvature(spec, ev, circ,
                                                  inward=lambda p: -p)
        model = 2 * np.pi * (1 - m / r + m * t ** 2 / r ** 3)
        assert abs(total - model) < 30.0 / r ** 2
        theta0 = levelset.parameter_period(ev, circ)
        assert abs(theta0 - 2 * np.pi * (1 + m / (2 * r))) < 30.0 / r ** 2


def test_polyline_turning_flat_disk_with_corners():
    # plane level set clipped by the lattice box: square boundary, total 2 pi
    dom, vals = sample_box(lambda p: p[:, 0], 2.0, 0.25)
    mesh = levelset.extract(vals, dom, 0.05)
    spec = metric.flat()
    ev = fields.AnalyticEval(Linear(E1))
    total = levelset.oriented_boundary_turning(spec, ev, mesh)
    assert total == pytest.approx(2 * np.pi, abs=1e-9)


def test_gauss_bonnet_defect_flat_and_curved():
    spec = metric.flat()
    dom, vals = sample_box(lambda p: p[:, 0], 4.0, 0.25)
    ev = fields.AnalyticEval(Linear(E1))
    mesh = levelset.extract(vals, dom, 0.0, clips=[levelset.ball_clip(3.0)])
    rep = levelset.gauss_bonnet_defect(spec, ev, mesh)
    assert rep["defect_rel_2pi"] < 1e-6

    dom2, vals2, u = sample_schwarzschild(9.0, 0.25)
    spec2 = metric.schwarzschild(1.0)
    ev2 = fields.AnalyticEval(u)
    mesh2 = levelset.extract(vals2, dom2, 1.0, clips=[levelset.ball_clip(8.0)])
    circ = levelset.boundary_circle_on_sphere(ev2, 8.0, 1.0, n=512)
    kappa = levelset.total_geodesic_curvature(spec2, ev2, circ, inward=lambda p: -p)
    rep2 = levelset.gauss_bonnet_defect(spec2, ev2, mesh2, boundary_kappa=kappa)
    assert rep2["defect_rel_2pi"] < 0.02


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_annulus_level_set_euler_and_turning():
    # excised ball makes the t=0 level set an annulus: chi = 0, two loops
    u = fields.linear_harmonic(1.0)
    dom = grid.GridDomain("box", L=6.0, h=0.25, r_exc=2.0)
    pts = dom.points()
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.nan_to_num(u.value(pts.reshape(-1, 3)).reshape((dom.n,) * 3))
    vals = np.where(dom.active, vals, 0.0)
    mesh = levelset.extract(grid.ScalarField(dom, vals), dom, 0.05,
                            clips=[levelset.ball_clip(5.0)])
    assert mesh.component_count == 1
    assert len(mesh.topology["loops"]) == 2
    assert mesh.euler_characteristic == 0
    tags = sorted(loop["tag"] for loop in mesh.boundary_loops())
    assert tags == ["excised", "sphere"]


def test_transversality_margin():
    ev = fields.AnalyticEval(Linear(E1))
    r = 5.0
    eq = np.array([0.0, r, 0.0])
    pole = np.array([r, 0.0, 0.0])
    assert levelset.transversality_margin(ev, eq) == pytest.approx(1.0)
    assert levelset.transversality_margin(ev, pole) == pytest.approx(0.0, abs=1e-12)

    m, c0 = 1.0, 3.0
    evs = fields.AnalyticEval(fields.linear_harmonic(m))
    for r in (16.0, 32.0):
        x = r - c0
        p = np.array([x, np.sqrt(r * r - x * x), 0.0])
        margin = levelset.transversality_margin(evs, p)
        assert abs(margin - c0 / r) < 8.0 / r ** 2


def test_surface_mean_curvature_sphere_and_horizon():
    spec = metric.flat()
    f = QuadraticForm(np.eye(3), c=-4.0)  # |x|^2 - 4: sphere r = 2
    p = np.array([2.0, 0.0, 0.0])
    H = levelset.surface_mean_curvature(spec, fields.AnalyticEval(f).fn, p)
    assert H == pytest.approx(1.0, rel=1e-12)  # 2/r with r = 2

    m = 1.0
    schw = metric.schwarzschild(m)
    horizon = RadialFn(SumProfile(ConstantProfile(-m / 2.0), MonopoleProfile(0.0)))

    class _Radial:
        def grad(self, p):
            p = np.asarray(p, dtype=float)
            return p / np.linalg.norm(p, axis=-1)[..., None]

        def hess(self, p):
            p = np.asarray(p, dtype=float)
            r = np.linalg.norm(p, axis=-1)
            n = p / r[..., None]
            nn = n[..., :, None] * n[..., None, :]
            return (np.eye(3) - nn) / r[..., None, None]

    for ang in (0.3, 1.2, 2.0):
        p = (m / 2.0) * np.array([np.cos(ang), np.sin(ang), 0.0])
        H = levelset.surface_mean_curvature(schw, _Radial(), p)
        assert abs(H) < 1e-12  # isotropic horizon is minimal
    p4 = 4.0 * np.array([1.0, 0.0, 0.0])
    H4 = levelset.surface_mean_curvature(schw, _Radial(), p4)
    assert H4 > 0.0


def test_exports(tmp_path):
    dom, vals = sample_box(lambda p: p[:, 0], 2.0, 0.5)
    mesh = levelset.extract(vals, dom, 0.0, clips=[levelset.ball_clip(1.5)])
    off = tmp_path / "mesh.off"
    csvp = tmp_path / "loops.csv"
    levelset.write_off(mesh, off)
    levelset.write_loops_csv(mesh, csvp)
    assert off.read_text().startswith("OFF\n")
    assert "sphere" in csvp.read_text()
