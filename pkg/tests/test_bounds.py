"""Mass fluxes, extrapolation, the Stern bound, cylinder ledger."""

import numpy as np
import pytest

from masslab import bounds, fields, grid, metric, solver
from masslab.analytic import Linear

E1 = np.array([1.0, 0.0, 0.0])


def test_adm_flux_flat_is_zero():
    spec = metric.flat()
    assert abs(bounds.adm_flux(spec, ("sphere", 4.0))) < 1e-12
    assert abs(bounds.adm_flux(spec, ("cylinder", 4.0, E1))) < 1e-12


def test_adm_flux_schwarzschild_closed_form():
    # the conformal flux integrand reduces to -2 dr(w^4), giving m (1+m/2r)^3
    m = 1.0
    spec = metric.schwarzschild(m)
    for r in (8.0, 16.0, 32.0):
        expected = m * (1 + m / (2 * r)) ** 3
        assert bounds.adm_flux(spec, ("sphere", r)) == pytest.approx(
            expected, rel=1e-9)
    assert bounds.adm_flux(spec, ("sphere", 16.0)) == pytest.approx(
        1.096710205078125, rel=1e-10)


def test_adm_sphere_extrapolation():
    spec = metric.schwarzschild(1.0)
    rep = bounds.adm_flux_report(spec, "sphere", [8.0, 16.0, 32.0])
    assert rep.extrapolated == pytest.approx(1.0, rel=5e-3)


def test_adm_cylinder_route_and_agreement():
    spec = metric.schwarzschild(1.0)
    rep = bounds.adm_flux_report(spec, "cylinder", [8.0, 16.0, 32.0])
    gaps = np.abs(np.asarray(rep.values) - 1.0)
    assert np.all(np.diff(gaps) < 0)  # monotone toward the mass
    assert rep.extrapolated == pytest.approx(1.0, rel=1e-2)
    sph = bounds.adm_flux_report(spec, "sphere", [8.0, 16.0, 32.0])
    assert abs(rep.extrapolated - sph.extrapolated) < 0.01


def test_adm_flux_shell_bump_mass():
    spec = metric.shell_bump(0.8, 0.1, 4.0, 1.0)
    rep = bounds.adm_flux_report(spec, "sphere", [8.0, 16.0, 32.0])
    assert rep.extrapolated == pytest.approx(spec.mass, rel=5e-3)


def test_extrapolate_models():
    f, c, rms, warns = bounds.extrapolate([1.0, 2.0, 4.0], [3.0, 3.0, 3.0])
    assert f == pytest.approx(3.0, abs=1e-12)
    assert c == pytest.approx(0.0, abs=1e-12)
    target = 16 * np.pi / 3
    rs = np.array([8.0, 16.0, 32.0])
    f, c, rms, _ = bounds.extrapolate(rs, target + 1.0 / rs)
    assert f == pytest.approx(target, rel=1e-12)
    assert c == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ValueError):
        bounds.extrapolate([8.0, 10.0, 12.0], [1.0, 2.0, 3.0])


def test_stern_bound_flat_zero():
    spec = metric.flat()
    dom = grid.GridDomain("box", L=4.0, h=0.5)
    rep = bounds.stern_bound(spec, fields.AnalyticEval(Linear(E1)), dom)
    assert rep.bound == pytest.approx(0.0, abs=1e-13)
    assert rep.skipped_fraction == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_stern_bound_schwarzschild_exact_field():
    spec = metric.schwarzschild(1.0)
    ev = fields.AnalyticEval(fields.linear_harmonic(1.0))
    vals = {}
    for h in (0.5, 0.25):
        dom = grid.GridDomain("box", L=8.0, h=h, r_exc=0.5)
        rep = bounds.stern_bound(spec, ev, dom)
        assert 0.0 < rep.bound < 1.0
        # smaller eps can only raise the bound (phi decreases)
        assert rep.bound_quarter_eps >= rep.bound - 1e-12
        vals[h] = rep.bound
    assert abs(vals[0.5] - vals[0.25]) / vals[0.25] < 0.05


def test_gradnorm_flux_flat_zero():
    spec = metric.flat()
    ev = fields.AnalyticEval(Linear(E1))
    assert abs(bounds.gradnorm_flux(spec, ev, ("sphere", 4.0))) < 1e-9


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_gradnorm_flux_constant():
    spec = metric.schwarzschild(1.0)
    ev = fields.AnalyticEval(fields.linear_harmonic(1.0))
    rs = [8.0, 16.0, 32.0]
    flux = [bounds.gradnorm_flux(spec, ev, ("sphere", r)) for r in rs]
    f, c, rms, _ = bounds.extrapolate(rs, flux)
    target = 16 * np.pi / 3
    assert abs(f - target) / target < 0.03


def test_cylinder_ledger_flat():
    spec = metric.flat()
    out = bounds.cylinder_boundary_terms(spec, 4.0, n_t=16, n_circle=128)
    assert abs(out["gradnorm_flux"]) < 1e-9
    assert out["kappa_total"] == pytest.approx(4 * np.pi * 4.0, rel=1e-9)
    assert abs(out["lemma61"]) < 1e-12
    assert out["lemma62"] == pytest.approx(4 * np.pi * 4.0, rel=1e-12)
    assert abs(out["combined"]) < 1e-8


def test_cylinder_ledger_harmonic_chart():
    spec = metric.schwarzschild_harmonic(1.0)
    out = bounds.cylinder_boundary_terms(spec, 8.0, n_t=32, n_circle=256)
    assert abs(out["combined_over_8pi"] - 1.0) < 0.25
    assert out["flux_vs_lemma61"] < 0.3
    assert out["kappa_vs_lemma62"] < 0.3
    assert out["adm_flux"] == pytest.approx(1.0, rel=0.2)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_gauss_integral_dual_route_small():
    spec = metric.schwarzschild(1.0)
    ev = fields.AnalyticEval(fields.linear_harmonic(1.0))
    out = bounds.gauss_integral_over_levels(spec, ev, r=8.0, lattice_h=0.5,
                                            n_levels=12, n_circle=256)
    assert all(row["chi"] == 1 for row in out["rows"])
    assert all(row["components"] == 1 for row in out["rows"])
    assert out["route_gap_rel"] < 0.02
    assert out["direct"] <= out["bound_value"] * 1.05
    assert out["max_skipped_fraction"] == 0.0


def test_coarea_flat_box():
    spec = metric.flat()
    dom = grid.GridDomain("box", L=2.0, h=0.125)
    gap, vol, co = bounds.coarea_gap(spec, fields.AnalyticEval(Linear(E1)),
                                     dom, n_levels=64)
    assert vol == pytest.approx(64.0, rel=1e-10)
    assert gap < 0.01


def test_coarea_curved_metric():
    spec = metric.gaussian_bump(0.0, 0.05, 1.0, 0.8)
    dom = grid.GridDomain("box", L=2.0, h=0.125)
    gap, vol, co = bounds.coarea_gap(spec, fields.AnalyticEval(Linear(E1)),
                                     dom, n_levels=64)
    assert gap < 0.01


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_coarea_schwarzschild_excised():
    spec = metric.schwarzschild(1.0)
    ev = fields.AnalyticEval(fields.linear_harmonic(1.0))
    dom = grid.GridDomain("box", L=4.0, h=0.125, r_exc=1.0)
    gap, vol, co = bounds.coarea_gap(spec, ev, dom, n_levels=64)
    assert gap < 0.025


def test_stern_inequality_flat_box():
    spec = metric.flat()
    dom = grid.GridDomain("box", L=2.0, h=0.25)
    bd = solver.BoundaryData(E1, mass=0.0)
    sol = solver.solve(spec, dom, bd, tol=1e-12)
    rep = bounds.stern_inequality_report(spec, sol, mode="box", n_levels=12)
    assert abs(rep["lhs_volume"]) < 1e-8
    assert abs(rep["slack"]) < 1e-4
    assert all(chi == 1 for chi in rep["chi_values"])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_stern_inequality_neumann_mode():
    spec = metric.schwarzschild(1.0)
    dom = grid.GridDomain("box", L=6.0, h=0.25, r_exc=0.5)
    bd = solver.BoundaryData(E1, mass=1.0)
    sol = solver.solve(spec, dom, bd)
    rep = bounds.stern_inequality_report(spec, sol, mode="neumann", n_levels=16,
                                         tolerance=0.05 * 16 * np.pi)
    # horizon sphere is minimal: the P1 mean-curvature term nearly vanishes
    assert abs(rep["h_p1_total"]) < 0.75
    assert rep["slack"] > -rep["tolerance"]
    assert not rep["hard_fail"]
