import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid
from scipy.linalg import expm

from timesync import hydro
from timesync.model import InitialMoments, ModelParams, mean_trajectories, variance_trajectories


def _field(grid, mean1=0.0, std1=1.0, mean2=0.0, std2=1.0, masses=(1.0, 1.0)):
    return hydro.init_field(hydro.gaussian_density(mean1, std1), hydro.gaussian_density(mean2, std2), grid,
                            masses=masses)


GRID = hydro.GridSpec(-12.0, 16.0, 2048)


# -- initial fields -------------------------------------------------------------------------------


def test_unit_bumps_have_unit_mass():
    f = _field(GRID)
    assert f.mass1 == pytest.approx(1.0, abs=1e-14)
    assert f.mass2 == pytest.approx(1.0, abs=1e-14)


def test_point_mass_approximation_accepted():
    grid = hydro.GridSpec(-5.0, 5.0, 1024)
    f = _field(grid, std1=3 * grid.dx, std2=3 * grid.dx)
    a1, a2, d1, d2 = hydro.moments(f)
    assert abs(a1) < 1e-12 and d1 == pytest.approx((3 * grid.dx) ** 2, rel=1e-6)


def test_narrow_grid_rejected():
    with pytest.raises(hydro.TailError):
        _field(hydro.GridSpec(-2.0, 2.0, 256))


def test_field_guards():
    with pytest.raises(ValueError):
        hydro.Field(0.0, 0.1, np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        hydro.Field(0.0, 0.1, np.zeros(16), np.zeros(8))


@given(st.floats(-3, 3), st.floats(0.3, 2.0))
def test_gaussian_moments(mean, std):
    grid = hydro.GridSpec(-20.0, 20.0, 4096)
    assert grid.dx <= std / 20
    f = _field(grid, mean, std, mean, std)
    a1, _, d1, _ = hydro.moments(f)
    assert a1 == pytest.approx(mean, abs=1e-9)
    assert d1 == pytest.approx(std * std, abs=1e-6)


# -- upwind finite volumes ------------------------------------------------------------------------


def test_exchange_vanishes_on_equal_densities():
    p = ModelParams(0.5, 0.5, 1.0, 2.0)
    f0 = _field(GRID)
    f = hydro.fv_step(f0, p, 0.01)
    np.testing.assert_allclose(f.m1, f.m2, rtol=0, atol=1e-15)
    assert f.mass1 == pytest.approx(f0.mass1, abs=1e-13)


def test_mass_exchange_without_transport():
    p = ModelParams(0.0, 0.0, 0.7, 1.3)
    f = _field(GRID, masses=(1.0, 0.2))
    dt = 1e-3
    g = hydro.fv_step(f, p, dt)
    assert g.mass1 - f.mass1 == pytest.approx(dt * 0.7 * (f.mass2 - f.mass1), rel=1e-12)
    assert g.mass2 - f.mass2 == pytest.approx(dt * 1.3 * (f.mass1 - f.mass2), rel=1e-12)


@settings(max_examples=15)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.1, 2.0))
def test_fv_conserves_weighted_mass(a12, a21, m2):
    p = ModelParams(-0.5, 1.0, a12, a21)
    f0 = _field(hydro.GridSpec(-10.0, 10.0, 512), masses=(1.0, m2))
    f = hydro.fv_solve(f0, p, 2.0, dt=1e-3)
    assert f.conserved(p) == pytest.approx(f0.conserved(p), rel=1e-8)


def test_fv_tracks_outflow():
    p = ModelParams(0.0, 2.0, 1.0, 1.0)
    f0 = _field(hydro.GridSpec(-6.0, 6.0, 256))
    f = hydro.fv_solve(f0, p, 5.0)
    assert f.outflow2 > 0.1
    assert f.conserved(p) == pytest.approx(f0.conserved(p), rel=1e-10)
    with pytest.raises(hydro.OutflowError):
        hydro.moments(f)


def test_cfl_guard(symmetric):
    f0 = _field(GRID)
    with pytest.raises(hydro.CFLError):
        hydro.fv_step(f0, symmetric, 2 * f0.dx)
    with pytest.raises(hydro.CFLError):
        hydro.fv_step(f0, ModelParams(0.0, 1e-3, 10.0, 10.0), 0.05)


# -- spectral solver ------------------------------------------------------------------------------


def test_spectral_identity_at_zero(asymmetric):
    f0 = _field(GRID, 1.0, 0.7, -0.5, 1.2, masses=(1.0, 0.4))
    f = hydro.spectral_solve(f0, asymmetric, 0.0)
    np.testing.assert_allclose(f.m1, f0.m1, atol=1e-12)
    np.testing.assert_allclose(f.m2, f0.m2, atol=1e-12)


def test_spectral_rigid_translation_without_exchange():
    p = ModelParams(-0.5, 1.0, 1.0, 1.0)
    grid = hydro.GridSpec(-16.0, 16.0, 1024)
    t = 2.0
    f0 = _field(grid)
    f = hydro.spectral_solve(f0, p, t, exchange=False)
    ref = _field(grid, mean1=p.v1 * t, mean2=p.v2 * t)
    np.testing.assert_allclose(f.m1, ref.m1, atol=1e-10)
    np.testing.assert_allclose(f.m2, ref.m2, atol=1e-10)


@given(st.floats(-20, 20), st.floats(0.0, 5.0))
def test_mode_propagator_matches_expm(p, t):
    params = ModelParams(0.2, 1.5, 0.8, 1.9)
    e11, e12, e21, e22 = hydro.mode_propagator(params, np.array([p]), t)
    a = np.array([[-1j * params.v1 * p - 0.8, 0.8], [1.9, -1j * params.v2 * p - 1.9]])
    ref = expm(t * a)
    got = np.array([[e11[0], e12[0]], [e21[0], e22[0]]])
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_mode_propagator_degenerate_branch():
    # equal speeds at p where eigenvalues nearly collide still give expm
    params = ModelParams(1.0, 1.0 + 1e-9, 1.0, 1.0)
    p = np.array([0.0, 1e-3, 3.0])
    e = hydro.mode_propagator(params, p, 1.5)
    for k, pk in enumerate(p):
        a = np.array([[-1j * params.v1 * pk - 1.0, 1.0], [1.0, -1j * params.v2 * pk - 1.0]])
        ref = expm(1.5 * a)
        np.testing.assert_allclose([[e[0][k], e[1][k]], [e[2][k], e[3][k]]], ref, atol=1e-10)


def test_spectral_needs_power_of_two(symmetric):
    f0 = _field(hydro.GridSpec(-12.0, 12.0, 1000))
    with pytest.raises(ValueError):
        hydro.spectral_solve(f0, symmetric, 1.0)


def test_spectral_flags_unresolved_modes(symmetric):
    grid = hydro.GridSpec(-12.0, 12.0, 64)
    f0 = hydro.Field(grid.x_min, grid.dx, np.where(np.arange(64) % 2 == 0, 1.0, 0.0), np.zeros(64))
    with pytest.raises(hydro.AliasingError):
        hydro.spectral_solve(f0, ModelParams(0.0, 0.37, 1.0, 1.0), 1.0)


@pytest.mark.parametrize("dx, tol", [(0.02, 1e-2), (0.01, 5e-3)])
def test_solvers_agree(symmetric, dx, tol):
    cells = int(round(32.0 / dx))
    cells = 1 << math.ceil(math.log2(cells))
    grid = hydro.GridSpec(-16.0, -16.0 + cells * dx, cells)
    f0 = _field(grid)
    sp = hydro.spectral_solve(f0, symmetric, 1.0)
    fv = hydro.fv_solve(f0, symmetric, 1.0, dt=1e-3)
    assert hydro.l1_distance(sp, fv) < tol


def test_fv_converges_first_order(symmetric):
    errors = []
    for cells in (1024, 2048, 4096):
        grid = hydro.GridSpec(-16.0, 16.0, cells)
        f0 = _field(grid)
        sp = hydro.spectral_solve(f0, symmetric, 1.0)
        fv = hydro.fv_solve(f0, symmetric, 1.0, cfl=0.5)
        errors.append(hydro.l1_distance(sp, fv))
    assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.15)
    assert errors[1] / errors[2] == pytest.approx(2.0, rel=0.15)


def test_spectral_conserves_weighted_mass(asymmetric):
    f0 = _field(GRID, masses=(0.3, 1.0))
    for t in (0.5, 2.0, 6.0):
        f = hydro.spectral_solve(f0, asymmetric, t)
        assert f.conserved(asymmetric) == pytest.approx(f0.conserved(asymmetric), rel=1e-10)


def test_mutation_breaks_conservation(symmetric):
    f0 = _field(GRID, masses=(1.0, 0.5))
    with hydro.mutated_exchange_sign():
        f = hydro.spectral_solve(f0, symmetric, 1.0)
        g = hydro.fv_solve(f0, symmetric, 1.0, dt=1e-3)
    assert abs(f.conserved(symmetric) - f0.conserved(symmetric)) > 1e-3
    assert abs(g.conserved(symmetric) - f0.conserved(symmetric)) > 1e-3
    ok = hydro.spectral_solve(f0, symmetric, 1.0)
    assert ok.conserved(symmetric) == pytest.approx(f0.conserved(symmetric), rel=1e-12)


# -- moments and profiles -------------------------------------------------------------------------


def test_symmetric_density_mean():
    grid = hydro.GridSpec(-10.0, 14.0, 1024)
    f = _field(grid, 2.0, 1.0, 2.0, 0.5)
    a1, a2, _, _ = hydro.moments(f)
    assert a1 == pytest.approx(2.0, abs=1e-12) and a2 == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("params", [ModelParams(0, 1, 1, 1), ModelParams(0.3, 1.7, 0.6, 1.9)])
def test_spectral_moments_match_closed_forms(params):
    init = InitialMoments(0.5, -0.5, 1.0, 0.6)
    grid = hydro.default_grid(params, init, 10.0)
    f0 = _field(grid, 0.5, 1.0, -0.5, math.sqrt(0.6))
    f = hydro.spectral_solve(f0, params, 10.0)
    num = hydro.moments(f)
    ref = [*mean_trajectories(params, init, 10.0), *variance_trajectories(params, init, 10.0)]
    np.testing.assert_allclose(num, ref, rtol=1e-4)


def test_gaussian_is_fixed_point_of_rescaling():
    grid = hydro.GridSpec(-20.0, 20.0, 8192)
    f = _field(grid, 1.0, 2.0, 1.0, 2.0)
    assert hydro.profile_distance(f, 1) < 1e-4


def test_profile_converges(symmetric):
    init = InitialMoments(0.0, 0.0, 1.0, 1.0)
    grid = hydro.default_grid(symmetric, init, 50.0)
    f0 = _field(grid)
    dist = [hydro.profile_distance(hydro.spectral_solve(f0, symmetric, t), 1) for t in (10.0, 20.0, 50.0)]
    assert dist[-1] < 0.02
    assert dist[1] <= 1.1 * dist[0] and dist[2] <= 1.1 * dist[1]


def test_profile_normalised(symmetric):
    init = InitialMoments(0.0, 0.0, 1.0, 1.0)
    f0 = _field(hydro.default_grid(symmetric, init, 20.0))
    f = hydro.spectral_solve(f0, symmetric, 20.0)
    u = np.linspace(-6, 6, 2401)
    prof = hydro.rescaled_profile(f, 2, u)
    assert trapezoid(prof, u) == pytest.approx(1.0, abs=1e-3)


def test_default_grid_holds_support(asymmetric):
    init = InitialMoments(0.0, 1.0, 0.5, 0.5)
    grid = hydro.default_grid(asymmetric, init, 30.0)
    assert grid.cells >= 2048 and grid.cells & (grid.cells - 1) == 0
    f = hydro.spectral_solve(_field(grid, 0.0, math.sqrt(0.5), 1.0, math.sqrt(0.5)), asymmetric, 30.0)
    assert hydro.edge_mass(f) < 1e-8
