"""Field containers and derivative operators against hand-derived values."""

import numpy as np
import pytest

from lyhlab.fields import (
    HermitianField,
    ScalarField,
    SymmetricField,
    fd_time_derivative,
    holomorphic_hessian,
    integrate,
    laplacian,
    metric_factor,
    mixed_hessian,
    partials,
)
from lyhlab.geometry import flat_torus, fubini_study_cp1, metric_state
from lyhlab.grids import make_grid


def torus_state(a=1.0, N=16, n=1, periods=None):
    model = flat_torus(n, periods, N)
    return make_grid(model), metric_state(model, a, 0.0, 0.0)


def cp1_state(a=1.0, N=32):
    model = fubini_study_cp1(N)
    return make_grid(model), metric_state(model, a, 0.0, 0.0)


def test_scalar_field_validation():
    grid, _ = torus_state()
    with pytest.raises(ValueError, match="shape"):
        ScalarField(grid, np.zeros((3, 3)))
    with pytest.raises(ValueError, match="imaginary residue"):
        ScalarField(grid, np.full(grid.shape, 1.0 + 0.5j), real=True)
    f = ScalarField(grid, np.full(grid.shape, 1.0 + 1e-15j), real=True)
    assert f.values.dtype == np.float64
    g = ScalarField(grid, np.full(grid.shape, 1.0 + 0.5j), real=False)
    assert g.values.dtype == np.complex128


def test_matrix_field_validation():
    grid, _ = torus_state()
    with pytest.raises(ValueError, match="shape"):
        HermitianField(grid, np.zeros(grid.shape))
    h = HermitianField(grid, np.full(grid.shape + (1, 1), 2.0 + 1.0j))
    assert h.hermiticity_defect() == pytest.approx(2.0)
    s = SymmetricField(grid, np.full(grid.shape + (1, 1), 1.0j))
    assert s.symmetry_defect() == 0.0


def test_torus_laplacian_quarter_euclidean():
    grid, state = torus_state(a=1.0)
    x = grid.points.real
    f = ScalarField(grid, 2.0 + np.cos(2 * np.pi * x))
    # Delta = (1/4) Delta_eucl at a = 1: eigenvalue -pi^2 on cos(2 pi x)
    lap = laplacian(f, state).values
    assert np.allclose(lap, -np.pi**2 * np.cos(2 * np.pi * x), atol=1e-11)
    _, state2 = torus_state(a=2.0)
    lap2 = laplacian(f, state2).values
    assert np.allclose(lap2, 0.5 * lap, atol=1e-11)


def test_torus_hessians_on_plane_wave():
    grid, state = torus_state()
    x, y = grid.points.real, grid.points.imag
    f = ScalarField(grid, np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y))
    mixed = mixed_hessian(f).values[..., 0, 0]
    holo = holomorphic_hessian(f, state).values[..., 0, 0]
    # d_z d_zbar f = (f_xx + f_yy)/4;  d_z d_z f = (f_xx - f_yy - 2i f_xy)/4
    fxx = -4 * np.pi**2 * f.values
    fyy = -4 * np.pi**2 * f.values
    fxy = 4 * np.pi**2 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    assert np.allclose(mixed, 0.25 * (fxx + fyy), atol=1e-10)
    assert np.allclose(holo, 0.25 * (fxx - fyy - 2j * fxy), atol=1e-10)


def test_cp1_cos_theta_is_laplace_eigenfunction():
    # cos(theta) = (1 - |z|^2)/(1 + |z|^2) satisfies Delta f = -(2/a) f
    grid, state = cp1_state(a=1.0, N=64)
    ct = np.broadcast_to(grid.x[:, None], grid.shape).copy()
    f = ScalarField(grid, ct)
    assert np.max(np.abs(laplacian(f, state).values + 2.0 * ct)) < 1e-7
    _, state3 = cp1_state(a=3.0, N=64)
    assert np.max(np.abs(laplacian(f, state3).values + (2.0 / 3.0) * ct)) < 1e-7


def test_cp1_cos_theta_hessians():
    # nabla nabla cos(theta) = 0 (holomorphy potential); the mixed Hessian
    # is -2 cos(theta) g_ref
    grid, state = cp1_state(a=1.0, N=64)
    ct = np.broadcast_to(grid.x[:, None], grid.shape).copy()
    f = ScalarField(grid, ct)
    holo = holomorphic_hessian(f, state).values[..., 0, 0]
    assert np.max(np.abs(holo)) < 1e-10
    mixed = mixed_hessian(f).values[..., 0, 0]
    gref = metric_factor(grid, 1.0)
    assert np.max(np.abs(mixed + 2.0 * ct * gref)) < 1e-10


def test_partials_match_grid_engine():
    grid, _ = torus_state()
    f = ScalarField(grid, np.cos(2 * np.pi * grid.points.real))
    dz, dzb = partials(f)
    dz2, dzb2 = grid.partials_chart(f.values)
    assert np.array_equal(dz, dz2) and np.array_equal(dzb, dzb2)


def test_integrate_volume_normalization():
    grid, state = torus_state(a=2.0, periods=(1.5,))
    one = ScalarField(grid, np.ones(grid.shape))
    assert integrate(one, state) == pytest.approx(1.5**2 * 2.0, rel=1e-13)

    gridc, statec = cp1_state(a=2.0)
    onec = ScalarField(gridc, np.ones(gridc.shape))
    assert integrate(onec, statec) == pytest.approx(2.0 * np.pi, rel=1e-13)
    with pytest.raises(ValueError, match="real"):
        integrate(ScalarField(gridc, np.ones(gridc.shape, complex), real=False), statec)


def test_integrate_orthogonality_kills_modes():
    grid, state = torus_state()
    f = ScalarField(grid, 1.0 + np.cos(2 * np.pi * grid.points.real))
    assert integrate(f, state) == pytest.approx(1.0, abs=1e-14)


def test_metric_factor_values():
    grid, _ = torus_state()
    assert metric_factor(grid, 2.5) == 2.5
    gridc, _ = cp1_state()
    fac = metric_factor(gridc, 2.0)
    assert fac.shape == gridc.shape
    assert np.allclose(fac, 2.0 / (1.0 + np.abs(gridc.points) ** 2) ** 2)


def test_fd_time_derivative_quadratic_exact():
    grid, _ = torus_state()
    base = np.cos(2 * np.pi * grid.points.real)

    def snap(t):
        return ScalarField(grid, (t * t) * base)

    dt = 0.01
    d = fd_time_derivative([snap(0.1 - dt), snap(0.1), snap(0.1 + dt)], dt)
    assert np.allclose(d.values, 0.2 * base, atol=1e-13)
    d2 = fd_time_derivative(
        [snap(0.1 - dt), snap(0.1), snap(0.1 + dt)], dt, times=(0.09, 0.1, 0.11)
    )
    assert np.allclose(d2.values, d.values)


def test_fd_time_derivative_matrix_fields():
    grid, _ = torus_state()

    def hsnap(t):
        return HermitianField(grid, np.full(grid.shape + (1, 1), t * t, dtype=complex))

    d = fd_time_derivative([hsnap(0.2 - 0.01), hsnap(0.2), hsnap(0.2 + 0.01)], 0.01)
    assert isinstance(d, HermitianField)
    assert np.allclose(d.values, 0.4, atol=1e-13)


def test_fd_time_derivative_validation():
    grid, _ = torus_state()
    other = make_grid(flat_torus(1, (1.0,), 32))
    f = ScalarField(grid, np.zeros(grid.shape))
    g = ScalarField(other, np.zeros(other.shape))
    with pytest.raises(ValueError, match="three snapshots"):
        fd_time_derivative([f, f], 0.01)
    with pytest.raises(ValueError, match="mismatched grids"):
        fd_time_derivative([f, f, g], 0.01)
    with pytest.raises(ValueError, match="mismatched field types"):
        fd_time_derivative([f, f, HermitianField(grid, np.zeros(grid.shape + (1, 1)))], 0.01)
    with pytest.raises(ValueError, match="equally spaced"):
        fd_time_derivative([f, f, f], 0.01, times=(0.0, 0.01, 0.03))
