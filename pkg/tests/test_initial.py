"""Seeded initial-data generators."""

import numpy as np
import pytest

from lyhlab.flow import Schedule, evolve_pair
from lyhlab.fields import ScalarField
from lyhlab.geometry import flat_torus, fubini_study_cp1
from lyhlab.grids import make_grid
from lyhlab.initial import GENERATORS, TorusHeatKernel, make_field, make_initial_pair

TORUS = flat_torus(1, (1.0,), 32)
CP1 = fubini_study_cp1(32)


def test_generator_registry():
    assert GENERATORS == ("constant", "single_mode", "gaussian", "random_bandlimited")


def test_constant_and_unknown():
    grid = make_grid(TORUS)
    f = make_field(grid, {"generator": "constant", "amplitude": 2.5}, None)
    assert np.all(f.values == 2.5)
    with pytest.raises(ValueError, match="unknown generator 'perlin'"):
        make_field(grid, {"generator": "perlin"}, None)


def test_single_mode_torus_closed_form():
    grid = make_grid(TORUS)
    spec = {"generator": "single_mode", "mode": [2, 0], "amplitude": 0.7, "offset": 1.5}
    f = make_field(grid, spec, None)
    x = grid.points.real
    assert np.allclose(f.values, 1.5 + 0.7 * np.cos(4 * np.pi * x), atol=1e-14)
    shifted = make_field(grid, {**spec, "phase": np.pi / 2}, None)
    assert np.allclose(shifted.values, 1.5 - 0.7 * np.sin(4 * np.pi * x), atol=1e-14)
    with pytest.raises(ValueError, match="one integer per real axis"):
        make_field(grid, {"generator": "single_mode", "mode": [1]}, None)


def test_single_mode_cp1_is_normalized_harmonic():
    grid = make_grid(CP1)
    f = make_field(grid, {"generator": "single_mode", "l": 1, "m": 0, "amplitude": 0.5}, None)
    # l=1, m=0 is proportional to cos(theta); normalized so max |f| = amplitude
    ct = np.broadcast_to(grid.x[:, None], grid.shape)
    assert np.max(np.abs(f.values)) == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(f.values, 0.5 * ct / np.max(np.abs(ct)), atol=1e-12)
    with pytest.raises(ValueError, match="0 <= \\|m\\| <= l <= lmax"):
        make_field(grid, {"generator": "single_mode", "l": grid.lmax + 1}, None)


@pytest.mark.parametrize("model", [TORUS, CP1], ids=["torus", "cp1"])
def test_random_bandlimited_normalization(model):
    grid = make_grid(model)
    rng = np.random.default_rng(11)
    f = make_field(grid, {"generator": "random_bandlimited", "band": 2}, rng)
    assert np.max(np.abs(f.values)) == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(11)
    g = make_field(
        grid,
        {"generator": "random_bandlimited", "band": 2, "amplitude": 0.25, "offset": 1.0},
        rng,
    )
    assert np.allclose(g.values, 1.0 + 0.25 * f.values, atol=1e-13)


def test_random_bandlimited_band_is_respected():
    grid = make_grid(TORUS)
    f = make_field(grid, {"generator": "random_bandlimited", "band": 3}, np.random.default_rng(5))
    modes = grid.to_modes(f.values)
    k = np.rint(np.fft.fftfreq(32, 1.0 / 32)).astype(int)
    kk = np.meshgrid(k, k, indexing="ij")
    outside = np.maximum(np.abs(kk[0]), np.abs(kk[1])) > 3
    assert np.max(np.abs(modes[outside])) < 1e-13 * np.max(np.abs(modes))


def test_pair_determinism_and_independent_streams():
    spec_u = {"generator": "random_bandlimited", "band": 2, "offset": 1.0, "amplitude": 0.25}
    spec_v = {"generator": "random_bandlimited", "band": 2, "amplitude": 0.4}
    u1, v1 = make_initial_pair(TORUS, spec_u, spec_v, seed=7)
    u2, v2 = make_initial_pair(TORUS, spec_u, spec_v, seed=7)
    assert np.array_equal(u1.values, u2.values)
    assert np.array_equal(v1.values, v2.values)
    u3, _ = make_initial_pair(TORUS, spec_u, spec_v, seed=8)
    assert not np.array_equal(u1.values, u3.values)
    # same generator spec, but u and v draw from distinct substreams
    same, also = make_initial_pair(TORUS, spec_v, spec_v, seed=7)
    assert not np.array_equal(same.values, also.values)


def test_gaussian_kernel_constraints_and_exactness():
    grid = make_grid(TORUS)
    with pytest.raises(ValueError, match="positive t_start"):
        make_field(grid, {"generator": "gaussian"}, None)
    with pytest.raises(ValueError, match="flat torus"):
        make_field(make_grid(CP1), {"generator": "gaussian"}, None, t_start=0.01)
    with pytest.raises(ValueError, match="supported for u only"):
        make_initial_pair(TORUS, {"generator": "constant"}, {"generator": "gaussian"}, 0)

    u0 = make_field(grid, {"generator": "gaussian", "scale": 1.0}, None, t_start=0.002)
    assert u0.exact is not None and u0.log_jet is not None
    assert float(np.min(u0.values)) > 0
    # evolving the field reproduces the kernel evaluated at the later time
    v0 = ScalarField(grid, np.zeros(grid.shape))
    traj = evolve_pair(TORUS, 0.0, u0, v0, Schedule(0.002, 0.01, 4, 1, 1e-5))
    direct = TorusHeatKernel(grid, 1.0).field_at(0.01)
    assert np.allclose(traj.u[-1].values, direct.values, rtol=1e-12)
    # mass of the periodized kernel equals the free-space mass pi t / a ... no:
    # int exp(-a r^2 / t) dx dy = pi t / a, times scale/t^n = pi / a
    from lyhlab.fields import integrate
    from lyhlab.geometry import metric_state

    state = metric_state(TORUS, 1.0, 0.0, 0.01)
    assert integrate(traj.u[-1], state) == pytest.approx(np.pi, rel=1e-12)


def test_gaussian_center_validation():
    grid = make_grid(TORUS)
    with pytest.raises(ValueError, match="one coordinate per real axis"):
        TorusHeatKernel(grid, 1.0, center=[0.5])
    off = TorusHeatKernel(grid, 1.0, center=[0.25, 0.75]).field_at(0.005)
    i = np.unravel_index(np.argmax(off.values), off.values.shape)
    assert (grid.axes[0][i[0]], grid.axes[1][i[1]]) == (0.25, 0.75)
