"""Closed-form geometry against a symbolic oracle and frozen constants."""

import math

import numpy as np
import pytest
import sympy

from lyhlab.geometry import (
    ExtinctionError,
    ManifoldModel,
    ModelKind,
    bisectional_infimum,
    christoffel_at,
    curvature_at,
    curvature_symmetry_residual,
    einstein_constant,
    extinction_time,
    flat_torus,
    fubini_study_cp1,
    inverse_metric_at,
    krf_scale,
    metric_at,
    metric_state,
    sphere_to_chart,
    volume_density_at,
)

Z0 = 0.3 + 0.7j


def _sympy_cp1_oracle(a_val: float, z_val: complex):
    """Christoffel, curvature, Ricci and scalar from the defining formulas.

    z and zbar are treated as independent holomorphic coordinates; all four
    quantities follow from derivatives of g = a / (1 + z zbar)^2 alone.
    """
    z, zb, a = sympy.symbols("z zbar a")
    g = a / (1 + z * zb) ** 2
    gamma = sympy.diff(g, z) / g
    riem = -sympy.diff(g, z, zb) + sympy.diff(g, z) * sympy.diff(g, zb) / g
    ricci = -sympy.diff(sympy.log(g), z, zb)
    scalar = ricci / g
    subs = {z: z_val, zb: complex(z_val).conjugate(), a: a_val}
    return tuple(
        complex(expr.subs(subs).evalf()) for expr in (gamma, riem, ricci, scalar)
    )


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_cp1_curvature_matches_symbolic_oracle(a):
    state = metric_state(fubini_study_cp1(), a, 0.0, 0.0)
    gamma_o, riem_o, ricci_o, scalar_o = _sympy_cp1_oracle(a, Z0)

    gamma = christoffel_at(state, Z0)[0, 0, 0]
    data = curvature_at(state, Z0)
    assert gamma == pytest.approx(gamma_o, rel=1e-12)
    assert data.riemann[0, 0, 0, 0] == pytest.approx(riem_o, rel=1e-12)
    assert data.ricci[0, 0] == pytest.approx(ricci_o, rel=1e-12)
    assert data.scalar[()] == pytest.approx(scalar_o.real, rel=1e-12)
    assert data.scalar[()] == pytest.approx(2.0 / a, rel=1e-12)


def test_cp1_frozen_point_values():
    # at z = 0.3 + 0.7i: |z|^2 = 0.58, Ric = 2/(1.58)^2, independent of a
    state = metric_state(fubini_study_cp1(), 2.0, 0.0, 0.0)
    data = curvature_at(state, Z0)
    assert data.ricci[0, 0] == pytest.approx(0.8011536612722321, rel=1e-13)
    gamma = christoffel_at(state, Z0)[0, 0, 0]
    assert gamma == pytest.approx((-2.0 * Z0.conjugate()) / 1.58, rel=1e-13)


def test_cp1_einstein_relation_pointwise():
    state = metric_state(fubini_study_cp1(), 1.7, 0.0, 0.0)
    pts = sphere_to_chart([0.3, 1.1, 2.5], [0.0, 1.0, 4.0])
    g = metric_at(state, pts)
    data = curvature_at(state, pts)
    assert np.allclose(data.ricci, (2.0 / state.a) * g, rtol=1e-13)
    # Riemann is a homothety of the reference tensor; Ricci is a-independent
    ref = curvature_at(metric_state(fubini_study_cp1(), 1.0, 0.0, 0.0), pts)
    assert np.allclose(data.riemann, state.a * ref.riemann, rtol=1e-13)
    assert np.allclose(data.ricci, ref.ricci, rtol=1e-13)


def test_curvature_symmetries_hold_on_batch():
    state = metric_state(fubini_study_cp1(), 1.3, 0.0, 0.0)
    pts = sphere_to_chart(np.linspace(0.1, 3.0, 7), np.linspace(0.0, 6.0, 7))
    assert curvature_symmetry_residual(curvature_at(state, pts)) < 1e-14


def test_torus_is_flat_and_translation_invariant():
    state = metric_state(flat_torus(), 1.0, 0.0, 0.0)
    pts = np.array([0.1 + 0.2j, 0.7 + 0.9j])
    data = curvature_at(state, pts)
    assert np.all(data.riemann == 0) and np.all(data.ricci == 0) and np.all(data.scalar == 0)
    assert np.all(christoffel_at(state, pts) == 0)
    assert np.allclose(metric_at(state, pts)[..., 0, 0], 1.0)
    assert bisectional_infimum(state, 5) == 0.0


def test_bisectional_curvature_is_constant_two_over_a():
    # with g-unit vectors the CP^1 bisectional curvature is 2/a at every point
    state = metric_state(fubini_study_cp1(), 2.0, 0.0, 0.0)
    val = bisectional_infimum(state, 25, seed=1)
    assert val == pytest.approx(1.0, rel=1e-12)
    assert bisectional_infimum(state, 25, seed=1) == val


def test_einstein_constants():
    assert einstein_constant(flat_torus()) == 0.0
    assert einstein_constant(fubini_study_cp1()) == 2.0


def test_extinction_and_scale():
    cp1 = fubini_study_cp1()
    assert extinction_time(cp1, 1.0, 1.0) == pytest.approx(0.5)
    assert extinction_time(cp1, 3.0, 0.5) == pytest.approx(3.0)
    assert math.isinf(extinction_time(cp1, 1.0, 0.0))
    assert math.isinf(extinction_time(flat_torus(), 1.0, 1.0))

    assert krf_scale(cp1, 1.0, 1.0, 0.2) == pytest.approx(0.6)
    assert krf_scale(flat_torus(), 2.0, 1.0, 5.0) == 2.0
    with pytest.raises(ExtinctionError, match="extinct"):
        krf_scale(cp1, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError, match="a0"):
        krf_scale(cp1, 0.0, 1.0, 0.1)
    with pytest.raises(ValueError, match="nonnegative"):
        krf_scale(cp1, 1.0, 1.0, -0.1)
    with pytest.raises(ValueError, match="nonnegative"):
        krf_scale(cp1, 1.0, -1.0, 0.1)


def test_metric_state_window():
    st = metric_state(fubini_study_cp1(), 1.0, 1.0, 0.25)
    assert st.a == pytest.approx(0.5)
    assert st.t == 0.25 and st.epsilon == 1.0
    with pytest.raises(ExtinctionError):
        metric_state(fubini_study_cp1(), 1.0, 1.0, 0.6)


def test_model_validation_errors():
    with pytest.raises(ValueError, match="periods"):
        ManifoldModel(ModelKind.FLAT_TORUS, 2, (1.0,), 64)
    with pytest.raises(ValueError, match="positive"):
        flat_torus(1, (-1.0,))
    with pytest.raises(ValueError, match="periods"):
        ManifoldModel(ModelKind.FUBINI_STUDY_CP1, 1, (1.0,), 64)
    with pytest.raises(ValueError, match="complex_dimension"):
        ManifoldModel(ModelKind.FLAT_TORUS, 3, (1.0, 1.0, 1.0), 64)
    with pytest.raises(ValueError, match="even"):
        flat_torus(resolution=63)
    with pytest.raises(ValueError, match="even"):
        fubini_study_cp1(resolution=4)
    with pytest.raises(ValueError, match="finite"):
        curvature_at(metric_state(flat_torus(), 1.0, 0.0, 0.0), complex("inf"))


def test_inverse_metric_and_volume_density():
    state = metric_state(fubini_study_cp1(), 2.0, 0.0, 0.0)
    g = metric_at(state, Z0)
    ginv = inverse_metric_at(state, Z0)
    assert (g[0, 0] * ginv[0, 0]) == pytest.approx(1.0, rel=1e-14)
    assert volume_density_at(state, Z0) == pytest.approx(g[0, 0].real, rel=1e-14)

    torus2 = flat_torus(2, (1.0, 1.0))
    st2 = metric_state(torus2, 3.0, 0.0, 0.0)
    pt = np.array([0.1 + 0.2j, 0.3 + 0.4j])
    assert np.allclose(metric_at(st2, pt), 3.0 * np.eye(2))
    assert volume_density_at(st2, pt) == pytest.approx(9.0)


def test_sphere_to_chart_reference_points():
    assert sphere_to_chart(np.pi / 2, 0.0) == pytest.approx(1.0)
    assert sphere_to_chart(np.pi / 2, np.pi / 2) == pytest.approx(1j)
    assert abs(sphere_to_chart(0.0, 1.3)) == pytest.approx(0.0)
