"""Discretized scalar and tensor fields on model-manifold grids.

Field values are dense numpy arrays over the grid shape; tensor fields
append index axes.  Derivative operators are spectral (see grids) and
dispatch to a closed-form "jet" when a field carries one: exact-solution
initial data (the periodized heat kernel) provide analytic derivatives,
which keeps the sharp-equality diagnostics meaningful at times where the
log-density has more curvature than any desk-scale grid can resolve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MetricState, christoffel_at
from .grids import CP1Grid, Grid, TorusGrid

__all__ = [
    "ScalarField",
    "HermitianField",
    "SymmetricField",
    "partials",
    "mixed_hessian",
    "holomorphic_hessian",
    "laplacian",
    "integrate",
    "fd_time_derivative",
    "metric_factor",
]

_REAL_TOL = 1e-12


def _realize(values: np.ndarray, context: str, tol: float = _REAL_TOL) -> np.ndarray:
    """Demote a complex array to real, asserting the imaginary parts are noise."""
    if not np.iscomplexobj(values):
        return np.asarray(values, dtype=float)
    scale = max(1.0, float(np.max(np.abs(values))))
    worst = float(np.max(np.abs(values.imag)))
    if worst > tol * scale:
        raise ValueError(f"{context}: imaginary residue {worst:.3e} exceeds tolerance")
    return np.ascontiguousarray(values.real)


@dataclass(eq=False)
class ScalarField:
    """Samples of a scalar function; real fields store float arrays.

    jet, when present, supplies closed-form chart derivatives of this field
    (methods gradient/mixed_hessian/holomorphic_hessian); log_jet supplies
    the same for ln(field) and is handed to the log-density of a positive
    solution.  exact, when present, is a closed-form evolver (field_at(t))
    that the flow integrator uses instead of mode stepping.  Fields produced
    by spectral synthesis carry none of these.
    """

    grid: Grid
    values: np.ndarray
    real: bool = True
    jet: object | None = None
    log_jet: object | None = None
    exact: object | None = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        self.values = _realize(v, "real-tagged scalar field") if self.real else v.astype(complex)


@dataclass(eq=False)
class HermitianField:
    """Per-node Hermitian matrix M[..., i, j] = M_{i jbar}."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.complex_dimension
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape + (n, n):
            raise ValueError(f"values shape {v.shape} != grid shape + (n, n)")
        self.values = v

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.values - np.conj(np.swapaxes(self.values, -1, -2)))))


@dataclass(eq=False)
class SymmetricField:
    """Per-node complex symmetric matrix M[..., i, j] = M_{ij}."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.complex_dimension
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape + (n, n):
            raise ValueError(f"values shape {v.shape} != grid shape + (n, n)")
        self.values = v

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.values - np.swapaxes(self.values, -1, -2))))


def partials(f: ScalarField):
    """Chart partial derivatives (d_i f, d_ibar f), each of shape grid + (n,)."""
    if f.jet is not None:
        return f.jet.gradient()
    return f.grid.partials_chart(f.values)


def mixed_hessian(f: ScalarField) -> HermitianField:
    """Covariant mixed Hessian nabla_i nabla_jbar f = d_i d_jbar f.

    No Christoffel term arises in the mixed type on a Kahler manifold.  The
    result is hermitized for real input; raw finite-difference composition
    commutes only to truncation order on CP^1.
    """
    if f.jet is not None:
        H = f.jet.mixed_hessian()
    else:
        dz, _ = f.grid.partials_chart(f.values)
        H = f.grid.partials_chart(dz)[1]  # [..., i, j] = d_jbar d_i f
    if f.real:
        H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    return HermitianField(f.grid, H)


def holomorphic_hessian(f: ScalarField, state: MetricState) -> SymmetricField:
    """nabla_i nabla_j f = d_i d_j f - Gamma^k_{ij} d_k f, symmetrized."""
    if f.jet is not None:
        S = f.jet.holomorphic_hessian()
    else:
        dz, _ = f.grid.partials_chart(f.values)
        ddz = f.grid.partials_chart(dz)[0]  # [..., i, j] = d_j d_i f
        gam = christoffel_at(state, f.grid.points)
        S = ddz - np.einsum("...kij,...k->...ij", gam, dz)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    return SymmetricField(f.grid, S)


def metric_factor(grid: Grid, a: float) -> np.ndarray | float:
    """Conformal factor c with g_{i jbar} = c * delta_ij on the grid nodes."""
    if isinstance(grid, TorusGrid):
        return float(a)
    return a / (1.0 + np.abs(grid.points) ** 2) ** 2


def laplacian(f: ScalarField, state: MetricState) -> ScalarField:
    """Scalar Laplacian Delta f = g^{i jbar} d_i d_jbar f."""
    H = mixed_hessian(f).values
    c = metric_factor(f.grid, state.a)
    tr = np.trace(H, axis1=-2, axis2=-1) / c
    if f.real:
        return ScalarField(f.grid, _realize(tr, "laplacian of real field"), real=True)
    return ScalarField(f.grid, tr, real=False)


def integrate(f: ScalarField, state: MetricState) -> float:
    """Integral of f against det(g) times chart Lebesgue measure.

    On CP^1 the density combines with the chart Jacobian to the closed form
    (a/4) sin(theta) dtheta dphi, which the Fejer quadrature integrates
    exactly for band-limited integrands.
    """
    if not f.real:
        raise ValueError("integrate expects a real-tagged field")
    grid = f.grid
    if isinstance(grid, TorusGrid):
        n = grid.complex_dimension
        return float(np.real(grid.chart_integral(f.values))) * state.a**n
    assert isinstance(grid, CP1Grid)
    return 0.25 * state.a * float(np.real(grid.sphere_integral(f.values)))


def fd_time_derivative(snapshots, dt: float, times=None):
    """Central difference (f(t+dt) - f(t-dt)) / (2 dt) from three snapshots.

    snapshots = (f(t-dt), f(t), f(t+dt)) on one grid; times, when given,
    must be equally spaced with spacing dt.
    """
    if len(snapshots) != 3:
        raise ValueError("need exactly three snapshots: t-dt, t, t+dt")
    lo, mid, hi = snapshots
    if not (lo.grid.compatible(mid.grid) and lo.grid.compatible(hi.grid)):
        raise ValueError("snapshots live on mismatched grids")
    if type(lo) is not type(hi):
        raise ValueError("snapshots have mismatched field types")
    if times is not None:
        t0, t1, t2 = times
        if abs((t1 - t0) - dt) > 1e-12 * max(1.0, abs(dt)) or abs((t2 - t1) - dt) > 1e-12 * max(1.0, abs(dt)):
            raise ValueError("snapshot times are not equally spaced by dt")
    vals = (hi.values - lo.values) / (2.0 * dt)
    if isinstance(lo, ScalarField):
        return ScalarField(lo.grid, vals, real=bool(lo.real and hi.real))
    return type(lo)(lo.grid, vals)
