"""Initial-data generators for positive solution pairs (u, v).

Four named generators, separately configurable for u and v:

* constant: spatially constant samples;
* single_mode: offset plus one Fourier mode (torus) or one real spherical
  harmonic (CP^1);
* random_bandlimited: offset plus a seeded, band-limited random field with
  Gaussian mode damping, normalized to unit sup norm before scaling;
* gaussian (torus u only): the periodized heat kernel, carried as an exact
  solution with closed-form log-derivatives.  This is the sharp-equality
  datum: generic grid differentiation of its log-density is hopeless at
  small t (the log has O(1/t) curvature concentrated near the cut locus),
  so the kernel supplies analytic jets instead and every downstream
  operator dispatches on them.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import ScalarField
from .geometry import ManifoldModel, ModelKind
from .grids import CP1Grid, Grid, TorusGrid, make_grid

__all__ = [
    "GENERATORS",
    "TorusHeatKernel",
    "make_field",
    "make_initial_pair",
]

GENERATORS = ("constant", "single_mode", "gaussian", "random_bandlimited")


def _axis_view(arr: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = arr.shape[0]
    return arr.reshape(shape)


class _AxisTheta:
    """Wrapped-Gaussian factor theta(xi; t) = sum_m exp(-a (xi + m p)^2 / t)
    along one real axis, with stable log-derivative ratios.

    Everything is computed relative to the nearest image, so the ratios
    theta'/theta etc. keep full relative accuracy even where theta itself
    is exponentially small.
    """

    def __init__(self, coords: np.ndarray, period: float, center: float, a: float, t: float):
        xi0 = (coords - center + 0.5 * period) % period - 0.5 * period
        m_max = int(math.ceil(math.sqrt(92.0 * t / a) / period + 1.0))
        images = np.arange(-m_max, m_max + 1) * period
        xi = xi0[:, None] + images[None, :]
        rel = np.exp(-a * (xi**2 - xi0[:, None] ** 2) / t)
        norm = np.sum(rel, axis=1)
        q1 = -2.0 * a * xi / t
        c = 2.0 * a / t
        r1 = np.sum(q1 * rel, axis=1) / norm
        r2 = np.sum((q1**2 - c) * rel, axis=1) / norm
        r3 = np.sum((q1**3 - 3.0 * c * q1) * rel, axis=1) / norm
        self.log_theta = np.log(norm) - a * xi0**2 / t
        self.l1 = r1
        self.l2 = r2 - r1**2
        self.l3 = r3 - 3.0 * r1 * r2 + 2.0 * r1**3


class TorusLogHeatJet:
    """Closed-form chart derivatives of L = ln u for the periodized kernel.

    Built from per-axis log-derivatives of the separable factors: with
    z_d = x_{2d} + i x_{2d+1}, the gradient is (l1_x - i l1_y)/2, the mixed
    Hessian (l2_x + l2_y)/4 on the diagonal, the holomorphic Hessian
    (l2_x - l2_y)/4, and third derivatives follow the same pattern.
    """

    def __init__(self, grid: TorusGrid, axes: list[_AxisTheta]):
        self.grid = grid
        self.axes = axes

    def _axis_field(self, values_by_axis) -> list[np.ndarray]:
        nd = len(self.grid.shape)
        return [_axis_view(v, a, nd) for a, v in enumerate(values_by_axis)]

    def gradient(self):
        n = self.grid.complex_dimension
        l1 = self._axis_field([ax.l1 for ax in self.axes])
        dz = np.zeros(self.grid.shape + (n,), dtype=complex)
        for d in range(n):
            dz[..., d] = 0.5 * (l1[2 * d] - 1j * l1[2 * d + 1])
        return dz, np.conj(dz)

    def mixed_hessian(self) -> np.ndarray:
        n = self.grid.complex_dimension
        l2 = self._axis_field([ax.l2 for ax in self.axes])
        H = np.zeros(self.grid.shape + (n, n), dtype=complex)
        for d in range(n):
            H[..., d, d] = 0.25 * (l2[2 * d] + l2[2 * d + 1])
        return H

    def holomorphic_hessian(self) -> np.ndarray:
        n = self.grid.complex_dimension
        l2 = self._axis_field([ax.l2 for ax in self.axes])
        S = np.zeros(self.grid.shape + (n, n), dtype=complex)
        # d_z d_z of a separable log: (l2_x - l2_y)/4, the cross term vanishes
        for d in range(n):
            S[..., d, d] = 0.25 * (l2[2 * d] - l2[2 * d + 1])
        return S

    def grad_mixed_hessian(self) -> np.ndarray:
        """D[..., k, i, j] = d_k (d_i d_jbar L); Christoffel-free on the torus."""
        n = self.grid.complex_dimension
        l3 = self._axis_field([ax.l3 for ax in self.axes])
        D = np.zeros(self.grid.shape + (n, n, n), dtype=complex)
        for d in range(n):
            D[..., d, d, d] = 0.125 * (l3[2 * d] - 1j * l3[2 * d + 1])
        return D


class TorusHeatKernel:
    """Exact flow solution u(t) = scale * t^{-n} prod_axes theta(xi_axis; t)."""

    def __init__(self, grid: TorusGrid, a: float, scale: float = 1.0, center=None):
        if not isinstance(grid, TorusGrid):
            raise ValueError("gaussian initial data requires a flat torus")
        self.grid = grid
        self.a = float(a)
        self.scale = float(scale)
        periods = grid.model.periods
        if center is None:
            center = [0.5 * periods[d] for d in range(len(periods)) for _ in range(2)]
        center = [float(c) for c in center]
        if len(center) != 2 * grid.complex_dimension:
            raise ValueError("center needs one coordinate per real axis")
        self.center = center

    def field_at(self, t: float) -> ScalarField:
        if not t > 0:
            raise ValueError("heat kernel defined for t > 0")
        grid = self.grid
        n = grid.complex_dimension
        axes = [
            _AxisTheta(grid.axes[a], grid.model.periods[a // 2], self.center[a], self.a, t)
            for a in range(2 * n)
        ]
        nd = len(grid.shape)
        log_u = math.log(self.scale) - n * math.log(t)
        total = np.zeros(grid.shape)
        for a, ax in enumerate(axes):
            total = total + _axis_view(ax.log_theta, a, nd)
        values = np.exp(total + log_u)
        jet = TorusLogHeatJet(grid, axes)
        return ScalarField(grid, values, real=True, log_jet=jet, exact=self)


# -- spectral random fields ----------------------------------------------------


def _random_bandlimited_torus(grid: TorusGrid, rng, band: int, damping: float) -> np.ndarray:
    N = grid.model.grid_resolution
    modes = np.rint(np.fft.fftfreq(N, 1.0 / N)).astype(int)
    mesh = np.meshgrid(*[modes] * len(grid.shape), indexing="ij")
    m2 = sum(m.astype(float) ** 2 for m in mesh)
    m_inf = np.maximum.reduce([np.abs(m) for m in mesh])
    mask = (m_inf <= band) & (m2 > 0)
    F = np.fft.fftn(rng.standard_normal(grid.shape))
    F = F * mask * np.exp(-damping * (m2 - 1.0))
    f = np.real(np.fft.ifftn(F))
    return f / np.max(np.abs(f))


def _random_bandlimited_cp1(grid: CP1Grid, rng, band: int, damping: float) -> np.ndarray:
    band = min(int(band), grid.lmax)
    alm = np.zeros((grid.lmax + 1, grid.nphi), dtype=complex)
    for l in range(1, band + 1):
        w = math.exp(-damping * (l - 1))
        alm[l, 0] = w * rng.standard_normal()
        for m in range(1, l + 1):
            c = w * (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)
            alm[l, m] = c
            alm[l, -m] = (-1) ** m * np.conj(c)
    f = np.real(grid.sht_synthesis(alm))
    return f / np.max(np.abs(f))


def _single_mode(grid: Grid, params: dict) -> np.ndarray:
    offset = float(params.get("offset", 0.0))
    amp = float(params.get("amplitude", 1.0))
    if isinstance(grid, TorusGrid):
        mode = params.get("mode", [1] + [0] * (len(grid.shape) - 1))
        if len(mode) != len(grid.shape):
            raise ValueError("mode needs one integer per real axis")
        phase = float(params.get("phase", 0.0))
        angle = np.zeros(grid.shape)
        nd = len(grid.shape)
        for a, m in enumerate(mode):
            p = grid.model.periods[a // 2]
            angle = angle + _axis_view(2.0 * np.pi * int(m) * grid.axes[a] / p, a, nd)
        return offset + amp * np.cos(angle + phase)
    assert isinstance(grid, CP1Grid)
    l = int(params.get("l", 2))
    m = int(params.get("m", 0))
    if not 0 <= abs(m) <= l <= grid.lmax:
        raise ValueError("single_mode on CP^1 needs 0 <= |m| <= l <= lmax")
    alm = np.zeros((grid.lmax + 1, grid.nphi), dtype=complex)
    if m == 0:
        alm[l, 0] = 1.0
    else:
        alm[l, abs(m)] = 0.5
        alm[l, -abs(m)] = 0.5 * (-1) ** abs(m)
    f = np.real(grid.sht_synthesis(alm))
    return offset + amp * f / np.max(np.abs(f))


def make_field(
    grid: Grid,
    spec: dict,
    rng,
    a0: float = 1.0,
    t_start: float | None = None,
) -> ScalarField:
    """Build one field from a generator spec {"generator": name, ...params}."""
    params = dict(spec)
    name = params.pop("generator")
    if name == "constant":
        amp = float(params.get("amplitude", 1.0))
        return ScalarField(grid, np.full(grid.shape, amp), real=True)
    if name == "single_mode":
        return ScalarField(grid, _single_mode(grid, params), real=True)
    if name == "random_bandlimited":
        offset = float(params.get("offset", 0.0))
        amp = float(params.get("amplitude", 1.0))
        if isinstance(grid, TorusGrid):
            band = int(params.get("band", 2))
            damping = float(params.get("damping", 1.0))
            f = _random_bandlimited_torus(grid, rng, band, damping)
        else:
            band = int(params.get("band", 4))
            damping = float(params.get("damping", 0.7))
            f = _random_bandlimited_cp1(grid, rng, band, damping)
        return ScalarField(grid, offset + amp * f, real=True)
    if name == "gaussian":
        if not isinstance(grid, TorusGrid):
            raise ValueError("gaussian generator requires a flat torus model")
        if t_start is None or not t_start > 0:
            raise ValueError("gaussian generator needs a positive t_start")
        kernel = TorusHeatKernel(
            grid, a0, scale=float(params.get("scale", 1.0)), center=params.get("center")
        )
        return kernel.field_at(t_start)
    raise ValueError(f"unknown generator {name!r} (choose from {', '.join(GENERATORS)})")


def make_initial_pair(
    model: ManifoldModel,
    u_spec: dict,
    v_spec: dict,
    seed: int,
    a0: float = 1.0,
    t_start: float | None = None,
):
    """Seeded (u0, v0) on the model grid; u and v draw independent streams."""
    grid = make_grid(model)
    if v_spec.get("generator") == "gaussian":
        raise ValueError("gaussian generator is supported for u only")
    u0 = make_field(grid, u_spec, np.random.default_rng([int(seed), 0]), a0, t_start)
    v0 = make_field(grid, v_spec, np.random.default_rng([int(seed), 1]), a0, t_start)
    return u0, v0
