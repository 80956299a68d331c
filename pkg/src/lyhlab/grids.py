"""Sample grids and spectral differentiation engines for the model manifolds.

Torus grids are uniform and periodic along every real axis; derivatives are
Fourier-spectral, hence exact for band-limited data.  CP^1 uses a
latitude-longitude grid offset from both poles (theta_j = (j + 1/2) pi / N,
the Chebyshev/Fejer nodes in cos theta): Fourier differentiation in phi,
8th-order centered stencils in theta with per-phi-mode parity ghost rows,
and an exact spherical-harmonic transform for the heat semigroup.

The parity rule used for the theta ghosts: the phi-mode-m component of any
smooth single-valued function on the sphere extends across the poles as
f_m(-theta) = (-1)^m f_m(theta) and f_m(pi + d) = (-1)^m f_m(pi - d).
Chart derivatives like d_z f are themselves single-valued functions on the
punctured sphere with smooth extensions, so the rule applies at every
composition depth.
"""

from __future__ import annotations

import functools

import numpy as np

from .geometry import ManifoldModel, ModelKind, sphere_to_chart

__all__ = ["Grid", "TorusGrid", "CP1Grid", "make_grid"]

# 8th-order centered first-derivative weights for unit spacing, offsets
# +1..+4; the stencil is antisymmetric.
_D1_W = np.array([4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0])


def _fejer1_weights(n: int) -> np.ndarray:
    """Fejer's first quadrature rule on the Chebyshev nodes x_j = cos theta_j.

    Integrates polynomials of degree <= n-1 exactly over [-1, 1]; combined
    with theta_j = (j + 1/2) pi / n this is the quadrature that makes the
    spherical-harmonic analysis below exact up to l = n/2 - 1.
    """
    theta = (np.arange(n) + 0.5) * (np.pi / n)
    m = np.arange(1, n // 2 + 1)
    w = 1.0 - 2.0 * np.sum(np.cos(2.0 * np.outer(theta, m)) / (4.0 * m**2 - 1.0), axis=1)
    return (2.0 / n) * w


def _legendre_table(lmax: int, x: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre values P[l, m, j] at x_j, m >= 0.

    Spherical-harmonic normalization with the Condon-Shortley phase:
    Y_lm = P[l, m] * exp(i m phi) gives an orthonormal basis of L^2(S^2).
    Standard three-term recurrences, stable for the desk-scale l used here.
    """
    nx = len(x)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    P = np.zeros((lmax + 1, lmax + 1, nx))
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, lmax + 1):
        P[m, m] = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_t * P[m - 1, m - 1]
    for m in range(lmax + 1):
        if m + 1 <= lmax:
            P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


class Grid:
    """Shared surface: node coordinates plus a differentiation plan."""

    model: ManifoldModel
    shape: tuple
    plan: str

    def compatible(self, other: "Grid") -> bool:
        return self is other or (self.model == other.model and self.shape == other.shape)

    @property
    def complex_dimension(self) -> int:
        return self.model.complex_dimension

    def partials_chart(self, values: np.ndarray):  # pragma: no cover - interface
        raise NotImplementedError


class TorusGrid(Grid):
    """Uniform periodic grid on C^n / lattice with full-FFT transforms.

    Real axes are ordered (x_1, y_1[, x_2, y_2]); axis d of the value
    arrays is real axis d.  Trailing tensor-component axes are allowed on
    every operation.
    """

    plan = "torus-fft"

    def __init__(self, model: ManifoldModel):
        n = model.complex_dimension
        N = model.grid_resolution
        self.model = model
        self.shape = (N,) * (2 * n)
        self.axes = []
        self.wavenumbers = []
        self.wavenumbers_d1 = []  # Nyquist zeroed: odd-order derivatives
        for d in range(n):
            p = model.periods[d]
            coord = np.arange(N) * (p / N)
            k = 2.0 * np.pi * np.fft.fftfreq(N, d=p / N)
            kd = k.copy()
            kd[N // 2] = 0.0
            for _ in range(2):  # x and y axes of this C factor
                self.axes.append(coord)
                self.wavenumbers.append(k)
                self.wavenumbers_d1.append(kd)
        self.cell_volume = float(np.prod([(p / N) ** 2 for p in model.periods]))
        if n == 1:
            self.points = self.axes[0][:, None] + 1j * self.axes[1][None, :]
        else:
            mesh = np.meshgrid(*self.axes, indexing="ij")
            self.points = np.stack(
                [mesh[2 * d] + 1j * mesh[2 * d + 1] for d in range(n)], axis=-1
            )
        sym = np.zeros(self.shape)
        for axis, k in enumerate(self.wavenumbers):
            shape1 = [1] * (2 * n)
            shape1[axis] = N
            sym = sym + (k**2).reshape(shape1)
        # reference scalar Laplacian symbol (metric scale a = 1)
        self.lap_symbol_ref = -0.25 * sym

    def partial_axis(self, values: np.ndarray, axis: int) -> np.ndarray:
        F = np.fft.fft(values, axis=axis)
        k = self.wavenumbers_d1[axis]
        shape1 = [1] * values.ndim
        shape1[axis] = len(k)
        return np.fft.ifft(1j * k.reshape(shape1) * F, axis=axis)

    def partials_chart(self, values: np.ndarray):
        """Chart partials (d_{z_i} f, d_{zbar_i} f), derivative axis appended last."""
        n = self.complex_dimension
        dz = np.empty(values.shape + (n,), dtype=complex)
        dzb = np.empty(values.shape + (n,), dtype=complex)
        for d in range(n):
            dx = self.partial_axis(values, 2 * d)
            dy = self.partial_axis(values, 2 * d + 1)
            dz[..., d] = 0.5 * (dx - 1j * dy)
            dzb[..., d] = 0.5 * (dx + 1j * dy)
        return dz, dzb

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values, axes=range(2 * self.complex_dimension))

    def from_modes(self, modes: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(modes, axes=range(2 * self.complex_dimension))

    def chart_integral(self, values: np.ndarray) -> complex:
        """Lebesgue integral over the fundamental domain (trapezoid = exact)."""
        return complex(np.sum(values)) * self.cell_volume


class CP1Grid(Grid):
    """Latitude-longitude grid on CP^1 avoiding both poles.

    theta_j = (j + 1/2) pi / N, phi_k = 2 pi k / N; chart coordinate
    z = tan(theta/2) exp(i phi).  Carries the spherical-harmonic transform
    tables (exact for l <= lmax = N/2 - 1) and the theta-stencil machinery.
    """

    plan = "cp1-sht-fd8"

    def __init__(self, model: ManifoldModel):
        N = model.grid_resolution
        self.model = model
        self.ntheta = N
        self.nphi = N
        self.shape = (N, N)
        self.lmax = N // 2 - 1
        self.h_theta = np.pi / N
        self.theta = (np.arange(N) + 0.5) * self.h_theta
        self.phi = np.arange(N) * (2.0 * np.pi / N)
        self.x = np.cos(self.theta)
        self.quad_w = _fejer1_weights(N)
        self.mvals = np.rint(np.fft.fftfreq(N, 1.0 / N)).astype(int)
        self.parity = np.where(self.mvals % 2 == 0, 1.0, -1.0)
        self.legendre = _legendre_table(self.lmax, self.x)
        # Legendre table in fft column order with signed m folded in:
        # P_l^{-m} = (-1)^m P_l^m.  Columns with |m| > lmax stay zero (those
        # phi modes are outside the spherical-harmonic band).
        PT = np.zeros((self.lmax + 1, N, N))
        for col, m in enumerate(self.mvals):
            am = abs(m)
            if am <= self.lmax:
                sign = -1.0 if (m < 0 and am % 2) else 1.0
                PT[:, col, :] = sign * self.legendre[:, am, :]
        self.PT = PT
        ls = np.arange(self.lmax + 1.0)
        # reference Laplacian eigenvalues (metric scale a = 1)
        self.l_eigs_ref = -ls * (ls + 1.0)
        rho = np.tan(self.theta / 2.0)
        self.chart_A = 1.0 / (1.0 + rho**2)
        self.chart_B = 1.0 / (2.0 * rho)
        self.points = sphere_to_chart(self.theta[:, None], self.phi[None, :])
        self.phase_neg = np.exp(-1j * self.phi)

    # -- theta differentiation ------------------------------------------------

    def _dtheta_mspace(self, Fm: np.ndarray) -> np.ndarray:
        """d/dtheta of per-phi-mode profiles using parity ghost rows."""
        nth = self.ntheta
        extra = (1,) * (Fm.ndim - 2)
        par = self.parity.reshape((self.nphi,) + extra)
        ext = np.empty((nth + 8,) + Fm.shape[1:], dtype=complex)
        ext[4:-4] = Fm
        for k in range(4):
            ext[3 - k] = par * Fm[k]
            ext[nth + 4 + k] = par * Fm[nth - 1 - k]
        out = np.zeros(Fm.shape, dtype=complex)
        for s, c in enumerate(_D1_W, start=1):
            out += c * (ext[4 + s : 4 + s + nth] - ext[4 - s : 4 - s + nth])
        return out / self.h_theta

    def partials_chart(self, values: np.ndarray):
        """Chart partials via d_z = e^{-i phi}(A d_theta - i B d_phi).

        A = 1/(1 + rho^2), B = 1/(2 rho), rho = tan(theta/2); d_zbar is the
        conjugate-coefficient combination.  Derivative axis appended last.
        """
        extra = (1,) * (values.ndim - 2)
        Fm = np.fft.fft(values, axis=1)
        dth = self._dtheta_mspace(Fm)
        m = self.mvals.reshape((1, self.nphi) + extra)
        A = self.chart_A.reshape((self.ntheta, 1) + extra)
        B = self.chart_B.reshape((self.ntheta, 1) + extra)
        phase = self.phase_neg.reshape((1, self.nphi) + extra)
        Gm = A * dth + B * (m * Fm)
        Hm = A * dth - B * (m * Fm)
        dz = phase * np.fft.ifft(Gm, axis=1)
        dzb = np.conj(phase) * np.fft.ifft(Hm, axis=1)
        return dz[..., np.newaxis], dzb[..., np.newaxis]

    # -- spherical-harmonic transform -----------------------------------------

    def sht_analysis(self, values: np.ndarray) -> np.ndarray:
        """Coefficients alm[l, mcol] = integral of f * conj(Y_lm) over S^2.

        Exact (up to roundoff) for fields band-limited to l <= lmax.
        """
        fhat = np.fft.fft(values, axis=1) / self.nphi
        return 2.0 * np.pi * np.einsum("j,jm,lmj->lm", self.quad_w, fhat, self.PT, optimize=True)

    def sht_synthesis(self, alm: np.ndarray) -> np.ndarray:
        """Grid samples of sum_lm alm Y_lm (complex output; real data keeps
        conjugate symmetry alm[l, -m] = (-1)^m conj(alm[l, m]))."""
        gm = np.einsum("lm,lmj->jm", alm, self.PT, optimize=True)
        return np.fft.ifft(gm * self.nphi, axis=1)

    def sphere_integral(self, values: np.ndarray) -> complex:
        """Integral of F(theta, phi) sin(theta) dtheta dphi."""
        col = np.sum(values, axis=1) * (2.0 * np.pi / self.nphi)
        return complex(np.tensordot(self.quad_w, col, axes=(0, 0)))

    def resmooth(self, values: np.ndarray) -> np.ndarray:
        """Project chart samples onto the spherical-harmonic band l <= lmax.

        Band-limited data passes through unchanged up to roundoff; the
        projection strips pole-adjacent stencil noise, which otherwise gets
        amplified when the samples are differentiated again.
        """
        out = self.sht_synthesis(self.sht_analysis(values))
        return out if np.iscomplexobj(values) else out.real


@functools.lru_cache(maxsize=16)
def make_grid(model: ManifoldModel) -> Grid:
    if model.kind is ModelKind.FLAT_TORUS:
        return TorusGrid(model)
    return CP1Grid(model)
