"""Grid-level tensor calculus: cached geometry arrays, index contractions
with the inverse metric, covariant derivatives and the tensor Laplacian.

Index conventions (matching geometry):

* Hermitian fields store T[..., i, j] = T_{i jbar}; symmetric fields store
  S[..., i, j] = S_{ij}; gradients store dL[..., k] = d_k L.
* covariant-derivative arrays put the derivative index first:
  DT[..., k, i, j] = nabla_k T_{i jbar}.
* Ginv[..., a, b] = g^{a bbar}; raising a holomorphic lower index uses the
  first slot, an anti-holomorphic one the second.

Every contraction below was fixed against the normal-coordinate form of
the evolution identities (where g = delta and all the sums are plain
matrix algebra) and against the CP^1 closed forms.
"""

from __future__ import annotations

import functools

import numpy as np

from .geometry import (
    MetricState,
    christoffel_at,
    curvature_at,
    einstein_constant,
)
from .fields import HermitianField, ScalarField, laplacian, metric_factor
from .grids import CP1Grid, Grid, TorusGrid

__all__ = [
    "GeometryCache",
    "geometry_cache",
    "star",
    "sym_pair",
    "curv_contract",
    "curv_grad_pair",
    "grad_inner",
    "transport",
    "covariant_deriv_hermitian",
    "tensor_laplacian",
]


class GeometryCache:
    """Reference geometry arrays (scale a = 1) evaluated on the grid nodes.

    Everything the homothety touches is rescaled on demand: g(a) = a g_ref,
    g^{-1}(a) = g_ref^{-1}/a, Riem(a) = a Riem_ref, Ric independent of a,
    scalar R(a) = lambda/a.  Christoffel symbols do not depend on a.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.complex_dimension
        ref = MetricState(grid.model, 1.0, 0.0, 0.0)
        if isinstance(grid, TorusGrid):
            # compact constant arrays; einsum broadcasting fills the grid axes
            self.metric_ref = np.eye(n)
            self.inverse_ref = np.eye(n)
            self.gam = np.zeros((n, n, n), dtype=complex)
            self.riemann_ref = np.zeros((n, n, n, n), dtype=complex)
            self.ricci_ref = np.zeros((n, n), dtype=complex)
        else:
            pts = grid.points
            gfac = metric_factor(grid, 1.0)
            eye = np.eye(n)
            self.metric_ref = gfac[..., None, None] * eye
            self.inverse_ref = (1.0 / gfac)[..., None, None] * eye
            self.gam = christoffel_at(ref, pts)
            curv = curvature_at(ref, pts)
            self.riemann_ref = curv.riemann
            self.ricci_ref = curv.ricci
        self.einstein = einstein_constant(grid.model)

    def metric(self, a: float) -> np.ndarray:
        return a * self.metric_ref

    def inverse(self, a: float) -> np.ndarray:
        return self.inverse_ref / a

    def riemann(self, a: float) -> np.ndarray:
        return a * self.riemann_ref

    def ricci(self) -> np.ndarray:
        return self.ricci_ref

    def scalar(self, a: float) -> float:
        return self.einstein / a


@functools.lru_cache(maxsize=16)
def geometry_cache(grid: Grid) -> GeometryCache:
    return GeometryCache(grid)


# -- pointwise contractions ----------------------------------------------------


def star(Ginv: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """(A * B)_{i jbar} = g^{a bbar} A_{i bbar} B_{a jbar}.

    The invariant form of the normal-coordinate product sum_k A_{i kbar} B_{k jbar}.
    """
    return np.einsum("...ab,...ib,...aj->...ij", Ginv, A, B, optimize=True)


def sym_pair(Ginv: np.ndarray, S: np.ndarray, T: np.ndarray | None = None) -> np.ndarray:
    """g^{a bbar} S_{ia} conj(T_{jb}): sum_k S_{ik} conj(T_{jk}) with k raised.

    With T = S this is the Hermitian PSD square of a symmetric tensor,
    e.g. sum_k nabla_i nabla_k L nabla_jbar nabla_kbar L.
    """
    if T is None:
        T = S
    return np.einsum("...ab,...ia,...jb->...ij", Ginv, S, np.conj(T), optimize=True)


def curv_contract(Ginv: np.ndarray, Riem: np.ndarray, T: np.ndarray) -> np.ndarray:
    """R_{i jbar l kbar} T^{(k lbar)}: the curvature action sum_{k,l} R_{i jbar l kbar} T_{k lbar}."""
    return np.einsum("...ijlk,...lb,...ak,...ab->...ij", Riem, Ginv, Ginv, T, optimize=True)


def curv_grad_pair(Ginv: np.ndarray, Riem: np.ndarray, dL: np.ndarray, dLbar: np.ndarray) -> np.ndarray:
    """R_{i jbar k lbar} (nabla L)^{(l)} (nabla bar L)^{(kbar)}:
    sum_{k,l} R_{i jbar k lbar} d_l L conj(d_k L) with both indices raised."""
    return np.einsum(
        "...ijab,...cb,...c,...ad,...d->...ij", Riem, Ginv, dL, Ginv, dLbar, optimize=True
    )


def grad_inner(Ginv: np.ndarray, df: np.ndarray, dgbar: np.ndarray) -> np.ndarray:
    """g^{k lbar} (df)_k (dgbar)_lbar, e.g. |nabla L|^2 = grad_inner(Ginv, dL, conj(dL))."""
    return np.einsum("...kl,...k,...l->...", Ginv, df, dgbar, optimize=True)


def transport(Ginv: np.ndarray, dL: np.ndarray, dLbar: np.ndarray, DT: np.ndarray, DbT: np.ndarray) -> np.ndarray:
    """First-order transport nabla_k L nabla_kbar T + nabla_kbar L nabla_k T.

    DT[..., k, i, j] = nabla_k T_{i jbar}; DbT[..., l, i, j] = nabla_lbar T_{i jbar}.
    """
    first = np.einsum("...kl,...k,...lij->...ij", Ginv, dL, DbT, optimize=True)
    second = np.einsum("...kl,...kij,...l->...ij", Ginv, DT, dLbar, optimize=True)
    return first + second


# -- covariant derivatives -----------------------------------------------------


def _cp1_trace_scalar(grid: CP1Grid, T: np.ndarray) -> np.ndarray:
    """tau with T = tau * g_ref.

    In one complex dimension every Hermitian 2-tensor is a multiple of the
    metric, and tau = T_{1 1bar}/g_{1 1bar} is a smooth global scalar: the
    single chart component vanishes to high order at the far pole exactly as
    g_ref does.  Working through tau and the parallel g_ref keeps repeated
    derivatives on the scalar transform side, where the harmonic projection
    (resmooth) controls pole noise.
    """
    gfac = metric_factor(grid, 1.0)
    tau = T[..., 0, 0] / gfac
    return grid.resmooth(tau.real) + 1j * grid.resmooth(tau.imag)


def covariant_deriv_hermitian(grid: Grid, gam: np.ndarray, T: np.ndarray):
    """(nabla_k T_{i jbar}, nabla_kbar T_{i jbar}) for a Hermitian 2-tensor.

    nabla_k T = d_k T - Gamma^p_{ki} T_{p jbar};
    nabla_kbar T = d_kbar T - conj(Gamma^p_{kj}) T_{i pbar}.
    Returns arrays with the derivative index first.  On CP^1 the tensor is
    carried by its metric trace (T = tau g_ref, g_ref parallel), so the
    Christoffel terms drop out analytically.
    """
    if isinstance(grid, CP1Grid):
        gfac = metric_factor(grid, 1.0)
        tau = _cp1_trace_scalar(grid, T)
        dt, dbt = grid.partials_chart(tau)
        DT = (dt[..., 0] * gfac)[..., None, None, None]
        DbT = (dbt[..., 0] * gfac)[..., None, None, None]
        return DT, DbT
    dT, dbT = grid.partials_chart(T)
    DT = np.moveaxis(dT, -1, -3) - np.einsum("...pki,...pj->...kij", gam, T, optimize=True)
    DbT = np.moveaxis(dbT, -1, -3) - np.einsum("...plj,...ip->...lij", np.conj(gam), T, optimize=True)
    return DT, DbT


def tensor_laplacian(T: HermitianField, state: MetricState) -> HermitianField:
    """Delta T = (1/2) g^{k lbar} (nabla_k nabla_lbar + nabla_lbar nabla_k) T_{i jbar}.

    The symmetric-half convention matching the 1/2-weighted Ricci terms of
    the Hessian evolution identity.  On the flat torus this reduces to the
    componentwise scalar Laplacian; on CP^1 it rides the scalar Laplacian of
    the metric trace (Delta(tau g) = (Delta tau) g), which keeps the parallel
    tensors (g and Ric) exact kernels and avoids pole-noise amplification.
    """
    grid = T.grid
    cache = geometry_cache(grid)
    if isinstance(grid, CP1Grid):
        gfac = metric_factor(grid, 1.0)
        tau = T.values[..., 0, 0] / gfac
        lap_re = laplacian(ScalarField(grid, grid.resmooth(tau.real)), state).values
        lap_im = laplacian(ScalarField(grid, grid.resmooth(tau.imag)), state).values
        out = ((lap_re + 1j * lap_im) * gfac)[..., None, None]
        out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
        return HermitianField(grid, out)
    gam = cache.gam
    Ginv = cache.inverse(state.a)
    DT, DbT = covariant_deriv_hermitian(grid, gam, T.values)

    # nabla_k (nabla_lbar T): holo corrections act on the i slot only
    dW = grid.partials_chart(DbT)[0]  # [..., l, i, j, k]
    W1 = np.moveaxis(dW, -1, -4) - np.einsum("...pki,...lpj->...klij", gam, DbT, optimize=True)
    lap1 = np.einsum("...kl,...klij->...ij", Ginv, W1, optimize=True)

    # nabla_lbar (nabla_k T): anti corrections act on the jbar slot only
    dV = grid.partials_chart(DT)[1]  # [..., k, i, j, l]
    W2 = np.moveaxis(dV, -1, -4) - np.einsum("...plj,...kip->...lkij", np.conj(gam), DT, optimize=True)
    lap2 = np.einsum("...kl,...lkij->...ij", Ginv, W2, optimize=True)

    out = 0.5 * (lap1 + lap2)
    out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
    return HermitianField(grid, out)
