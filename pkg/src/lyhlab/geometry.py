"""Closed-form Kahler geometry of the model manifold families.

Two compact models are supported:

* the flat torus C^n / (p Z + i p Z)^n, n = 1 or 2, reference metric
  g_{i jbar} = delta_ij (Ricci-flat, static under the flow);
* CP^1 with the Fubini-Study metric in the stereographic chart,
  g_{1 1bar} = a / (1 + |z|^2)^2 (Einstein, shrinking under the flow).

Conventions, fixed once and used by every other module:

* metric matrices store M[i, j] = g_{i jbar}; the flat reference has
  g_{1 1bar} = 1, so the scalar Laplacian Delta = g^{i jbar} d_i d_jbar
  equals one quarter of the Euclidean Laplacian per complex dimension and
  the Gaussian t^{-n} exp(-|z|^2 / t) is an exact heat kernel.
* inverse metric: Ginv[i, j] = g^{i jbar}, satisfying
  g^{i jbar} g_{k jbar} = delta_ik (conjugate of the matrix inverse).
* Christoffel symbols: Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}, symmetric
  in (i, j); mixed-type symbols vanish on a Kahler manifold.
* curvature: R_{i jbar k lbar} = -d_k d_lbar g_{i jbar}
  + g^{p qbar} d_k g_{i qbar} d_lbar g_{p jbar}.  With this sign CP^1 has
  positive holomorphic bisectional curvature: R_{1 1bar 1 1bar} = (2/a) g^2.
* Ricci: R_{i jbar} = g^{k lbar} R_{i jbar k lbar} = -d_i d_jbar log det g;
  scalar curvature R = g^{i jbar} R_{i jbar}.  CP^1 is Einstein with
  R_{i jbar} = (2/a) g_{i jbar}, so the Einstein constant of the reference
  metric is lambda = 2 and R = 2/a.
* the epsilon-Kahler-Ricci flow d_t g_{i jbar} = -eps R_{i jbar} preserves
  both model families as homotheties g(t) = a(t) g_ref with
  a(t) = a0 - eps * lambda * t.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelKind",
    "ManifoldModel",
    "MetricState",
    "CurvatureData",
    "ExtinctionError",
    "flat_torus",
    "fubini_study_cp1",
    "einstein_constant",
    "extinction_time",
    "krf_scale",
    "metric_state",
    "metric_at",
    "inverse_metric_at",
    "christoffel_at",
    "curvature_at",
    "curvature_symmetry_residual",
    "volume_density_at",
    "bisectional_infimum",
    "sphere_to_chart",
]


class ExtinctionError(ValueError):
    """The Ricci flow scale a(t) reached zero inside the requested window."""


class ModelKind(enum.Enum):
    FLAT_TORUS = "flat_torus"
    FUBINI_STUDY_CP1 = "cp1"


@dataclass(frozen=True)
class ManifoldModel:
    """A compact model Kahler manifold with closed-form geometry.

    periods holds one real lattice period per complex dimension (the torus
    is square in each C factor); grid_resolution is the sample count per
    real axis and must be even so the spectral transforms have a clean
    Nyquist split.
    """

    kind: ModelKind
    complex_dimension: int
    periods: tuple[float, ...] = ()
    grid_resolution: int = 64

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        if self.kind is ModelKind.FLAT_TORUS:
            if self.complex_dimension not in (1, 2):
                raise ValueError("flat torus supports complex_dimension 1 or 2")
            if len(self.periods) != self.complex_dimension:
                raise ValueError("periods: need one lattice period per complex dimension")
            if any(not (p > 0 and math.isfinite(p)) for p in self.periods):
                raise ValueError("periods must be strictly positive and finite")
        elif self.kind is ModelKind.FUBINI_STUDY_CP1:
            if self.complex_dimension != 1:
                raise ValueError("CP^1 has complex_dimension 1")
            if self.periods:
                raise ValueError("periods: CP^1 takes none")
        else:  # pragma: no cover - enum is closed
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.grid_resolution < 8 or self.grid_resolution % 2:
            raise ValueError("grid_resolution must be even and >= 8")


def flat_torus(complex_dimension: int = 1, periods=None, resolution: int = 64) -> ManifoldModel:
    if periods is None:
        periods = (1.0,) * complex_dimension
    return ManifoldModel(ModelKind.FLAT_TORUS, complex_dimension, tuple(periods), resolution)


def fubini_study_cp1(resolution: int = 64) -> ManifoldModel:
    return ManifoldModel(ModelKind.FUBINI_STUDY_CP1, 1, (), resolution)


def einstein_constant(model: ManifoldModel) -> float:
    """lambda with Ric(g_ref) = lambda * g_ref: 0 for the torus, 2 for CP^1."""
    return 0.0 if model.kind is ModelKind.FLAT_TORUS else 2.0


def extinction_time(model: ManifoldModel, a0: float, epsilon: float) -> float:
    """First time a(t) = a0 - eps*lambda*t hits zero (inf when it never does)."""
    rate = epsilon * einstein_constant(model)
    return math.inf if rate == 0 else a0 / rate


def krf_scale(model: ManifoldModel, a0: float, epsilon: float, t: float) -> float:
    """Homothety scale a(t) solving the epsilon-Kahler-Ricci flow from a(0) = a0."""
    if not a0 > 0:
        raise ValueError("a0 must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    a = a0 - epsilon * einstein_constant(model) * t
    if a <= 0:
        raise ExtinctionError(
            f"flow extinct at t = {t}: a(t) = {a} <= 0 "
            f"(extinction time {extinction_time(model, a0, epsilon)})"
        )
    return a


@dataclass(frozen=True)
class MetricState:
    """Metric g(t) = a * g_ref together with the flow parameters at time t."""

    model: ManifoldModel
    a: float
    t: float
    epsilon: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("metric scale a must be positive (flow not extinct)")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


def metric_state(model: ManifoldModel, a0: float, epsilon: float, t: float) -> MetricState:
    return MetricState(model, krf_scale(model, a0, epsilon, t), t, epsilon)


@dataclass(frozen=True, eq=False)
class CurvatureData:
    """Pointwise curvature in the fixed chart.

    riemann[..., i, j, k, l] = R_{i jbar k lbar}; ricci[..., i, j] = R_{i jbar};
    scalar[...] = R.  Leading axes broadcast over evaluation points.
    """

    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


def _chart_points(model: ManifoldModel, point) -> np.ndarray:
    """Normalize point input to a complex array of shape (..., n)."""
    z = np.asarray(point, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("point coordinates must be finite")
    n = model.complex_dimension
    if n == 1:
        return z[..., np.newaxis]
    if z.ndim == 0 or z.shape[-1] != n:
        raise ValueError(f"expected {n} complex chart coordinates per point")
    return z


def _conformal_factor(state: MetricState, z: np.ndarray) -> np.ndarray:
    """g(point) for the scalar models: a (torus) or a/(1+|z|^2)^2 (CP^1)."""
    if state.model.kind is ModelKind.FLAT_TORUS:
        return np.full(z.shape[:-1], float(state.a))
    return state.a / (1.0 + np.abs(z[..., 0]) ** 2) ** 2


def metric_at(state: MetricState, point) -> np.ndarray:
    """Metric matrix M[..., i, j] = g_{i jbar} at the chart point(s)."""
    z = _chart_points(state.model, point)
    n = state.model.complex_dimension
    c = _conformal_factor(state, z)
    return c[..., np.newaxis, np.newaxis] * np.eye(n)


def inverse_metric_at(state: MetricState, point) -> np.ndarray:
    """Inverse metric Ginv[..., i, j] = g^{i jbar} (conjugate matrix inverse)."""
    return np.conj(np.linalg.inv(metric_at(state, point)))


def christoffel_at(state: MetricState, point) -> np.ndarray:
    """Christoffel symbols Gam[..., k, i, j] = Gamma^k_{ij}, symmetric in (i, j).

    The conjugate symbols Gamma^kbar_{ibar jbar} are the complex conjugates;
    mixed symbols vanish.  Independent of the homothety scale a.
    """
    z = _chart_points(state.model, point)
    n = state.model.complex_dimension
    out = np.zeros(z.shape[:-1] + (n, n, n), dtype=complex)
    if state.model.kind is ModelKind.FUBINI_STUDY_CP1:
        zz = z[..., 0]
        out[..., 0, 0, 0] = -2.0 * np.conj(zz) / (1.0 + np.abs(zz) ** 2)
    return out


def curvature_at(state: MetricState, point) -> CurvatureData:
    """Curvature tensor, Ricci tensor and scalar curvature at the point(s)."""
    z = _chart_points(state.model, point)
    n = state.model.complex_dimension
    base = z.shape[:-1]
    riem = np.zeros(base + (n, n, n, n), dtype=complex)
    ric = np.zeros(base + (n, n), dtype=complex)
    sca = np.zeros(base)
    if state.model.kind is ModelKind.FUBINI_STUDY_CP1:
        g = _conformal_factor(state, z)
        riem[..., 0, 0, 0, 0] = (2.0 / state.a) * g**2
        ric[..., 0, 0] = (2.0 / state.a) * g
        sca[...] = 2.0 / state.a
    return CurvatureData(riem, ric, sca)


def curvature_symmetry_residual(data: CurvatureData) -> float:
    """Max violation of the Kahler curvature symmetries and reality constraints.

    Checks i<->k, jbar<->lbar, pair exchange (i jbar)<->(k lbar), the
    conjugation symmetry conj(R_{i jbar k lbar}) = R_{j ibar l kbar},
    Hermiticity of the Ricci matrix and realness of the scalar.
    """
    r = data.riemann
    checks = [
        r - np.swapaxes(r, -4, -2),
        r - np.swapaxes(r, -3, -1),
        r - np.moveaxis(r, (-4, -3, -2, -1), (-2, -1, -4, -3)),
        np.conj(r) - np.swapaxes(np.swapaxes(r, -4, -3), -2, -1),
        data.ricci - np.conj(np.swapaxes(data.ricci, -1, -2)),
    ]
    res = max(float(np.max(np.abs(c))) if c.size else 0.0 for c in checks)
    if np.iscomplexobj(data.scalar):
        res = max(res, float(np.max(np.abs(np.imag(data.scalar)))))
    return res


def volume_density_at(state: MetricState, point) -> np.ndarray:
    """det g_{i jbar}; the chart measure is this density times Lebesgue measure."""
    z = _chart_points(state.model, point)
    return _conformal_factor(state, z) ** state.model.complex_dimension


def sphere_to_chart(theta, phi) -> np.ndarray:
    """Stereographic chart coordinate z = tan(theta/2) e^{i phi} on CP^1."""
    return np.tan(np.asarray(theta) / 2.0) * np.exp(1j * np.asarray(phi))


def bisectional_infimum(state: MetricState, sample_count: int, seed: int = 0) -> float:
    """Sampled infimum of the holomorphic bisectional curvature.

    Draws chart points and g-unit (1,0)-vector pairs (v, w) and returns the
    smallest R_{i jbar k lbar} v^i conj(v^j) w^k conj(w^l).  Deterministic
    for a fixed seed.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    model = state.model
    rng = np.random.default_rng(seed)
    n = model.complex_dimension
    if model.kind is ModelKind.FLAT_TORUS:
        # zero tensor: every sample is exactly 0
        return 0.0
    theta = np.arccos(rng.uniform(-1.0, 1.0, size=sample_count))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=sample_count)
    pts = sphere_to_chart(theta, phi)
    best = math.inf
    for zp in pts:
        g = metric_at(state, zp)
        riem = curvature_at(state, zp).riemann
        for _ in range(4):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            v /= math.sqrt(np.einsum("ij,i,j->", g, v, np.conj(v)).real)
            w /= math.sqrt(np.einsum("ij,i,j->", g, w, np.conj(w)).real)
            val = np.einsum("ijkl,i,j,k,l->", riem, v, np.conj(v), w, np.conj(w)).real
            best = min(best, float(val))
    return best
