"""Harnack quantities and nodewise positivity certification.

From a coupled flow trajectory this module assembles the logarithmic
density L = ln u, the solution quotient h = v/u, the constraint tensor
C_{i jbar} = nabla_i h nabla_jbar h / (1 - h^2), and the matrices

    P = nabla nabla-bar L + eps Ric - C,        Q = P + g / t.

Q >= 0 is the constrained matrix Li-Yau-Hamilton estimate; the module
certifies it by computing the smallest eigenvalue of Q at every node in
closed form (n <= 2) and aggregating minima into a report.  The curvature
Harnack matrix Y (defined only for eps > 0) is assembled alongside.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    HermitianField,
    ScalarField,
    SymmetricField,
    holomorphic_hessian,
    integrate,
    mixed_hessian,
    partials,
)
from .flow import FlowTrajectory, ordering_margin
from .geometry import MetricState
from .grids import Grid
from .tensorops import (
    covariant_deriv_hermitian,
    curv_contract,
    curv_grad_pair,
    geometry_cache,
    grad_inner,
    star,
    sym_pair,
    tensor_laplacian,
    transport,
)

__all__ = [
    "log_density",
    "quotient",
    "constraint_tensor",
    "compute_P",
    "compute_Q",
    "compute_Y",
    "min_eigenvalue",
    "LYHSnapshot",
    "build_snapshot",
    "dominance_defect",
    "decomposition_audit",
    "ReportOptions",
    "LYHReport",
    "report",
    "report_rows",
    "report_to_csv",
    "verdict_summary",
    "verdict_to_json",
]


def _first_bad_node(mask: np.ndarray) -> tuple:
    return tuple(int(k) for k in np.argwhere(mask)[0])


def _full_tensor(grid: Grid, compact: np.ndarray) -> np.ndarray:
    """Broadcast a constant (n, n) tensor to full grid + (n, n) shape."""
    n = grid.complex_dimension
    target = grid.shape + (n, n)
    return np.ascontiguousarray(np.broadcast_to(np.asarray(compact, dtype=complex), target))


def log_density(u: ScalarField) -> ScalarField:
    """L = ln u.  A closed-form log-jet on u becomes the jet of L.

    The jet transfer is what keeps the sharp heat-kernel case exact: chart
    derivatives of L come from the wrapped-Gaussian log-jet instead of
    spectral differentiation of a nearly singular exponential.
    """
    if not u.real:
        raise ValueError("log_density expects a real positive density")
    bad = ~(u.values > 0)
    if np.any(bad):
        node = _first_bad_node(bad)
        raise ValueError(
            f"log_density: non-positive density u = {u.values[node]:.6g} at node {node}"
        )
    return ScalarField(u.grid, np.log(u.values), jet=u.log_jet)


def quotient(u: ScalarField, v: ScalarField) -> ScalarField:
    """h = v / u, defined only under the strict ordering |v| < u."""
    if not u.grid.compatible(v.grid):
        raise ValueError("quotient: u and v live on incompatible grids")
    bad = ~(u.values > 0)
    if np.any(bad):
        node = _first_bad_node(bad)
        raise ValueError(
            f"quotient: non-positive density u = {u.values[node]:.6g} at node {node}"
        )
    gap = u.values - np.abs(v.values)
    bad = ~(gap > 0)
    if np.any(bad):
        node = _first_bad_node(bad)
        raise ValueError(
            f"quotient: ordering |v| < u fails at node {node} (u - |v| = {gap[node]:.6g})"
        )
    return ScalarField(u.grid, v.values / u.values)


def constraint_tensor(h: ScalarField) -> HermitianField:
    """C_{i jbar} = nabla_i h nabla_jbar h / (1 - h^2).

    Rank <= 1 and positive semidefinite at every node; this is the term the
    second solution contributes to the estimate.
    """
    bad = ~(np.abs(h.values) < 1.0)
    if np.any(bad):
        node = _first_bad_node(bad)
        raise ValueError(
            f"constraint tensor undefined: |h| = {abs(h.values[node]):.6g} >= 1 at node {node}"
        )
    dh, dhbar = partials(h)
    denom = (1.0 - h.values**2)[..., None, None]
    C = dh[..., :, None] * dhbar[..., None, :] / denom
    return HermitianField(h.grid, C)


def compute_P(
    hess_L: HermitianField,
    ricci: HermitianField,
    constraint: HermitianField,
    epsilon: float,
) -> HermitianField:
    """P = hess L + eps * Ric - constraint, componentwise."""
    for other in (ricci, constraint):
        if not hess_L.grid.compatible(other.grid):
            raise ValueError("compute_P: mismatched grids")
    return HermitianField(
        hess_L.grid, hess_L.values + epsilon * ricci.values - constraint.values
    )


def compute_Q(P: HermitianField, state: MetricState, t: float) -> HermitianField:
    """Q = P + g(t)/t; requires t > 0."""
    if t <= 0:
        raise ValueError(f"compute_Q: t must be positive (got {t})")
    g = geometry_cache(P.grid).metric(state.a)
    return HermitianField(P.grid, P.values + g / t)


def compute_Y(L: ScalarField, state: MetricState, t: float) -> HermitianField:
    """Curvature Harnack matrix of the coupled flow, defined for eps > 0:

        Y = Delta Ric + Riem:Ric - (grad L/eps) transport of Ric
            + Riem(grad L/eps, grad-bar L/eps) + Ric/(eps t).

    On the model metrics Ric is parallel, so the Laplacian and transport
    terms vanish analytically; they are assembled anyway so the positivity
    check exercises the full expression.
    """
    eps = state.epsilon
    if eps <= 0:
        raise ValueError(
            "compute_Y requires epsilon > 0: the quantity carries grad L/epsilon and 1/(epsilon t)"
        )
    if t <= 0:
        raise ValueError(f"compute_Y: t must be positive (got {t})")
    grid = L.grid
    cache = geometry_cache(grid)
    Ginv = cache.inverse(state.a)
    Riem = cache.riemann(state.a)
    ric = _full_tensor(grid, cache.ricci())

    dLe, dLbare = (d / eps for d in partials(L))
    lap_ric = tensor_laplacian(HermitianField(grid, ric), state).values
    DR, DbR = covariant_deriv_hermitian(grid, cache.gam, ric)

    Y = (
        lap_ric
        + curv_contract(Ginv, Riem, ric)
        - transport(Ginv, dLe, dLbare, DR, DbR)
        + curv_grad_pair(Ginv, Riem, dLe, dLbare)
        + ric / (eps * t)
    )
    Y = 0.5 * (Y + np.conj(np.swapaxes(Y, -1, -2)))
    return HermitianField(grid, Y)


def min_eigenvalue(hermitian: HermitianField) -> ScalarField:
    """Nodewise smallest eigenvalue, in closed form for n <= 2."""
    vals = hermitian.values
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    defect = hermitian.hermiticity_defect()
    if defect > 1e-10 * scale:
        raise RuntimeError(
            f"internal-consistency error: hermiticity defect {defect:.3e} "
            f"exceeds 1e-10 relative to field scale {scale:.3e}"
        )
    n = vals.shape[-1]
    if n == 1:
        lam = vals[..., 0, 0].real
    elif n == 2:
        half = 0.5 * (vals[..., 0, 0].real + vals[..., 1, 1].real)
        det = vals[..., 0, 0].real * vals[..., 1, 1].real - np.abs(vals[..., 0, 1]) ** 2
        lam = half - np.sqrt(np.maximum(half * half - det, 0.0))
    else:
        raise ValueError(f"closed-form eigenvalues cover n <= 2 (got n = {n})")
    return ScalarField(hermitian.grid, np.ascontiguousarray(lam))


@dataclass(eq=False)
class LYHSnapshot:
    """Every Harnack ingredient evaluated at one flow time.

    Componentwise identities hold exactly by construction:
    P = hess_L + eps*ricci - constraint and Q = P + g/t; Q_unconstrained
    drops the constraint term and dominates Q.
    """

    t: float
    state: MetricState
    u: ScalarField
    v: ScalarField
    L: ScalarField
    h: ScalarField
    hess_L: HermitianField
    holo_hess_L: SymmetricField
    grad_h: np.ndarray
    grad_h_bar: np.ndarray
    ricci: HermitianField
    constraint: HermitianField
    P: HermitianField
    Q: HermitianField
    Q_unconstrained: HermitianField


def build_snapshot(trajectory: FlowTrajectory, t: float) -> LYHSnapshot:
    """Sample the trajectory at time t and assemble all Harnack quantities."""
    state, u, v = trajectory.sample(t)
    grid = u.grid
    L = log_density(u)
    h = quotient(u, v)
    hess_L = mixed_hessian(L)
    holo = holomorphic_hessian(L, state)
    C = constraint_tensor(h)
    dh, dhbar = partials(h)
    ric = HermitianField(grid, _full_tensor(grid, geometry_cache(grid).ricci()))
    P = compute_P(hess_L, ric, C, state.epsilon)
    Q = compute_Q(P, state, t)
    P_unc = HermitianField(grid, hess_L.values + state.epsilon * ric.values)
    Q_unc = compute_Q(P_unc, state, t)
    return LYHSnapshot(
        t=t,
        state=state,
        u=u,
        v=v,
        L=L,
        h=h,
        hess_L=hess_L,
        holo_hess_L=holo,
        grad_h=dh,
        grad_h_bar=dhbar,
        ricci=ric,
        constraint=C,
        P=P,
        Q=Q,
        Q_unconstrained=Q_unc,
    )


def dominance_defect(snapshot: LYHSnapshot, vectors: int = 10, seed: int = 0) -> float:
    """max over nodes and unit test vectors w of w* (Q - Q_unconstrained) w.

    The difference is minus the constraint tensor, so the result should be
    <= 0 up to roundoff; equality is attained exactly where grad h = 0.
    """
    rng = np.random.default_rng(seed)
    n = snapshot.Q.grid.complex_dimension
    shape = (vectors,) + snapshot.Q.grid.shape + (n,)
    w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    diff = snapshot.Q.values - snapshot.Q_unconstrained.values
    quad = np.einsum("...ij,v...i,v...j->v...", diff, np.conj(w), w, optimize=True).real
    return float(quad.max())


def decomposition_audit(snapshot: LYHSnapshot) -> dict[str, float]:
    """min eigenvalue over nodes of each discarded nonnegative matrix.

    The evolution argument for Q drops PSD product terms; the two built from
    constrained Hessians of h are, with D = 1 - h^2,

        sym: (1/D) sum_k A_{ik} conj(A_{jk}),  A_{ik} = hess^{hol}_{ik} h + 2h d_i h d_k h / D,
        star: (1/D) sum_k M_{i kbar} M_{k jbar},  M = hess^{mix} h + 2h dh dh-bar / D,

    and the constraint tensor itself is the third certifiable piece.
    """
    state = snapshot.state
    grid = snapshot.h.grid
    Ginv = geometry_cache(grid).inverse(state.a)
    h = snapshot.h.values
    denom = 1.0 - h * h
    dh, dhbar = snapshot.grad_h, snapshot.grad_h_bar
    two_h = (2.0 * h / denom)[..., None, None]
    A = holomorphic_hessian(snapshot.h, state).values + two_h * dh[..., :, None] * dh[..., None, :]
    M = mixed_hessian(snapshot.h).values + two_h * dh[..., :, None] * dhbar[..., None, :]
    d4 = denom[..., None, None]
    out = {}
    for name, arr in (
        ("constraint", snapshot.constraint.values),
        ("holo_hessian_product", sym_pair(Ginv, A) / d4),
        ("mixed_hessian_product", star(Ginv, M, M) / d4),
    ):
        herm = HermitianField(grid, 0.5 * (arr + np.conj(np.swapaxes(arr, -1, -2))))
        out[name] = float(np.min(min_eigenvalue(herm).values))
    return out


@dataclass
class ReportOptions:
    """Report controls.

    times: report times (defaults to the trajectory schedule times; arbitrary
    times inside the window are valid since sampling is closed form).
    tol_scale: verdict tolerance is tol_scale * (1 + 1/t) per time.
    include_y: include Y minima in the verdict when eps > 0.
    """

    times: object | None = None
    tol_scale: float = 1e-8
    include_y: bool = True


@dataclass(eq=False)
class LYHReport:
    """Per-time positivity minima and flow diagnostics.

    min_y is NaN on eps = 0 rows, where Y is undefined.  gap_max/gap_mean
    track the raised trace of the constraint tensor |grad h|^2/(1-h^2),
    the pointwise improvement the second solution buys.
    """

    times: np.ndarray
    min_q: np.ndarray
    min_q_unconstrained: np.ndarray
    min_y: np.ndarray
    margin: np.ndarray
    mass: np.ndarray
    gap_max: np.ndarray
    gap_mean: np.ndarray
    tol_scale: float
    verdict: bool
    identity_residuals: list = field(default_factory=list)


def report(trajectory: FlowTrajectory, options: ReportOptions | None = None) -> LYHReport:
    """Evaluate positivity minima, ordering margin and mass along a trajectory."""
    opts = options or ReportOptions()
    times = np.asarray(
        trajectory.times if opts.times is None else opts.times, dtype=float
    )
    if times.size == 0:
        raise ValueError("report: no report times selected")
    lo, hi = trajectory.schedule.t_start, trajectory.schedule.t_end
    if np.any(times < lo - 1e-12) or np.any(times > hi + 1e-12):
        raise ValueError(
            f"report times must lie in the trajectory window [{lo}, {hi}]"
        )
    eps = trajectory.epsilon

    cols: dict[str, list[float]] = {k: [] for k in
        ("min_q", "min_qu", "min_y", "margin", "mass", "gap_max", "gap_mean")}
    for t in times:
        snap = build_snapshot(trajectory, float(t))
        grid = snap.h.grid
        Ginv = geometry_cache(grid).inverse(snap.state.a)
        cols["min_q"].append(float(np.min(min_eigenvalue(snap.Q).values)))
        cols["min_qu"].append(float(np.min(min_eigenvalue(snap.Q_unconstrained).values)))
        if eps > 0:
            Y = compute_Y(snap.L, snap.state, float(t))
            cols["min_y"].append(float(np.min(min_eigenvalue(Y).values)))
        else:
            cols["min_y"].append(float("nan"))
        cols["margin"].append(ordering_margin(snap.u, snap.v))
        cols["mass"].append(integrate(snap.u, snap.state))
        gap = grad_inner(Ginv, snap.grad_h, snap.grad_h_bar).real / (1.0 - snap.h.values**2)
        cols["gap_max"].append(float(gap.max()))
        cols["gap_mean"].append(float(gap.mean()))

    tol = opts.tol_scale * (1.0 + 1.0 / times)
    min_q = np.array(cols["min_q"])
    min_qu = np.array(cols["min_qu"])
    min_y = np.array(cols["min_y"])
    verdict = bool(np.all(min_q >= -tol) and np.all(min_qu >= -tol))
    if eps > 0 and opts.include_y:
        verdict = verdict and bool(np.all(min_y >= -tol))

    return LYHReport(
        times=times,
        min_q=min_q,
        min_q_unconstrained=min_qu,
        min_y=min_y,
        margin=np.array(cols["margin"]),
        mass=np.array(cols["mass"]),
        gap_max=np.array(cols["gap_max"]),
        gap_mean=np.array(cols["gap_mean"]),
        tol_scale=opts.tol_scale,
        verdict=verdict,
    )


def report_rows(rep: LYHReport) -> list[tuple]:
    """(t, minQ, minQ_unconstrained, minY, margin, mass) per report time."""
    return list(
        zip(rep.times, rep.min_q, rep.min_q_unconstrained, rep.min_y, rep.margin, rep.mass)
    )


def report_to_csv(rep: LYHReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "minQ", "minQ_unconstrained", "minY", "margin", "mass"])
        for row in report_rows(rep):
            writer.writerow([f"{x:.17g}" for x in row])


def verdict_summary(rep: LYHReport) -> dict:
    has_y = bool(np.any(~np.isnan(rep.min_y)))
    return {
        "verdict": bool(rep.verdict),
        "tol_scale": rep.tol_scale,
        "times": int(rep.times.size),
        "min_q_overall": float(np.min(rep.min_q)),
        "min_q_unconstrained_overall": float(np.min(rep.min_q_unconstrained)),
        "min_y_overall": float(np.nanmin(rep.min_y)) if has_y else None,
        "final_margin": float(rep.margin[-1]),
        "mass_drift": float(np.max(np.abs(rep.mass / rep.mass[0] - 1.0))),
    }


def verdict_to_json(rep: LYHReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(verdict_summary(rep), fh, indent=2, sort_keys=True)
        fh.write("\n")
