"""Finite-difference verification of the evolution identities.

Each check re-evolves the trajectory to t -+ dt (time sampling is closed
form, so the probes carry no step-accumulation error), assembles the
identity's right-hand side from spatial derivatives at the center time,
and reports the worst nodewise deviation.  Residuals scale as O(dt^2)
until spectral roundoff takes over.

Relative residuals are normalized by the largest individual right-hand
term magnitude, not the net right-hand side, so identities that hold by
internal cancellation (the Einstein models make several right sides vanish)
report a meaningful ratio instead of 0/0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .fields import (
    HermitianField,
    ScalarField,
    fd_time_derivative,
    holomorphic_hessian,
    laplacian,
    mixed_hessian,
    partials,
)
from .flow import FlowTrajectory
from .geometry import ManifoldModel, curvature_at, krf_scale, metric_state
from .grids import make_grid
from .harnack import build_snapshot, min_eigenvalue
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
    "IdentityResidual",
    "check_L_evolution",
    "check_lemma1",
    "check_lemma2",
    "check_lemma3",
    "check_ricci_formula",
    "check_q_evolution_inequality",
    "run_identity_suite",
    "convergence_order",
    "residuals_to_csv",
]


@dataclass(frozen=True)
class IdentityResidual:
    """Outcome of one identity check at one probe time."""

    identity_id: str
    t: float
    abs_residual: float
    rel_residual: float
    grid: str
    dt: float


def _grid_label(grid) -> str:
    model = grid.model
    return f"{model.kind.value}:n={model.complex_dimension}:N={model.grid_resolution}"


def _window(trajectory: FlowTrajectory, t: float, dt: float) -> None:
    lo, hi = trajectory.schedule.t_start, trajectory.schedule.t_end
    if t - dt < lo - 1e-12 or t + dt > hi + 1e-12:
        raise ValueError(
            f"missing snapshots: probe window [{t - dt}, {t + dt}] "
            f"leaves the trajectory range [{lo}, {hi}]"
        )


def _tmax(arr) -> float:
    return float(np.max(np.abs(arr)))


def _rel(abs_residual: float, *term_maxima: float) -> float:
    scale = max(term_maxima, default=0.0)
    return abs_residual / scale if scale > 0.0 else 0.0


def check_L_evolution(trajectory: FlowTrajectory, t: float, dt: float) -> IdentityResidual:
    """d/dt ln u = Delta L + |grad L|^2 + eps R."""
    _window(trajectory, t, dt)
    snaps = [build_snapshot(trajectory, tt) for tt in (t - dt, t, t + dt)]
    lhs = fd_time_derivative([s.L for s in snaps], dt).values
    snap = snaps[1]
    state = snap.state
    cache = geometry_cache(snap.L.grid)
    lap = laplacian(snap.L, state).values
    dL, dLbar = partials(snap.L)
    gradsq = grad_inner(cache.inverse(state.a), dL, dLbar).real
    curv = trajectory.epsilon * cache.scalar(state.a)
    abs_res = _tmax(lhs - (lap + gradsq + curv))
    rel = _rel(abs_res, _tmax(lhs), _tmax(lap), _tmax(gradsq), abs(curv))
    return IdentityResidual("L_evolution", float(t), abs_res, rel, _grid_label(snap.L.grid), float(dt))


def check_lemma1(trajectory: FlowTrajectory, t: float, dt: float) -> IdentityResidual:
    """Evolution of the mixed Hessian of L = ln u.

    RHS = Delta hess + Riem:hess + Riem(grad L, grad-bar L) + transport
          + hess.hess + holo.conj(holo) - (Ric.hess + hess.Ric)/2
          + eps (Delta Ric + Riem:Ric - Ric.Ric).
    Third covariant derivatives enter through the covariant gradient of the
    Hessian inside the transport term and the tensor Laplacian.
    """
    _window(trajectory, t, dt)
    snaps = [build_snapshot(trajectory, tt) for tt in (t - dt, t, t + dt)]
    lhs = fd_time_derivative([s.hess_L for s in snaps], dt).values
    snap = snaps[1]
    state = snap.state
    grid = snap.L.grid
    cache = geometry_cache(grid)
    Ginv = cache.inverse(state.a)
    Riem = cache.riemann(state.a)
    hess = snap.hess_L.values
    ricv = snap.ricci.values
    dL, dLbar = partials(snap.L)

    lap = tensor_laplacian(snap.hess_L, state).values
    curv = curv_contract(Ginv, Riem, hess)
    cgrad = curv_grad_pair(Ginv, Riem, dL, dLbar)
    DH, DbH = covariant_deriv_hermitian(grid, cache.gam, hess)
    trans = transport(Ginv, dL, dLbar, DH, DbH)
    prod_mixed = star(Ginv, hess, hess)
    prod_holo = sym_pair(Ginv, snap.holo_hess_L.values)
    ric_half = -0.5 * (star(Ginv, hess, ricv) + star(Ginv, ricv, hess))
    eps = trajectory.epsilon
    ric_lap = eps * tensor_laplacian(snap.ricci, state).values
    ric_curv = eps * curv_contract(Ginv, Riem, ricv)
    ric_sq = eps * star(Ginv, ricv, ricv)

    rhs = lap + curv + cgrad + trans + prod_mixed + prod_holo + ric_half
    rhs = rhs + ric_lap + ric_curv - ric_sq
    abs_res = _tmax(lhs - rhs)
    rel = _rel(
        abs_res,
        _tmax(lhs), _tmax(lap), _tmax(curv), _tmax(cgrad), _tmax(trans),
        _tmax(prod_mixed), _tmax(prod_holo), _tmax(ric_half),
        _tmax(ric_lap), _tmax(ric_curv), _tmax(ric_sq),
    )
    return IdentityResidual("lemma1", float(t), abs_res, rel, _grid_label(grid), float(dt))


def check_lemma2(
    model: ManifoldModel, a0: float, epsilon: float, t: float, dt: float
) -> IdentityResidual:
    """d/dt (eps Ric) = eps^2 (Delta Ric + Riem:Ric - Ric.Ric).

    On the homothetic models Ric is scale-invariant, so the left side is an
    exact zero and the right side must cancel internally (the Einstein
    identity); the check has limited discriminating power beyond that
    cancellation, which is recorded as a known limitation.
    """
    grid = make_grid(model)
    st_lo = metric_state(model, a0, epsilon, t - dt)  # raises after extinction
    st_hi = metric_state(model, a0, epsilon, t + dt)
    state = metric_state(model, a0, epsilon, t)
    pts = grid.points
    lhs = epsilon * (curvature_at(st_hi, pts).ricci - curvature_at(st_lo, pts).ricci) / (2.0 * dt)

    cache = geometry_cache(grid)
    n = grid.complex_dimension
    ric = np.ascontiguousarray(
        np.broadcast_to(np.asarray(cache.ricci(), dtype=complex), grid.shape + (n, n))
    )
    Ginv = cache.inverse(state.a)
    Riem = cache.riemann(state.a)
    lap = tensor_laplacian(HermitianField(grid, ric), state).values
    curv = curv_contract(Ginv, Riem, ric)
    sq = star(Ginv, ric, ric)
    e2 = epsilon**2
    abs_res = _tmax(lhs - e2 * (lap + curv - sq))
    rel = _rel(abs_res, _tmax(lhs), e2 * _tmax(lap), e2 * _tmax(curv), e2 * _tmax(sq))
    return IdentityResidual("lemma2", float(t), abs_res, rel, _grid_label(grid), float(dt))


def check_lemma3(trajectory: FlowTrajectory, t: float, dt: float) -> IdentityResidual:
    """Evolution of the constraint tensor C = grad h grad-bar h / (1 - h^2).

    RHS = Delta C + transport(L, C)
          - (1/D) sum_k A_{ik} conj(A_{jk}) - (1/D) sum_k M_{i kbar} M_{k jbar}
          + (1/D) (L-Hessian couplings) - (Ric.C + C.Ric)/2 - 2 C |grad h|^2 / D
    with D = 1 - h^2, A = holo hess h + 2h dh dh/D, M = mixed hess h + 2h dh dh-bar/D.
    """
    _window(trajectory, t, dt)
    snaps = [build_snapshot(trajectory, tt) for tt in (t - dt, t, t + dt)]
    lhs = fd_time_derivative([s.constraint for s in snaps], dt).values
    snap = snaps[1]
    state = snap.state
    grid = snap.h.grid
    cache = geometry_cache(grid)
    Ginv = cache.inverse(state.a)
    ricv = snap.ricci.values
    C = snap.constraint.values
    h = snap.h.values
    denom = 1.0 - h * h
    d2 = denom[..., None, None]
    dh, dhbar = snap.grad_h, snap.grad_h_bar
    dL, dLbar = partials(snap.L)

    lap = tensor_laplacian(snap.constraint, state).values
    DC, DbC = covariant_deriv_hermitian(grid, cache.gam, C)
    trans = transport(Ginv, dL, dLbar, DC, DbC)

    two_h = (2.0 * h / denom)[..., None, None]
    A = holomorphic_hessian(snap.h, state).values + two_h * dh[..., :, None] * dh[..., None, :]
    M = mixed_hessian(snap.h).values + two_h * dh[..., :, None] * dhbar[..., None, :]
    prod_holo = -sym_pair(Ginv, A) / d2
    prod_mixed = -star(Ginv, M, M) / d2

    # L-Hessian couplings: w_i = sum_k S_{ik} d_kbar h, x_i = sum_k H_{i kbar} d_k h
    S_L = snap.holo_hess_L.values
    H_L = snap.hess_L.values
    w = np.einsum("...ab,...ia,...b->...i", Ginv, S_L, dhbar, optimize=True)
    x = np.einsum("...kl,...il,...k->...i", Ginv, H_L, dh, optimize=True)
    wx = w + x
    coupling = (
        wx[..., :, None] * dhbar[..., None, :] + dh[..., :, None] * np.conj(wx)[..., None, :]
    ) / d2

    ric_terms = -0.5 * (star(Ginv, ricv, C) + star(Ginv, C, ricv))
    gradsq = grad_inner(Ginv, dh, dhbar).real
    last = -2.0 * C * (gradsq / denom)[..., None, None]

    rhs = lap + trans + prod_holo + prod_mixed + coupling + ric_terms + last
    abs_res = _tmax(lhs - rhs)
    rel = _rel(
        abs_res,
        _tmax(lhs), _tmax(lap), _tmax(trans), _tmax(prod_holo), _tmax(prod_mixed),
        _tmax(coupling), _tmax(ric_terms), _tmax(last),
    )
    return IdentityResidual("lemma3", float(t), abs_res, rel, _grid_label(grid), float(dt))


def check_ricci_formula(model: ManifoldModel, a: float) -> IdentityResidual:
    """nabla_i nabla_jbar R = Delta Ric + Riem:Ric - Ric.Ric.

    The models have spatially constant scalar curvature, so the left side is
    an exact spectral zero and the contractions must cancel internally.
    """
    grid = make_grid(model)
    state = metric_state(model, a, 0.0, 0.0)
    cache = geometry_cache(grid)
    lhs = mixed_hessian(ScalarField(grid, np.full(grid.shape, cache.scalar(a)))).values

    n = grid.complex_dimension
    ric = np.ascontiguousarray(
        np.broadcast_to(np.asarray(cache.ricci(), dtype=complex), grid.shape + (n, n))
    )
    Ginv = cache.inverse(a)
    Riem = cache.riemann(a)
    lap = tensor_laplacian(HermitianField(grid, ric), state).values
    curv = curv_contract(Ginv, Riem, ric)
    sq = star(Ginv, ric, ric)
    abs_res = _tmax(lhs - (lap + curv - sq))
    rel = _rel(abs_res, _tmax(lhs), _tmax(lap), _tmax(curv), _tmax(sq))
    return IdentityResidual("ricci_formula", 0.0, abs_res, rel, _grid_label(grid), 0.0)


def check_q_evolution_inequality(
    trajectory: FlowTrajectory, t: float, dt: float
) -> IdentityResidual:
    """One-sided check of the Q evolution:

        dQ/dt >= Delta Q + transport(L, Q) + Riem:Q
                 - (1/2 + eps)(Ric.Q + Q.Ric) + (Q - 2g/t).Q.

    D = dQ/dt - RHS collects the discarded PSD products plus O(dt^2)
    truncation, so its smallest eigenvalue should never drop below minus the
    discretization error.  abs_residual is the worst violation
    max(0, -min lambda_min(D)); zero means the inequality held everywhere.

    dQ/dt splits as fd(P) + d/dt(g(t)/t): the metric part is differentiated
    in closed form (the homothetic flow gives d/dt g = -eps Ric exactly),
    which avoids an O(dt^2 / t^4) truncation bias from the 1/t factor that
    would otherwise swamp sharp cases.
    """
    _window(trajectory, t, dt)
    snaps = [build_snapshot(trajectory, tt) for tt in (t - dt, t, t + dt)]
    snap = snaps[1]
    state = snap.state
    grid = snap.Q.grid
    n = grid.complex_dimension
    cache = geometry_cache(grid)
    Ginv = cache.inverse(state.a)
    Riem = cache.riemann(state.a)
    Q = snap.Q.values
    ricv = snap.ricci.values
    dL, dLbar = partials(snap.L)

    gfull = np.broadcast_to(
        np.asarray(cache.metric(state.a), dtype=complex), grid.shape + (n, n)
    )
    metric_rate = -(trajectory.epsilon / t) * ricv - gfull / t**2
    lhs = fd_time_derivative([s.P for s in snaps], dt).values + metric_rate

    lap = tensor_laplacian(snap.Q, state).values
    DQ, DbQ = covariant_deriv_hermitian(grid, cache.gam, Q)
    trans = transport(Ginv, dL, dLbar, DQ, DbQ)
    curv = curv_contract(Ginv, Riem, Q)
    ric_term = -(0.5 + trajectory.epsilon) * (star(Ginv, Q, ricv) + star(Ginv, ricv, Q))
    sq = star(Ginv, Q, Q) - (2.0 / t) * Q  # (Q - 2g/t).Q, since g.Q contracts to Q

    D = lhs - (lap + trans + curv + ric_term + sq)
    D = 0.5 * (D + np.conj(np.swapaxes(D, -1, -2)))
    min_lam = float(np.min(min_eigenvalue(HermitianField(grid, D)).values))
    abs_res = max(0.0, -min_lam)
    rel = _rel(
        abs_res,
        _tmax(lhs), _tmax(lap), _tmax(trans), _tmax(curv), _tmax(ric_term), _tmax(sq),
    )
    return IdentityResidual(
        "q_evolution_inequality", float(t), abs_res, rel, _grid_label(grid), float(dt)
    )


_IDENTITY_ORDER = (
    "L_evolution",
    "lemma1",
    "lemma2",
    "lemma3",
    "ricci_formula",
    "q_evolution_inequality",
)


def run_identity_suite(
    trajectory: FlowTrajectory,
    times=None,
    dt: float = 1e-4,
    identities=None,
) -> list[IdentityResidual]:
    """Run the selected identity checks at each probe time.

    times defaults to the stored times whose probe window [t - dt, t + dt]
    fits inside the trajectory range.  Any sub-check failure aborts with the
    identity and probe time named.  Output ordering is deterministic:
    time-major, then the canonical identity order.
    """
    idents = tuple(identities) if identities is not None else _IDENTITY_ORDER
    unknown = [i for i in idents if i not in _IDENTITY_ORDER]
    if unknown:
        raise ValueError(f"unknown identities {unknown}; choose from {_IDENTITY_ORDER}")
    if times is None:
        times = [
            float(t)
            for t in trajectory.times
            if t - dt >= trajectory.schedule.t_start - 1e-12
            and t + dt <= trajectory.schedule.t_end + 1e-12
        ]
    out = []
    model = trajectory.model
    for t in times:
        for ident in idents:
            try:
                if ident == "L_evolution":
                    res = check_L_evolution(trajectory, t, dt)
                elif ident == "lemma1":
                    res = check_lemma1(trajectory, t, dt)
                elif ident == "lemma2":
                    res = check_lemma2(model, trajectory.a0, trajectory.epsilon, t, dt)
                elif ident == "lemma3":
                    res = check_lemma3(trajectory, t, dt)
                elif ident == "ricci_formula":
                    a_t = krf_scale(model, trajectory.a0, trajectory.epsilon, t)
                    res = check_ricci_formula(model, a_t)
                else:
                    res = check_q_evolution_inequality(trajectory, t, dt)
            except Exception as exc:
                raise RuntimeError(f"identity check '{ident}' at t = {t} failed: {exc}") from exc
            out.append(res)
    return out


def convergence_order(dts, residuals) -> float:
    """Least-squares slope of log(residual) against log(dt); expect ~2."""
    x = np.log(np.asarray(dts, dtype=float))
    y = np.log(np.maximum(np.asarray(residuals, dtype=float), 1e-300))
    if x.size < 2:
        raise ValueError("need at least two dt values to fit an order")
    return float(np.polyfit(x, y, 1)[0])


def residuals_to_csv(residuals, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["identity_id", "t", "abs_residual", "rel_residual", "grid", "dt"])
        for r in residuals:
            writer.writerow([
                r.identity_id,
                f"{r.t:.17g}",
                f"{r.abs_residual:.17g}",
                f"{r.rel_residual:.17g}",
                r.grid,
                f"{r.dt:.17g}",
            ])
