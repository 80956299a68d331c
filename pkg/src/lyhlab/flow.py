"""Co-evolution of a positive solution pair (u, v) under the coupled flow.

The equation is d_t u = Delta_{g(t)} u + eps R(t) u with g(t) the
epsilon-Kahler-Ricci flow metric.  On the model manifolds g(t) stays a
homothety a(t) g_ref, so the equation diagonalizes in the reference
spectral basis with a time reparametrization tau(t) = int dt/a(t) and the
spatially constant eps R term becomes an exact integrating factor:

* torus: a(t) = a0, modes decay like exp(lambda_k (t - t0)/a0) with
  lambda_k = -|k|^2/4, and R = 0;
* CP^1: tau = ln(a(t0)/a(t)) / (2 eps) for eps > 0 (else (t - t0)/a0),
  mode l carries exp(-l(l+1) tau), and the eps R u source contributes the
  conformal factor a(t0)/a(t).

Trajectories are therefore exact in time: they can be sampled at any t in
the life of the flow (identity probes re-evolve to t +- dt instead of
interpolating), and the conserved mass int u dmu_{g(t)} drifts only by
roundoff.  Gaussian initial data bypass mode space entirely through their
closed-form evolver.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .fields import ScalarField, integrate
from .geometry import (
    ManifoldModel,
    MetricState,
    ModelKind,
    einstein_constant,
    krf_scale,
    metric_state,
)
from .grids import CP1Grid, TorusGrid, make_grid

__all__ = [
    "Schedule",
    "FlowTrajectory",
    "evolve_pair",
    "ordering_margin",
    "mass",
    "trajectory_manifest",
    "write_trajectory",
]


@dataclass(frozen=True)
class Schedule:
    """Report cadence: times linspace(t_start, t_end, steps + 1).

    fd_dt is the probe spacing used by identity checks; snapshot_stride
    thins field dumps (not the report itself).
    """

    t_start: float
    t_end: float
    steps: int
    snapshot_stride: int = 1
    fd_dt: float = 1e-4

    def __post_init__(self):
        if self.t_start < 0:
            raise ValueError("t_start must be nonnegative")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if not self.fd_dt > 0:
            raise ValueError("fd_dt must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.steps + 1)


class _TorusModeEvolver:
    def __init__(self, grid: TorusGrid, f0: ScalarField, t0: float, a0: float):
        self.grid = grid
        self.t0 = float(t0)
        self.rate = grid.lap_symbol_ref / a0
        self.modes0 = grid.to_modes(f0.values)

    def field_at(self, t: float) -> ScalarField:
        vals = np.real(self.grid.from_modes(self.modes0 * np.exp(self.rate * (t - self.t0))))
        return ScalarField(self.grid, vals, real=True)


class _CP1ModeEvolver:
    def __init__(self, grid: CP1Grid, f0: ScalarField, t0: float, a0: float, epsilon: float):
        self.grid = grid
        self.t0 = float(t0)
        self.a0 = float(a0)
        self.epsilon = float(epsilon)
        self.model = grid.model
        self.alm0 = grid.sht_analysis(f0.values)

    def field_at(self, t: float) -> ScalarField:
        a_t0 = krf_scale(self.model, self.a0, self.epsilon, self.t0)
        a_t = krf_scale(self.model, self.a0, self.epsilon, t)
        if self.epsilon > 0:
            tau = math.log(a_t0 / a_t) / (2.0 * self.epsilon)
            source = a_t0 / a_t
        else:
            tau = (t - self.t0) / self.a0
            source = 1.0
        factors = source * np.exp(self.grid.l_eigs_ref * tau)
        vals = np.real(self.grid.sht_synthesis(self.alm0 * factors[:, None]))
        return ScalarField(self.grid, vals, real=True)


def _build_evolver(model: ManifoldModel, f0: ScalarField, t0: float, a0: float, epsilon: float):
    if f0.exact is not None:
        return f0.exact  # closed-form solution carries its own field_at
    if model.kind is ModelKind.FLAT_TORUS:
        return _TorusModeEvolver(f0.grid, f0, t0, a0)
    return _CP1ModeEvolver(f0.grid, f0, t0, a0, epsilon)


@dataclass(eq=False)
class FlowTrajectory:
    """Exact-in-time solution pair with stored report snapshots."""

    model: ManifoldModel
    epsilon: float
    a0: float
    schedule: Schedule
    times: np.ndarray
    states: list
    u: list
    v: list
    u_evolver: object = field(repr=False, default=None)
    v_evolver: object = field(repr=False, default=None)

    def sample(self, t: float):
        """(MetricState, u, v) at any alive time, evolved exactly."""
        state = metric_state(self.model, self.a0, self.epsilon, t)
        return state, self.u_evolver.field_at(t), self.v_evolver.field_at(t)


def ordering_margin(u: ScalarField, v: ScalarField) -> float:
    """min over nodes of u - |v|; positive iff |v| < u strictly."""
    return float(np.min(u.values - np.abs(v.values)))


def evolve_pair(
    model: ManifoldModel,
    epsilon: float,
    u0: ScalarField,
    v0: ScalarField,
    schedule: Schedule,
    a0: float = 1.0,
) -> FlowTrajectory:
    """Evolve the pair over the schedule, enforcing u > 0 and |v| < u."""
    if not u0.grid.compatible(v0.grid):
        raise ValueError("u0 and v0 live on different grids")
    if u0.grid.model != model:
        raise ValueError("initial data grid does not match the model")
    umin = float(np.min(u0.values))
    if not umin > 0:
        raise ValueError(f"u0 must be strictly positive (min = {umin})")
    margin0 = ordering_margin(u0, v0)
    if not margin0 > 0:
        raise ValueError(f"ordering violation in inputs: min(u0 - |v0|) = {margin0}")
    krf_scale(model, a0, epsilon, schedule.t_end)  # extinction check up front

    t0 = schedule.t_start
    u_ev = _build_evolver(model, u0, t0, a0, epsilon)
    v_ev = _build_evolver(model, v0, t0, a0, epsilon)
    times = schedule.times
    states, us, vs = [], [], []
    for t in times:
        state = metric_state(model, a0, epsilon, float(t))
        ut = u_ev.field_at(float(t))
        vt = v_ev.field_at(float(t))
        if not float(np.min(ut.values)) > 0:
            raise ValueError(f"positivity lost at t = {t}")
        if not ordering_margin(ut, vt) > 0:
            raise ValueError(f"ordering |v| < u lost at t = {t}")
        states.append(state)
        us.append(ut)
        vs.append(vt)
    return FlowTrajectory(model, float(epsilon), float(a0), schedule, times, states, us, vs, u_ev, v_ev)


def mass(trajectory: FlowTrajectory, index: int) -> float:
    """Conserved mass int u dmu_{g(t)} at a stored time."""
    return integrate(trajectory.u[index], trajectory.states[index])


# -- serialization ---------------------------------------------------------------


def trajectory_manifest(trajectory: FlowTrajectory) -> dict:
    model = trajectory.model
    return {
        "model": model.kind.value,
        "complex_dimension": model.complex_dimension,
        "periods": list(model.periods),
        "resolution": model.grid_resolution,
        "epsilon": trajectory.epsilon,
        "a0": trajectory.a0,
        "einstein_constant": einstein_constant(model),
        "times": [float(t) for t in trajectory.times],
        "scales": [s.a for s in trajectory.states],
        "schedule": {
            "t_start": trajectory.schedule.t_start,
            "t_end": trajectory.schedule.t_end,
            "steps": trajectory.schedule.steps,
            "snapshot_stride": trajectory.schedule.snapshot_stride,
            "fd_dt": trajectory.schedule.fd_dt,
        },
    }


def _coordinate_columns(grid) -> tuple[list[str], list[np.ndarray]]:
    if isinstance(grid, CP1Grid):
        th, ph = np.meshgrid(grid.theta, grid.phi, indexing="ij")
        return ["theta", "phi"], [th.ravel(), ph.ravel()]
    names, cols = [], []
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    for d in range(grid.complex_dimension):
        suffix = str(d + 1) if grid.complex_dimension > 1 else ""
        names += [f"x{suffix}", f"y{suffix}"]
        cols += [mesh[2 * d].ravel(), mesh[2 * d + 1].ravel()]
    return names, cols


def write_trajectory(trajectory: FlowTrajectory, directory: str) -> None:
    """JSON manifest plus one CSV per kept snapshot (coords, u, v)."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "trajectory.json"), "w") as fh:
        json.dump(trajectory_manifest(trajectory), fh, indent=2, sort_keys=True)
    names, coords = _coordinate_columns(trajectory.u[0].grid)
    stride = trajectory.schedule.snapshot_stride
    for i in range(0, len(trajectory.times), stride):
        path = os.path.join(directory, f"snapshot_{i:04d}.csv")
        with open(path, "w") as fh:
            fh.write(",".join(names + ["u", "v"]) + "\n")
            cols = coords + [trajectory.u[i].values.ravel(), trajectory.v[i].values.ravel()]
            for row in zip(*cols):
                fh.write(",".join(f"{val:.17g}" for val in row) + "\n")
