"""Harnack quantities: constraint tensor, Q, Y, eigenvalues, reports."""

import csv

import numpy as np
import pytest

from lyhlab.fields import HermitianField, ScalarField, metric_factor
from lyhlab.flow import Schedule, evolve_pair
from lyhlab.geometry import flat_torus, fubini_study_cp1, metric_state
from lyhlab.grids import make_grid
from lyhlab.harnack import (
    LYHReport,
    ReportOptions,
    build_snapshot,
    compute_P,
    compute_Q,
    compute_Y,
    constraint_tensor,
    decomposition_audit,
    dominance_defect,
    log_density,
    min_eigenvalue,
    quotient,
    report,
    report_to_csv,
    verdict_summary,
)
from lyhlab.initial import make_initial_pair

TORUS = flat_torus(1, (1.0,), 32)

U_SPEC = {"generator": "random_bandlimited", "band": 2, "offset": 1.0, "amplitude": 0.25}
V_SPEC = {"generator": "random_bandlimited", "band": 2, "amplitude": 0.55}


def _torus_traj(seed=7, epsilon=0.0, N=32):
    model = flat_torus(1, (1.0,), N)
    u0, v0 = make_initial_pair(model, U_SPEC, V_SPEC, seed)
    sched = Schedule(0.01, 0.5, steps=7, snapshot_stride=1, fd_dt=1e-4)
    return evolve_pair(model, epsilon, u0, v0, sched)


def test_constant_density_q_is_metric_over_t():
    grid = make_grid(TORUS)
    u0 = ScalarField(grid, np.full(grid.shape, 2.0))
    v0 = ScalarField(grid, np.zeros(grid.shape))
    traj = evolve_pair(TORUS, 0.0, u0, v0, Schedule(0.1, 0.5, 4, 1, 1e-4))
    for t in (0.1, 0.25, 0.5):
        snap = build_snapshot(traj, t)
        assert np.allclose(snap.Q.values[..., 0, 0], 1.0 / t, atol=1e-13)
        lam = min_eigenvalue(snap.Q).values
        assert np.allclose(lam, 1.0 / t, atol=1e-13)
    # metric rescaling scales Q = g/t linearly
    traj2 = evolve_pair(TORUS, 0.0, u0, v0, Schedule(0.1, 0.5, 4, 1, 1e-4), a0=2.0)
    snap2 = build_snapshot(traj2, 0.25)
    assert np.allclose(snap2.Q.values[..., 0, 0], 2.0 / 0.25, atol=1e-13)


def test_constraint_tensor_hand_value():
    grid = make_grid(TORUS)
    x = grid.points.real
    h = ScalarField(grid, 0.5 * np.sin(2 * np.pi * x))
    C = constraint_tensor(h).values
    # at x = 0: h = 0, d_z h = pi/2, so C = pi^2/4
    assert C[0, 0, 0, 0] == pytest.approx(np.pi**2 / 4, rel=1e-12)
    # at the crest x = 1/4: h = 1/2, dh = 0, so C = 0
    i = int(np.argmin(np.abs(grid.axes[0] - 0.25)))
    assert abs(C[i, 0, 0, 0]) < 1e-12

    flat = ScalarField(grid, np.full(grid.shape, 0.6))
    assert np.max(np.abs(constraint_tensor(flat).values)) == 0.0
    with pytest.raises(ValueError, match="constraint tensor undefined"):
        constraint_tensor(ScalarField(grid, np.ones(grid.shape)))


def test_min_eigenvalue_closed_forms():
    grid = make_grid(TORUS)
    lam = min_eigenvalue(HermitianField(grid, np.full(grid.shape + (1, 1), 2.0, complex)))
    assert np.all(lam.values == 2.0)

    model2 = flat_torus(2, (1.0, 1.0), 8)
    grid2 = make_grid(model2)
    block = np.array([[2.0, 1.0j], [-1.0j, 2.0]])
    vals = np.broadcast_to(block, grid2.shape + (2, 2)).copy()
    lam2 = min_eigenvalue(HermitianField(grid2, vals))
    assert np.allclose(lam2.values, 1.0, atol=1e-14)

    rng = np.random.default_rng(3)
    raw = rng.standard_normal(grid2.shape + (2, 2)) + 1j * rng.standard_normal(grid2.shape + (2, 2))
    herm = 0.5 * (raw + np.conj(np.swapaxes(raw, -1, -2)))
    ours = min_eigenvalue(HermitianField(grid2, herm)).values
    ref = np.linalg.eigvalsh(herm)[..., 0]
    assert np.max(np.abs(ours - ref)) < 1e-12


def test_min_eigenvalue_rejects_nonhermitian():
    grid = make_grid(TORUS)
    # build through the constructor with a hermitian array, then corrupt it
    field = HermitianField(grid, np.zeros(grid.shape + (1, 1), complex))
    field.values[..., 0, 0] = 1.0j
    with pytest.raises(RuntimeError, match="internal-consistency error"):
        min_eigenvalue(field)


def test_collinear_pair_has_zero_constraint():
    grid = make_grid(TORUS)
    x = grid.points.real
    u0 = ScalarField(grid, 2.0 + 0.5 * np.cos(2 * np.pi * x))
    v0 = ScalarField(grid, 0.4 * u0.values)
    traj = evolve_pair(TORUS, 0.0, u0, v0, Schedule(0.05, 0.5, 5, 1, 1e-4))
    snap = build_snapshot(traj, 0.2)
    assert np.allclose(snap.h.values, 0.4, atol=1e-13)
    assert np.max(np.abs(snap.constraint.values)) < 1e-24
    assert np.max(np.abs(snap.Q.values - snap.Q_unconstrained.values)) < 1e-24


def test_density_rescaling_leaves_q_unchanged():
    grid = make_grid(TORUS)
    x = grid.points.real
    u = ScalarField(grid, 2.0 + 0.5 * np.cos(2 * np.pi * x))
    v = ScalarField(grid, 0.3 * np.sin(2 * np.pi * x))
    sched = Schedule(0.05, 0.5, 5, 1, 1e-4)
    snap1 = build_snapshot(evolve_pair(TORUS, 0.0, u, v, sched), 0.2)
    u3 = ScalarField(grid, 3.0 * u.values)
    v3 = ScalarField(grid, 3.0 * v.values)
    snap3 = build_snapshot(evolve_pair(TORUS, 0.0, u3, v3, sched), 0.2)
    assert np.allclose(snap1.Q.values, snap3.Q.values, atol=1e-12)
    assert np.allclose(snap1.h.values, snap3.h.values, atol=1e-14)


def test_dominance_and_decomposition():
    traj = _torus_traj(seed=7)
    for t in (0.01, 0.1, 0.5):
        snap = build_snapshot(traj, t)
        assert dominance_defect(snap, vectors=10, seed=0) <= 1e-12
        audit = decomposition_audit(snap)
        assert set(audit) == {"constraint", "holo_hessian_product", "mixed_hessian_product"}
        for val in audit.values():
            assert val >= -1e-10


def test_gaussian_saturates_the_estimate():
    grid = make_grid(TORUS)
    from lyhlab.initial import make_field

    u0 = make_field(grid, {"generator": "gaussian", "scale": 1.0}, None, t_start=0.002)
    v0 = ScalarField(grid, np.zeros(grid.shape))
    traj = evolve_pair(TORUS, 0.0, u0, v0, Schedule(0.002, 0.01, 4, 1, 1e-5))
    for t in (0.002, 0.004, 0.01):
        lam = min_eigenvalue(build_snapshot(traj, t).Q).values
        assert abs(float(np.min(lam))) * t < 1e-10


def test_cp1_constant_density_y_multiple():
    # constant u on CP^1 at eps = 1: with a = 1, t = 1 the matrix Y equals 6 g
    model = fubini_study_cp1(32)
    grid = make_grid(model)
    u0 = ScalarField(grid, np.full(grid.shape, 1.0))
    v0 = ScalarField(grid, np.zeros(grid.shape))
    traj = evolve_pair(model, 1.0, u0, v0, Schedule(0.5, 1.0, 2, 1, 1e-4), a0=3.0)
    snap = build_snapshot(traj, 1.0)
    assert snap.state.a == pytest.approx(1.0)
    Y = compute_Y(snap.L, snap.state, 1.0).values
    g = metric_factor(grid, 1.0)
    assert np.max(np.abs(Y[..., 0, 0] - 6.0 * g)) < 1e-10

    with pytest.raises(ValueError, match="requires epsilon > 0"):
        compute_Y(snap.L, metric_state(model, 1.0, 0.0, 0.0), 1.0)
    with pytest.raises(ValueError, match="t must be positive"):
        compute_Y(snap.L, snap.state, 0.0)


def test_q_requires_positive_time_and_matched_grids():
    traj = _torus_traj()
    snap = build_snapshot(traj, 0.1)
    with pytest.raises(ValueError, match="t must be positive"):
        compute_Q(snap.P, snap.state, 0.0)
    other = make_grid(flat_torus(1, (1.0,), 64))
    ric = HermitianField(other, np.zeros(other.shape + (1, 1), complex))
    with pytest.raises(ValueError, match="mismatched grids"):
        compute_P(snap.hess_L, ric, snap.constraint, 0.0)


def test_log_density_and_quotient_validation():
    grid = make_grid(TORUS)
    with pytest.raises(ValueError, match="non-positive density"):
        log_density(ScalarField(grid, np.zeros(grid.shape)))
    u = ScalarField(grid, np.full(grid.shape, 2.0))
    big = ScalarField(grid, np.full(grid.shape, 2.5))
    with pytest.raises(ValueError, match="ordering .* fails at node"):
        quotient(u, big)
    other = make_grid(flat_torus(1, (1.0,), 64))
    with pytest.raises(ValueError, match="incompatible grids"):
        quotient(u, ScalarField(other, np.zeros(other.shape)))


def test_report_columns_and_verdict():
    traj = _torus_traj(seed=3)
    rep = report(traj, ReportOptions(include_y=True))
    assert isinstance(rep, LYHReport)
    assert rep.verdict is True
    assert np.all(np.isnan(rep.min_y))  # eps = 0: Y undefined
    # dominance: constrained minimum can only sit below the unconstrained one
    assert np.all(rep.min_q <= rep.min_q_unconstrained + 1e-12)
    assert np.all(rep.margin > 0)
    assert np.max(np.abs(rep.mass / rep.mass[0] - 1.0)) < 1e-12
    assert np.all(rep.gap_max >= rep.gap_mean)

    summ = verdict_summary(rep)
    assert summ["verdict"] is True
    assert summ["min_y_overall"] is None
    assert summ["times"] == rep.times.size

    with pytest.raises(ValueError, match="must lie in the trajectory window"):
        report(traj, ReportOptions(times=[1.0]))
    with pytest.raises(ValueError, match="no report times selected"):
        report(traj, ReportOptions(times=[]))


def test_report_csv_format(tmp_path):
    traj = _torus_traj(seed=5)
    rep = report(traj, ReportOptions(times=[0.1, 0.3]))
    path = tmp_path / "report.csv"
    report_to_csv(rep, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "minQ", "minQ_unconstrained", "minY", "margin", "mass"]
    assert len(rows) == 3
    assert float(rows[1][0]) == 0.1
    assert float(rows[1][1]) == rep.min_q[0]
