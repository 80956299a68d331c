"""Command line driver: lyhlab run | sweep | describe.

run       evolve all (epsilon, seed) trajectories of one config, evaluate the
          enabled suites, write manifest.json / report.csv / residuals.csv
          (plus verdict.json and optional field dumps); exit 0 iff every
          enabled suite passed.
sweep     re-run the config once per value of one axis (epsilon, resolution,
          seed, dt), points in a worker pool, each point's artifacts in its
          own atomically published subdirectory, plus a top level summary.csv
          whose leading column is the swept value.
describe  print the resolved plan (model constants, extinction, Nyquist,
          suites, work estimate) without computing anything.

Output is deterministic: reruns of the same config produce byte-identical
CSV and JSON artifacts.  LYHLAB_THREADS caps the sweep worker pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import (
    SWEEP_AXES,
    ExperimentConfig,
    build_model,
    config_from_dict,
    describe_config,
    manifest_dict,
)
from .flow import Schedule, evolve_pair, ordering_margin, write_trajectory
from .harnack import (
    ReportOptions,
    build_snapshot,
    compute_Y,
    min_eigenvalue,
    report,
    report_rows,
)
from .identities import run_identity_suite
from .initial import make_initial_pair

__all__ = ["main"]

_REPORT_HEADER = ["trajectory_id", "t", "minQ", "minQ_unconstrained", "minY", "margin", "mass"]
_RESIDUAL_HEADER = ["trajectory_id", "identity_id", "t", "abs_residual", "rel_residual", "grid", "dt"]
_SUMMARY_FIELDS = [
    "passed", "min_eig_Q", "min_eig_Q_unconstrained", "min_eig_Y",
    "min_margin", "max_mass_drift", "max_identity_rel", "max_q_violation",
]
_VIOLATION_LIMIT = 10


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _trajectory_id(epsilon: float, seed: int) -> str:
    return f"eps={epsilon:g}-seed={seed}"


def _fmt_violations(pairs) -> str:
    """pairs: (node tuple or None, t, value); node None means integral data."""
    chunks = []
    for node, t, value in pairs:
        where = "node=-" if node is None else f"node={node}"
        chunks.append(f"({where}, t={t:g}, value={value:.6g})")
    return "; ".join(chunks)


def _eigen_violations(trajectory, times, tol: float, which: str, limit: int = _VIOLATION_LIMIT):
    """First violating (node, t, eigenvalue) entries, lexicographic in (t, node)."""
    pairs = []
    for t in times:
        snap = build_snapshot(trajectory, float(t))
        if which == "Y":
            field = compute_Y(snap.L, snap.state, float(t))
        else:
            field = snap.Q
        lam = min_eigenvalue(field).values
        for node in np.argwhere(lam < -tol):
            idx = tuple(int(i) for i in node)
            pairs.append((idx, float(t), float(lam[idx])))
            if len(pairs) >= limit:
                return pairs
    return pairs


def _sharpness_violations(trajectory, times, tol: float, limit: int = _VIOLATION_LIMIT):
    """Nodes where |min eig Q| * t exceeds tol."""
    pairs = []
    for t in times:
        snap = build_snapshot(trajectory, float(t))
        lam = min_eigenvalue(snap.Q).values
        for node in np.argwhere(np.abs(lam) * float(t) > tol):
            idx = tuple(int(i) for i in node)
            pairs.append((idx, float(t), float(abs(lam[idx]) * float(t))))
            if len(pairs) >= limit:
                return pairs
    return pairs


def _margin_violations(trajectory, indices, threshold: float, limit: int = _VIOLATION_LIMIT):
    """Nodes where u - |v| drops to or below threshold at stored times."""
    pairs = []
    for i in indices:
        gap = trajectory.u[i].values - np.abs(trajectory.v[i].values)
        t = float(trajectory.times[i])
        for node in np.argwhere(gap <= threshold):
            idx = tuple(int(i2) for i2 in node)
            pairs.append((idx, t, float(gap[idx])))
            if len(pairs) >= limit:
                return pairs
    return pairs


class _RunOutcome:
    """Per-config execution result: pass/fail, log lines, CSV rows, aggregates."""

    def __init__(self):
        self.lines: list[str] = []
        self.suite_pass: dict[str, bool] = {}
        self.report_rows: list[tuple] = []
        self.residual_rows: list[tuple] = []
        self.trajectory_ids: list[str] = []
        self.trajectories: dict[str, object] = {}
        self.aggregates: dict[str, float] = {
            "min_eig_Q": float("inf"),
            "min_eig_Q_unconstrained": float("inf"),
            "min_eig_Y": float("nan"),
            "min_margin": float("inf"),
            "max_mass_drift": 0.0,
            "max_identity_rel": float("nan"),
            "max_q_violation": float("nan"),
        }

    @property
    def passed(self) -> bool:
        return all(self.suite_pass.values())

    def _acc_min(self, key: str, value: float):
        cur = self.aggregates[key]
        self.aggregates[key] = value if np.isnan(cur) else min(cur, value)

    def _acc_max(self, key: str, value: float):
        cur = self.aggregates[key]
        self.aggregates[key] = value if np.isnan(cur) else max(cur, value)


def _identity_probe_times(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.identity_times is not None:
        return cfg.identity_times
    return (0.5 * (cfg.t_start + cfg.t_end),)


def _execute(cfg: ExperimentConfig) -> _RunOutcome:
    """Evolve every (epsilon, seed) pair and evaluate the enabled suites."""
    out = _RunOutcome()
    out.suite_pass = {s: True for s in cfg.suites}
    model = build_model(cfg)
    schedule = Schedule(cfg.t_start, cfg.t_end, cfg.steps, cfg.snapshot_stride, cfg.fd_dt)

    # validate every initial pair before evolving anything
    pairs = {}
    for seed in cfg.seeds:
        u0, v0 = make_initial_pair(
            model, cfg.u_generator, cfg.v_generator, seed, cfg.a0, cfg.t_start
        )
        margin0 = ordering_margin(u0, v0)
        if not margin0 > cfg.margin_floor:
            raise ValueError(
                f"initial data at seed {seed}: ordering margin min(u0 - |v0|) = "
                f"{margin0:g} must exceed margin_floor = {cfg.margin_floor:g}"
            )
        pairs[seed] = (u0, v0)

    for eps in cfg.epsilon:
        for seed in cfg.seeds:
            tid = _trajectory_id(eps, seed)
            out.trajectory_ids.append(tid)
            u0, v0 = pairs[seed]
            traj = evolve_pair(model, eps, u0, v0, schedule, cfg.a0)
            out.trajectories[tid] = traj
            rep = report(traj, ReportOptions(include_y=True))
            rows = report_rows(rep)
            out.report_rows.extend((tid, *row) for row in rows)

            out._acc_min("min_eig_Q", float(np.min(rep.min_q)))
            out._acc_min("min_eig_Q_unconstrained", float(np.min(rep.min_q_unconstrained)))
            if eps > 0:
                out._acc_min("min_eig_Y", float(np.nanmin(rep.min_y)))
            out._acc_min("min_margin", float(np.min(rep.margin)))
            drift = np.abs(rep.mass / rep.mass[0] - 1.0)
            out._acc_max("max_mass_drift", float(np.max(drift)))

            if "positivity" in cfg.suites:
                _suite_positivity(cfg, out, tid, traj, rep, eps)
            if "conservation" in cfg.suites:
                _suite_conservation(cfg, out, tid, traj, rep, drift)
            if "sharpness" in cfg.suites:
                _suite_sharpness(cfg, out, tid, traj, rep)
            if "identities" in cfg.suites:
                _suite_identities(cfg, out, tid, traj)
    return out


def _suite_positivity(cfg, out, tid, traj, rep, eps):
    ok = True
    bad_q = rep.times[rep.min_q < -cfg.tol_q]
    if bad_q.size:
        ok = False
        pairs = _eigen_violations(traj, bad_q, cfg.tol_q, "Q")
        out.lines.append(
            f"FAIL positivity [{tid}]: min eig Q = {np.min(rep.min_q):.6g} < "
            f"-{cfg.tol_q:g} at {bad_q.size} of {rep.times.size} times; "
            f"first violations: {_fmt_violations(pairs)}"
        )
    if eps > 0:
        bad_y = rep.times[rep.min_y < -cfg.tol_y]
        if bad_y.size:
            ok = False
            pairs = _eigen_violations(traj, bad_y, cfg.tol_y, "Y")
            out.lines.append(
                f"FAIL positivity [{tid}]: min eig Y = {np.nanmin(rep.min_y):.6g} < "
                f"-{cfg.tol_y:g} at {bad_y.size} times; "
                f"first violations: {_fmt_violations(pairs)}"
            )
    if ok:
        extra = f", min eig Y = {np.nanmin(rep.min_y):.6g} >= -{cfg.tol_y:g}" if eps > 0 else ""
        out.lines.append(
            f"PASS positivity [{tid}]: min eig Q = {np.min(rep.min_q):.6g} >= "
            f"-{cfg.tol_q:g}{extra}"
        )
    out.suite_pass["positivity"] &= ok


def _suite_conservation(cfg, out, tid, traj, rep, drift):
    ok = True
    dmax = float(np.max(drift))
    if dmax > cfg.tol_mass:
        ok = False
        bad = [(None, float(t), float(d)) for t, d in zip(rep.times, drift) if d > cfg.tol_mass]
        out.lines.append(
            f"FAIL conservation [{tid}]: mass drift = {dmax:.6g} > {cfg.tol_mass:g}; "
            f"first violations: {_fmt_violations(bad[:_VIOLATION_LIMIT])}"
        )
    floor = cfg.margin_fraction * rep.margin[0]
    bad_idx = [i for i, m in enumerate(rep.margin) if m <= 0 or m < floor]
    if bad_idx:
        ok = False
        pairs = _margin_violations(traj, bad_idx, max(0.0, floor))
        out.lines.append(
            f"FAIL conservation [{tid}]: ordering margin fell to "
            f"{np.min(rep.margin):.6g} (initial {rep.margin[0]:.6g}, floor {floor:.6g}); "
            f"first violations: {_fmt_violations(pairs)}"
        )
    if ok:
        out.lines.append(
            f"PASS conservation [{tid}]: mass drift = {dmax:.6g} <= {cfg.tol_mass:g}, "
            f"margin kept {np.min(rep.margin) / rep.margin[0]:.3g} of initial"
        )
    out.suite_pass["conservation"] &= ok


def _suite_sharpness(cfg, out, tid, traj, rep):
    prod = np.abs(rep.min_q) * rep.times
    worst = float(np.max(prod))
    bad = rep.times[prod > cfg.tol_sharpness]
    if bad.size:
        pairs = _sharpness_violations(traj, bad, cfg.tol_sharpness)
        out.lines.append(
            f"FAIL sharpness [{tid}]: |min eig Q| * t = {worst:.6g} > "
            f"{cfg.tol_sharpness:g}; first violations: {_fmt_violations(pairs)}"
        )
        out.suite_pass["sharpness"] = False
    else:
        out.lines.append(
            f"PASS sharpness [{tid}]: |min eig Q| * t = {worst:.6g} <= {cfg.tol_sharpness:g}"
        )


def _suite_identities(cfg, out, tid, traj):
    times = _identity_probe_times(cfg)
    residuals = run_identity_suite(traj, times=times, dt=cfg.fd_dt, identities=cfg.identities)
    out.residual_rows.extend(
        (tid, r.identity_id, r.t, r.abs_residual, r.rel_residual, r.grid, r.dt)
        for r in residuals
    )
    bad = []
    worst_rel, worst_q = 0.0, 0.0
    for r in residuals:
        if r.identity_id == "q_evolution_inequality":
            worst_q = max(worst_q, r.abs_residual)
            if r.abs_residual > cfg.tol_q_evolution:
                bad.append((None, r.t, r.abs_residual))
        else:
            worst_rel = max(worst_rel, r.rel_residual)
            if r.rel_residual > cfg.tol_identity_rel:
                bad.append((r.identity_id, r.t, r.rel_residual))
    if any(r.identity_id != "q_evolution_inequality" for r in residuals):
        out._acc_max("max_identity_rel", worst_rel)
    if any(r.identity_id == "q_evolution_inequality" for r in residuals):
        out._acc_max("max_q_violation", worst_q)
    if bad:
        shown = "; ".join(
            f"({ident or 'q_evolution_inequality'}, t={t:g}, value={v:.6g})"
            for ident, t, v in bad[:_VIOLATION_LIMIT]
        )
        out.lines.append(
            f"FAIL identities [{tid}]: {len(bad)} residuals over tolerance; "
            f"first violations: {shown}"
        )
        out.suite_pass["identities"] = False
    else:
        out.lines.append(
            f"PASS identities [{tid}]: max rel residual = {worst_rel:.6g} <= "
            f"{cfg.tol_identity_rel:g}, max Q-inequality violation = {worst_q:.6g} <= "
            f"{cfg.tol_q_evolution:g}"
        )


# -- artifacts ---------------------------------------------------------------


def _write_report_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_REPORT_HEADER)
        for tid, *vals in rows:
            writer.writerow([tid] + [_fmt(v) for v in vals])


def _write_residuals_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RESIDUAL_HEADER)
        for tid, ident, t, absr, relr, grid, dt in rows:
            writer.writerow([tid, ident, _fmt(t), _fmt(absr), _fmt(relr), grid, _fmt(dt)])


def _write_manifest(path, cfg: ExperimentConfig, command: str, trajectory_ids):
    doc = {
        "schema_version": cfg.schema_version,
        "library_version": __version__,
        "command": command,
        "config": manifest_dict(cfg),
        "trajectory_ids": list(trajectory_ids),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_verdict(path, outcome: _RunOutcome):
    def clean(x):
        return x if math.isfinite(x) else None

    doc = {
        "passed": outcome.passed,
        "suites": dict(sorted(outcome.suite_pass.items())),
        "aggregates": {k: clean(outcome.aggregates[k]) for k in sorted(outcome.aggregates)},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _publish(stage: str, out_dir: str):
    """Swap the staged directory into place; never leaves a half-written out."""
    target = os.path.abspath(out_dir)
    if os.path.exists(target):
        is_ours = os.path.isdir(target) and (
            not os.listdir(target)
            or os.path.exists(os.path.join(target, "manifest.json"))
            or os.path.exists(os.path.join(target, "summary.csv"))
        )
        if not is_ours:
            raise ValueError(
                f"out: refusing to overwrite {out_dir!r}: not a previous artifact directory"
            )
        shutil.rmtree(target)
    os.replace(stage, target)


def _stage_dir(out_dir: str) -> str:
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".stage-", dir=parent)
    os.chmod(stage, 0o755)
    return stage


def _run_and_write(cfg: ExperimentConfig, command: str = "run") -> _RunOutcome:
    outcome = _execute(cfg)
    stage = _stage_dir(cfg.out)
    try:
        _write_manifest(os.path.join(stage, "manifest.json"), cfg, command, outcome.trajectory_ids)
        _write_report_csv(os.path.join(stage, "report.csv"), outcome.report_rows)
        _write_residuals_csv(os.path.join(stage, "residuals.csv"), outcome.residual_rows)
        _write_verdict(os.path.join(stage, "verdict.json"), outcome)
        if cfg.dump_fields:
            for tid in outcome.trajectory_ids:
                write_trajectory(outcome.trajectories[tid], os.path.join(stage, "fields", tid))
        _publish(stage, cfg.out)
    finally:
        if os.path.exists(stage):
            shutil.rmtree(stage)
    return outcome


# -- commands ----------------------------------------------------------------


def _command_run(cfg: ExperimentConfig) -> bool:
    print(
        f"run: model={cfg.model} N={cfg.resolution} "
        f"epsilon={[float(e) for e in cfg.epsilon]} seeds={len(cfg.seeds)} "
        f"suites={','.join(cfg.suites)}"
    )
    outcome = _run_and_write(cfg)
    for line in outcome.lines:
        print(line)
    print(f"wrote {cfg.out}")
    n = len(outcome.trajectory_ids)
    if outcome.passed:
        print(f"PASS: {len(cfg.suites)} suites passed on {n} trajectories")
    else:
        failed = sorted(s for s, ok in outcome.suite_pass.items() if not ok)
        print(f"FAIL: suites failed: {', '.join(failed)} ({n} trajectories)")
    return outcome.passed


def _thread_cap(cfg: ExperimentConfig, npoints: int) -> int:
    cap = cfg.threads if cfg.threads is not None else npoints
    env = os.environ.get("LYHLAB_THREADS")
    if env is not None:
        try:
            env_cap = int(env)
        except ValueError:
            env_cap = 0
        if env_cap < 1:
            raise ValueError(f"LYHLAB_THREADS: must be a positive integer, got {env!r}")
        cap = min(cap, env_cap)
    return max(1, min(cap, npoints))


def _point_config(cfg: ExperimentConfig, axis: str, value, out_dir: str) -> ExperimentConfig:
    """Rebuild a one-point config through full validation."""
    doc = manifest_dict(cfg)
    doc.pop("sweep_values")
    for key in ("threads", "identity_times"):
        if doc[key] is None:
            doc.pop(key)
    if doc["model"] == "cp1":
        doc.pop("periods")
    if axis == "epsilon":
        doc["epsilon"] = [value]
    elif axis == "resolution":
        doc["resolution"] = value
    elif axis == "seed":
        doc["seeds"] = [value]
    else:
        doc["fd_dt"] = value
    doc["out"] = out_dir
    try:
        return config_from_dict(doc)
    except ValueError as exc:
        raise ValueError(f"sweep point {axis}={value!r}: {exc}") from exc


def _command_sweep(cfg: ExperimentConfig, axis: str) -> bool:
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis: must be one of {', '.join(SWEEP_AXES)}, got {axis!r}")
    if cfg.sweep_values is None:
        raise ValueError("sweep_values: required in the config for the sweep command")
    values = cfg.sweep_values

    # validate every point before computing any of them
    points = []
    for v in values:
        sub_out = os.path.join(cfg.out, f"{axis}={v:g}" if isinstance(v, float) else f"{axis}={v}")
        points.append((v, _point_config(cfg, axis, v, sub_out)))

    workers = _thread_cap(cfg, len(points))
    print(
        f"sweep: axis={axis} values={[v for v, _ in points]} workers={workers} "
        f"model={cfg.model}"
    )
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_and_write, sub, "sweep-point") for _, sub in points]
        outcomes = [f.result() for f in futures]

    rows = []
    for (v, sub), outcome in zip(points, outcomes):
        for line in outcome.lines:
            print(f"[{axis}={v:g}] {line}" if isinstance(v, float) else f"[{axis}={v}] {line}")
        agg = outcome.aggregates
        rows.append([v, str(outcome.passed).lower()] + [_fmt(agg[k]) for k in _SUMMARY_FIELDS[1:]])

    os.makedirs(cfg.out, exist_ok=True)
    summary_path = os.path.join(cfg.out, "summary.csv")
    tmp = summary_path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis] + _SUMMARY_FIELDS)
        for row in rows:
            writer.writerow(row)
    os.replace(tmp, summary_path)
    print(f"wrote {summary_path}")

    if axis == "epsilon" and len(outcomes) > 1:
        minq = np.array([o.aggregates["min_eig_Q"] for o in outcomes])
        d = np.diff(minq)
        if np.all(d <= 1e-15):
            trend = "nonincreasing"
        elif np.all(d >= -1e-15):
            trend = "nondecreasing"
        else:
            trend = "not monotone"
        print(
            "epsilon sweep: min eig Q across epsilon = "
            f"[{', '.join(f'{q:.6g}' for q in minq)}] is {trend} (reported, not asserted)"
        )

    passed = all(o.passed for o in outcomes)
    print("PASS: all sweep points passed" if passed else "FAIL: at least one sweep point failed")
    return passed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lyhlab",
        description="Constrained matrix Harnack laboratory on model Kahler manifolds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evolve one config and evaluate its suites")
    p_run.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_run.add_argument("--out", help="override the artifact directory")
    p_run.add_argument("--suite", action="append", help="run only the named suite (repeatable)")

    p_sweep = sub.add_parser("sweep", help="run the config once per value of one axis")
    p_sweep.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES, help="axis to sweep")
    p_sweep.add_argument("--out", help="override the artifact directory")
    p_sweep.add_argument("--suite", action="append", help="run only the named suite (repeatable)")

    p_desc = sub.add_parser("describe", help="print the resolved plan without computing")
    p_desc.add_argument("--config", required=True, help="path to a JSON experiment config")

    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config: not valid JSON ({exc})", file=sys.stderr)
        return 2
    if not isinstance(doc, dict):
        print("error: config: top level must be a JSON object", file=sys.stderr)
        return 2
    if getattr(args, "out", None):
        doc["out"] = args.out
    if getattr(args, "suite", None):
        doc["suites"] = list(args.suite)

    try:
        cfg = config_from_dict(doc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "describe":
        print(describe_config(cfg))
        return 0

    try:
        ok = _command_run(cfg) if args.command == "run" else _command_sweep(cfg, args.axis)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
