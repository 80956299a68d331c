"""Experiment configuration: one flat JSON document, fully validated.

Schema (keys at top level; unknown keys are rejected):

    model             "flat_torus" | "cp1"                      (required)
    complex_dimension torus dimension n, default 1
    periods           torus chart periods, one per dimension, default [1.0]*n
    resolution        nodes per real axis, even, >= 8, default 64
    a0                initial metric scale, > 0, default 1.0
    epsilon           flow coupling(s): number or list, each >= 0, default [0.0]
    t_start/t_end     reported window, 0 < t_start < t_end     (required)
    steps             evolution steps across the window, >= 1  (required)
    snapshot_stride   report every k-th step, default 1
    fd_dt             identity-probe time step, default 1e-4
    seeds             int k (meaning 0..k-1) or explicit list, default [0]
    u_generator       {"generator": name, ...params}, default constant 1.0
    v_generator       same, default constant 0.0
    suites            subset of ["positivity","identities","sharpness",
                      "conservation"], default ["positivity","conservation"]
    identities        identity-check subset for the identities suite,
                      default all
    identity_times    probe times, default: stored midpoint time
    tol_q             positivity floor for min eig Q, default 1e-6
    tol_y             positivity floor for min eig Y (eps > 0), default 1e-6
    tol_sharpness     bound on |min eig Q| * t, default 1e-6
    tol_identity_rel  relative residual bound, default 1e-5
    tol_q_evolution   bound on the Q-inequality violation, default 1e-4
    tol_mass          relative mass-drift bound, default 1e-8 (torus)
                      or 1e-6 (cp1)
    margin_floor      required initial ordering margin, default 0.0 (strict > 0)
    margin_fraction   fraction of the initial margin that must survive,
                      default 0.5
    dump_fields       also write per-snapshot field CSVs, default false
    out               artifact directory, default "runs/<model>"
    threads           sweep worker cap (LYHLAB_THREADS caps further),
                      default: all sweep points
    schema_version    manifest schema, default 1
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .geometry import ManifoldModel, extinction_time, flat_torus, fubini_study_cp1
from .initial import GENERATORS

__all__ = [
    "SCHEMA_VERSION",
    "SUITES",
    "SWEEP_AXES",
    "ExperimentConfig",
    "config_from_dict",
    "load_config",
    "build_model",
    "manifest_dict",
    "describe_config",
]

SCHEMA_VERSION = 1
SUITES = ("positivity", "identities", "sharpness", "conservation")
SWEEP_AXES = ("epsilon", "resolution", "seed", "dt")

_IDENTITY_IDS = (
    "L_evolution",
    "lemma1",
    "lemma2",
    "lemma3",
    "ricci_formula",
    "q_evolution_inequality",
)

_KNOWN_KEYS = {
    "model", "complex_dimension", "periods", "resolution", "a0", "epsilon",
    "t_start", "t_end", "steps", "snapshot_stride", "fd_dt", "seeds",
    "u_generator", "v_generator", "suites", "identities", "identity_times",
    "tol_q", "tol_y", "tol_sharpness", "tol_identity_rel", "tol_q_evolution",
    "tol_mass", "margin_floor", "margin_fraction", "dump_fields", "out",
    "threads", "schema_version", "sweep_values",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment plan; every field is concrete (defaults applied)."""

    model: str
    complex_dimension: int
    periods: tuple[float, ...]
    resolution: int
    a0: float
    epsilon: tuple[float, ...]
    t_start: float
    t_end: float
    steps: int
    snapshot_stride: int
    fd_dt: float
    seeds: tuple[int, ...]
    u_generator: dict
    v_generator: dict
    suites: tuple[str, ...]
    identities: tuple[str, ...]
    identity_times: tuple[float, ...] | None
    tol_q: float
    tol_y: float
    tol_sharpness: float
    tol_identity_rel: float
    tol_q_evolution: float
    tol_mass: float
    margin_floor: float
    margin_fraction: float
    dump_fields: bool
    out: str
    threads: int | None
    schema_version: int
    sweep_values: tuple | None


def _fail(name: str, message: str):
    raise ValueError(f"{name}: {message}")


def _number(doc: dict, name: str, default, positive=False, nonnegative=False) -> float:
    raw = doc.get(name, default)
    if raw is None:
        _fail(name, "is required")
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        _fail(name, f"must be a number, got {raw!r}")
    val = float(raw)
    if not math.isfinite(val):
        _fail(name, "must be finite")
    if positive and not val > 0:
        _fail(name, f"must be positive, got {val}")
    if nonnegative and val < 0:
        _fail(name, f"must be nonnegative, got {val}")
    return val


def _integer(doc: dict, name: str, default, minimum=None) -> int:
    raw = doc.get(name, default)
    if isinstance(raw, bool) or not isinstance(raw, int):
        _fail(name, f"must be an integer, got {raw!r}")
    if minimum is not None and raw < minimum:
        _fail(name, f"must be >= {minimum}, got {raw}")
    return raw


def _generator_spec(doc: dict, name: str, default: dict) -> dict:
    raw = doc.get(name, default)
    if not isinstance(raw, dict):
        _fail(name, f"must be an object, got {raw!r}")
    gen = raw.get("generator")
    if gen not in GENERATORS:
        _fail(name, f"generator must be one of {', '.join(GENERATORS)}, got {gen!r}")
    return dict(raw)


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ValueError("config: top level must be a JSON object")
    unknown = sorted(set(doc) - _KNOWN_KEYS)
    if unknown:
        raise ValueError(f"unknown config key {unknown[0]!r}")

    model = doc.get("model")
    if model not in ("flat_torus", "cp1"):
        _fail("model", f"must be 'flat_torus' or 'cp1', got {model!r}")

    n = _integer(doc, "complex_dimension", 1, minimum=1)
    if model == "cp1" and n != 1:
        _fail("complex_dimension", "must be 1 on cp1")

    raw_periods = doc.get("periods")
    if model == "cp1":
        if raw_periods is not None:
            _fail("periods", "only meaningful for flat_torus")
        periods: tuple[float, ...] = ()
    else:
        if raw_periods is None:
            periods = (1.0,) * n
        else:
            if not isinstance(raw_periods, (list, tuple)):
                _fail("periods", f"must be a list of numbers, got {raw_periods!r}")
            if len(raw_periods) != n:
                _fail("periods", f"needs one entry per complex dimension ({n}), got {len(raw_periods)}")
            vals = []
            for p in raw_periods:
                if isinstance(p, bool) or not isinstance(p, (int, float)) or not p > 0:
                    _fail("periods", f"entries must be positive numbers, got {p!r}")
                vals.append(float(p))
            periods = tuple(vals)

    resolution = _integer(doc, "resolution", 64, minimum=8)
    if resolution % 2:
        _fail("resolution", f"must be even, got {resolution}")

    a0 = _number(doc, "a0", 1.0, positive=True)

    raw_eps = doc.get("epsilon", [0.0])
    if isinstance(raw_eps, (int, float)) and not isinstance(raw_eps, bool):
        raw_eps = [raw_eps]
    if not isinstance(raw_eps, (list, tuple)) or not raw_eps:
        _fail("epsilon", f"must be a number or nonempty list, got {raw_eps!r}")
    epsilon = []
    for e in raw_eps:
        if isinstance(e, bool) or not isinstance(e, (int, float)) or e < 0:
            _fail("epsilon", f"values must be nonnegative numbers, got {e!r}")
        epsilon.append(float(e))
    epsilon = tuple(epsilon)

    t_start = _number(doc, "t_start", None, positive=True)
    t_end = _number(doc, "t_end", None, positive=True)
    if not t_end > t_start:
        _fail("t_end", f"must exceed t_start = {t_start}, got {t_end}")
    steps = _integer(doc, "steps", None, minimum=1)
    snapshot_stride = _integer(doc, "snapshot_stride", 1, minimum=1)
    fd_dt = _number(doc, "fd_dt", 1e-4, positive=True)
    if fd_dt >= t_start:
        _fail("fd_dt", f"must be smaller than t_start = {t_start} (probe window)")

    if model == "cp1":
        for e in epsilon:
            ext = extinction_time(fubini_study_cp1(resolution), a0, e)
            if t_end >= ext:
                _fail("t_end", f"must stay below extinction at t = {ext:g} for epsilon = {e:g}")

    raw_seeds = doc.get("seeds", [0])
    if isinstance(raw_seeds, int) and not isinstance(raw_seeds, bool):
        if raw_seeds < 1:
            _fail("seeds", f"count must be >= 1, got {raw_seeds}")
        seeds = tuple(range(raw_seeds))
    elif isinstance(raw_seeds, (list, tuple)) and raw_seeds:
        for s in raw_seeds:
            if isinstance(s, bool) or not isinstance(s, int) or s < 0:
                _fail("seeds", f"entries must be nonnegative integers, got {s!r}")
        seeds = tuple(int(s) for s in raw_seeds)
    else:
        _fail("seeds", f"must be a count or nonempty list of integers, got {raw_seeds!r}")

    u_generator = _generator_spec(doc, "u_generator", {"generator": "constant", "amplitude": 1.0})
    v_generator = _generator_spec(doc, "v_generator", {"generator": "constant", "amplitude": 0.0})
    if u_generator["generator"] == "gaussian" and model != "flat_torus":
        _fail("u_generator", "gaussian generator requires the flat_torus model")
    if v_generator["generator"] == "gaussian":
        _fail("v_generator", "gaussian generator is supported for u only")

    raw_suites = doc.get("suites", ["positivity", "conservation"])
    if not isinstance(raw_suites, (list, tuple)):
        _fail("suites", f"must be a list, got {raw_suites!r}")
    for s in raw_suites:
        if s not in SUITES:
            _fail("suites", f"unknown suite {s!r}, choose from {', '.join(SUITES)}")
    suites = tuple(dict.fromkeys(raw_suites))
    if "sharpness" in suites and u_generator["generator"] != "gaussian":
        _fail("suites", "sharpness requires u_generator.generator = 'gaussian'")

    raw_idents = doc.get("identities", list(_IDENTITY_IDS))
    if not isinstance(raw_idents, (list, tuple)) or not raw_idents:
        _fail("identities", f"must be a nonempty list, got {raw_idents!r}")
    for i in raw_idents:
        if i not in _IDENTITY_IDS:
            _fail("identities", f"unknown identity {i!r}, choose from {', '.join(_IDENTITY_IDS)}")
    identities = tuple(dict.fromkeys(raw_idents))

    raw_times = doc.get("identity_times")
    if raw_times is None:
        identity_times = None
    else:
        if not isinstance(raw_times, (list, tuple)) or not raw_times:
            _fail("identity_times", f"must be a nonempty list of times, got {raw_times!r}")
        times = []
        for t in raw_times:
            if isinstance(t, bool) or not isinstance(t, (int, float)):
                _fail("identity_times", f"entries must be numbers, got {t!r}")
            tv = float(t)
            if tv - fd_dt < t_start or tv + fd_dt > t_end:
                _fail("identity_times", f"probe window around t = {tv} leaves [{t_start}, {t_end}]")
            times.append(tv)
        identity_times = tuple(times)

    tol_q = _number(doc, "tol_q", 1e-6, positive=True)
    tol_y = _number(doc, "tol_y", 1e-6, positive=True)
    tol_sharpness = _number(doc, "tol_sharpness", 1e-6, positive=True)
    tol_identity_rel = _number(doc, "tol_identity_rel", 1e-5, positive=True)
    tol_q_evolution = _number(doc, "tol_q_evolution", 1e-4, positive=True)
    default_mass = 1e-8 if model == "flat_torus" else 1e-6
    tol_mass = _number(doc, "tol_mass", default_mass, positive=True)
    margin_floor = _number(doc, "margin_floor", 0.0, nonnegative=True)
    margin_fraction = _number(doc, "margin_fraction", 0.5, nonnegative=True)

    dump_fields = doc.get("dump_fields", False)
    if not isinstance(dump_fields, bool):
        _fail("dump_fields", f"must be true or false, got {dump_fields!r}")

    out = doc.get("out", f"runs/{model}")
    if not isinstance(out, str) or not out:
        _fail("out", f"must be a nonempty string, got {out!r}")

    threads = doc.get("threads")
    if threads is not None:
        threads = _integer(doc, "threads", None, minimum=1)

    schema_version = _integer(doc, "schema_version", SCHEMA_VERSION, minimum=1)
    if schema_version != SCHEMA_VERSION:
        _fail("schema_version", f"this build writes schema {SCHEMA_VERSION}, got {schema_version}")

    raw_sweep = doc.get("sweep_values")
    sweep_values: tuple | None
    if raw_sweep is None:
        sweep_values = None
    else:
        if not isinstance(raw_sweep, (list, tuple)) or not raw_sweep:
            _fail("sweep_values", f"must be a nonempty list, got {raw_sweep!r}")
        sweep_values = tuple(raw_sweep)

    return ExperimentConfig(
        model=model,
        complex_dimension=n,
        periods=periods,
        resolution=resolution,
        a0=a0,
        epsilon=epsilon,
        t_start=t_start,
        t_end=t_end,
        steps=steps,
        snapshot_stride=snapshot_stride,
        fd_dt=fd_dt,
        seeds=seeds,
        u_generator=u_generator,
        v_generator=v_generator,
        suites=suites,
        identities=identities,
        identity_times=identity_times,
        tol_q=tol_q,
        tol_y=tol_y,
        tol_sharpness=tol_sharpness,
        tol_identity_rel=tol_identity_rel,
        tol_q_evolution=tol_q_evolution,
        tol_mass=tol_mass,
        margin_floor=margin_floor,
        margin_fraction=margin_fraction,
        dump_fields=dump_fields,
        out=out,
        threads=threads,
        schema_version=schema_version,
        sweep_values=sweep_values,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config: not valid JSON ({exc})") from exc
    return config_from_dict(doc)


def build_model(cfg: ExperimentConfig) -> ManifoldModel:
    if cfg.model == "flat_torus":
        return flat_torus(cfg.complex_dimension, cfg.periods, cfg.resolution)
    return fubini_study_cp1(cfg.resolution)


def manifest_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved config for manifest.json (lossless, JSON-ready)."""
    doc = asdict(cfg)
    doc["periods"] = list(cfg.periods)
    doc["epsilon"] = list(cfg.epsilon)
    doc["seeds"] = list(cfg.seeds)
    doc["suites"] = list(cfg.suites)
    doc["identities"] = list(cfg.identities)
    doc["identity_times"] = None if cfg.identity_times is None else list(cfg.identity_times)
    doc["sweep_values"] = None if cfg.sweep_values is None else list(cfg.sweep_values)
    return doc


def describe_config(cfg: ExperimentConfig) -> str:
    """Human-readable plan: model constants, schedule, suites, work estimate."""
    model = build_model(cfg)
    from .geometry import einstein_constant  # local to avoid import noise at module load

    lines = []
    if cfg.model == "flat_torus":
        lines.append(
            f"model: flat torus, n = {cfg.complex_dimension}, "
            f"periods = {list(cfg.periods)}, N = {cfg.resolution}"
        )
        nyquist = cfg.resolution // 2
        lines.append(f"grid Nyquist: |m| <= {nyquist} per real axis")
    else:
        lines.append(f"model: CP^1 (Fubini-Study), N = {cfg.resolution}")
        lines.append(f"grid Nyquist: l <= {cfg.resolution // 2 - 1}")
    lines.append(f"Einstein constant: {einstein_constant(model):g}")
    lines.append(f"a0 = {cfg.a0:g}")
    for e in cfg.epsilon:
        ext = extinction_time(model, cfg.a0, e)
        if math.isinf(ext):
            reason = "Ricci-flat" if cfg.model == "flat_torus" else "epsilon = 0"
            lines.append(f"epsilon = {e:g}: flow static ({reason})")
        else:
            lines.append(f"epsilon = {e:g}: extinction at t={ext:g}")
    lines.append(
        f"schedule: t in [{cfg.t_start:g}, {cfg.t_end:g}], {cfg.steps} steps, "
        f"stride {cfg.snapshot_stride}, fd_dt = {cfg.fd_dt:g}"
    )
    lines.append(f"initial data: u = {cfg.u_generator['generator']}, v = {cfg.v_generator['generator']}")
    lines.append(f"seeds: {len(cfg.seeds)}")
    lines.append(f"suites: {', '.join(cfg.suites)}")
    runs = len(cfg.epsilon) * len(cfg.seeds)
    reported = cfg.steps // cfg.snapshot_stride + 1
    probe_count = len(cfg.identity_times) if cfg.identity_times is not None else 1
    work = f"estimated work: {runs} trajectories x {reported} reported times"
    if "identities" in cfg.suites:
        work += f" + {runs * probe_count * len(cfg.identities)} identity probes"
    lines.append(work)
    lines.append(f"out: {cfg.out}")
    return "\n".join(lines)
