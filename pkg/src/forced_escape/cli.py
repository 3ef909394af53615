"""Command-line front end.

Every command reads an optional INI file (``--config``), applies
``--set section.key=value`` overrides on top, and writes its outputs plus a
``manifest.json`` into the output directory.  Precedence, lowest first:
built-in defaults, config file, ``--set`` flags.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 failed acceptance check (``report``).
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np

from .errors import ConfigError, ForcedEscapeError, NumericalError

log = logging.getLogger("forced_escape")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 2, 3, 4

# ------------------------------------------------------------------ schema


def _floats(s: str) -> List[float]:
    return [float(eval_number(v)) for v in str(s).replace(";", ",").split(",") if v.strip()]


def _strs(s: str) -> List[str]:
    return [v.strip() for v in str(s).split(",") if v.strip()]


def eval_number(s) -> float:
    """Parse a float, also accepting 'pi', 'sqrt(k)' and simple products."""
    if isinstance(s, (int, float)):
        return float(s)
    txt = str(s).strip().lower()
    try:
        return float(txt)
    except ValueError:
        pass
    allowed = {"pi": math.pi, "sqrt": math.sqrt, "e": math.e}
    if any(c not in "0123456789.+-*/() eqrtspi" for c in txt):
        raise ConfigError(f"cannot parse number {s!r}")
    try:
        return float(eval(txt, {"__builtins__": {}}, allowed))  # noqa: S307 - restricted alphabet
    except Exception as exc:
        raise ConfigError(f"cannot parse number {s!r}") from exc


def _bool(s) -> bool:
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class Knob:
    default: Any
    parse: Callable
    help: str


SCHEMA: Dict[str, Dict[str, Knob]] = {
    "run": {
        "output": Knob("runs/out", str, "output directory"),
        "seed": Knob(0, int, "master random seed"),
    },
    "model": {
        "name": Knob("double_well", str, "double_well, pendulum, harmonic or lj"),
        "minimum_a": Knob("", _floats, "seed for the departing minimum (model default if empty)"),
        "saddle": Knob("", _floats, "seed for the saddle (model default if empty)"),
        "minimum_b": Knob("", _floats, "seed for the destination minimum (model default if empty)"),
        "seeds": Knob("-1.2;-0.1;0.1;1.2", _floats, "critical-point seeds for 1-D models"),
    },
    "damping": {
        "gamma": Knob(0.1, eval_number, "scalar damping coefficient"),
    },
    "forcing": {
        "kind": Knob("parametric", str, "parametric or linear"),
        "amplitude": Knob(1.0, eval_number, "forcing amplitude"),
        "omega": Knob("sqrt(2)", eval_number, "forcing frequency"),
        "phase": Knob(0.0, eval_number, "forcing phase"),
    },
    "numerics": {
        "dt": Knob(0.0, eval_number, "orbit time step (0 selects min(1e-3, gamma))"),
        "tol_a": Knob(1e-8, eval_number, "phase-space tolerance for reaching the minimum"),
        "delta": Knob(1e-6, eval_number, "saddle offset along the unstable direction"),
        "n_grid": Knob(256, int, "phase grid size for the t0 minimisation"),
        "downhill": Knob(True, _bool, "also shoot the downhill orbit"),
    },
    "sweep": {
        "kinds": Knob("parametric,linear", _strs, "forcing kinds to sweep"),
        "omega_min": Knob(0.5, eval_number, "lowest sweep frequency"),
        "omega_max": Knob(4.5, eval_number, "highest sweep frequency"),
        "n_points": Knob(400, int, "sweep grid size"),
        "rel_prominence": Knob(0.05, eval_number, "peak prominence relative to the maximum"),
        "refine": Knob(True, _bool, "refine the top peak off-grid"),
    },
    "sharpness": {
        "gammas": Knob("0.1,0.01", _floats, "damping values"),
        "d_omegas": Knob("0.01,-0.01", _floats, "frequency increments"),
    },
    "cluster": {
        "n": Knob(36, int, "particle count"),
        "box_x": Knob("3*sqrt(3)", eval_number, "box length along x"),
        "box_y": Knob(6.0, eval_number, "box length along y"),
        "r0": Knob(1.0, eval_number, "pair equilibrium distance"),
        "columns": Knob(6, int, "lattice columns"),
        "rows": Knob(6, int, "lattice rows"),
        "recipe": Knob("local_disorder", str, "defect recipe: local_disorder or pair_shift"),
        "max_attempts": Knob(200, int, "defect attempts"),
        "target_energy": Knob("-109.7064", lambda s: None if str(s).strip() in ("", "none") else eval_number(s),
                              "required defect energy ('none' accepts any defect)"),
        "gamma": Knob(1.0, eval_number, "damping for the cluster orbit"),
        "directions": Knob("x,y,both", _strs, "forcing directions"),
        "kinds": Knob("parametric,linear", _strs, "forcing kinds"),
        "omega_min": Knob(0.1, eval_number, "lowest sweep frequency"),
        "omega_max": Knob(0.0, eval_number, "highest sweep frequency (0 selects 1.1 x largest intrinsic)"),
        "n_points": Knob(2000, int, "sweep grid size"),
    },
    "simulate": {
        "omegas": Knob("sqrt(2),3.0", _floats, "forcing frequency of each arm"),
        "eps": Knob(0.05, eval_number, "forcing strength"),
        "mu": Knob(0.06, eval_number, "noise strength"),
        "dt_sde": Knob(0.01, eval_number, "Euler-Maruyama step"),
        "horizon": Knob(1e5, eval_number, "censoring time per replica"),
        "replicas": Knob(2000, int, "replicas per arm"),
    },
    "report": {
        "runs": Knob("", _strs, "run directories to collate"),
    },
}

COMMAND_SECTIONS = {
    "critical": ("run", "model"),
    "heteroclinic": ("run", "model", "damping", "numerics"),
    "sweep": ("run", "model", "damping", "numerics", "forcing", "sweep"),
    "sharpness": ("run", "model", "numerics", "sweep", "sharpness"),
    "cluster": ("run", "numerics", "cluster"),
    "simulate": ("run", "model", "damping", "forcing", "simulate"),
    "report": ("run", "report"),
}


@dataclass
class RunConfig:
    """Resolved configuration: raw strings per section plus parsed values."""

    command: str
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)

    def get(self, section: str, key: str):
        knob = SCHEMA[section][key]
        val = self.raw.get(section, {}).get(key, knob.default)
        if isinstance(val, str) or knob.parse in (_floats, _strs):
            try:
                return knob.parse(val)
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(f"[{section}] {key} = {val!r}: {exc}") from exc
        return val

    def resolved(self) -> Dict[str, Dict[str, str]]:
        out = {}
        for sec in COMMAND_SECTIONS[self.command]:
            out[sec] = {k: str(self.raw.get(sec, {}).get(k, kn.default)) for k, kn in SCHEMA[sec].items()}
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_dict(self.resolved())
        buf = []
        for sec in cp.sections():
            buf.append(f"[{sec}]")
            buf.extend(f"{k} = {v}" for k, v in cp[sec].items())
            buf.append("")
        return "\n".join(buf)


def _check_key(section, key):
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key [{section}] {key}")


def load_config(command: str, path=None, overrides=()) -> RunConfig:
    """Defaults, then the file (INI or a manifest's resolved config), then overrides."""
    raw: Dict[str, Dict[str, str]] = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        if p.suffix == ".json":
            data = json.loads(p.read_text())
            data = data.get("resolved_config", data)
        else:
            cp = configparser.ConfigParser(interpolation=None)
            try:
                cp.read(p)
            except configparser.Error as exc:
                raise ConfigError(str(exc)) from exc
            data = {s: dict(cp[s]) for s in cp.sections()}
        for sec, items in data.items():
            for k, v in items.items():
                _check_key(sec, k)
                raw.setdefault(sec, {})[k] = str(v)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, v = item.split("=", 1)
        sec, k = lhs.strip().split(".", 1)
        _check_key(sec, k)
        raw.setdefault(sec, {})[k] = v.strip()
    cfg = RunConfig(command, raw)
    for sec in cfg.resolved():
        for k in SCHEMA[sec]:
            cfg.get(sec, k)  # parse everything up front
    return cfg


# ---------------------------------------------------------------- run dir


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class Run:
    """Output directory with a lock, tracked files, stage timers and checks."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.get("run", "output"))
        self.files: List[Path] = []
        self.stages: Dict[str, float] = {}
        self.checks: List[dict] = []
        self.results: Dict[str, Any] = {}
        self._lock = self.dir / ".lock"

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"{self.dir} is locked by another run (remove {self._lock} if stale)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        with contextlib.suppress(FileNotFoundError):
            self._lock.unlink()
        return False

    def path(self, name: str) -> Path:
        p = self.dir / name
        if p not in self.files:
            self.files.append(p)
        return p

    @contextlib.contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        log.info("stage %s ...", name)
        yield
        self.stages[name] = time.perf_counter() - t
        log.info("stage %s done in %.2f s", name, self.stages[name])

    def check(self, name: str, passed: bool, value=None, target: str = ""):
        self.checks.append({"name": name, "passed": bool(passed), "value": _jsonable(value), "target": target})
        log.info("check %-40s %s (%s)", name, "PASS" if passed else "FAIL", value)

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        _atomic_write(p, json.dumps(_jsonable(obj), indent=2))
        return p

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        return p

    def finish(self) -> Path:
        self.path("config.ini")
        _atomic_write(self.dir / "config.ini", self.cfg.to_ini())
        manifest = {
            "command": self.cfg.command,
            "resolved_config": self.cfg.resolved(),
            "software": {"artifact": _version(), "python": platform.python_version(), "numpy": np.__version__},
            "stage_seconds": self.stages,
            "results": _jsonable(self.results),
            "checks": self.checks,
            "outputs": {p.name: _sha256(p) for p in self.files if p.exists()},
        }
        out = self.dir / "manifest.json"
        _atomic_write(out, json.dumps(manifest, indent=2))
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ------------------------------------------------------------- model setup

_DEFAULT_POINTS = {
    "double_well": ([-1.0], [0.0], [1.0]),
    "pendulum": ([-0.5 * math.pi], [0.5 * math.pi], [1.5 * math.pi]),
    "harmonic": ([0.0], None, None),
}

_RESONANCE_WINDOWS = {"double_well": (1.40, 1.43), "pendulum": (0.97, 1.03)}


def _model_and_points(cfg: RunConfig):
    from .model import find_critical_point, make_model

    name = cfg.get("model", "name")
    model = make_model(name)
    defaults = _DEFAULT_POINTS.get(name, (None, None, None))
    pts = []
    for key, d in zip(("minimum_a", "saddle", "minimum_b"), defaults):
        seed = cfg.get("model", key) or d
        if seed is None:
            raise ConfigError(f"[model] {key} must be given for {name}")
        pts.append(find_critical_point(model, seed))
    qa, qs, qb = pts
    if qa.index != 0 or qb.index != 0 or qs.index != 1:
        raise ConfigError(f"seeds did not converge to (minimum, saddle, minimum): indices {qa.index}, {qs.index}, {qb.index}")
    return name, model, qa, qs, qb


def _uphill(cfg, model, qa, qs, gamma=None):
    from .hetero import shoot_uphill
    from .model import Damping

    g = cfg.get("damping", "gamma") if gamma is None else gamma
    damping = Damping.scalar(g, model.dimension)
    dt = cfg.get("numerics", "dt") or None
    orb = shoot_uphill(model, damping, qs, qa, dt=dt, delta=cfg.get("numerics", "delta"), tol_a=cfg.get("numerics", "tol_a"))
    return damping, orb


# ---------------------------------------------------------------- commands


def cmd_critical(run: Run):
    from .model import find_critical_point, make_model

    cfg = run.cfg
    model = make_model(cfg.get("model", "name"))
    seeds = cfg.get("model", "seeds")
    found = []
    with run.stage("newton"):
        for s in seeds:
            try:
                cp = find_critical_point(model, np.full(model.dimension, s))
            except NumericalError as exc:
                log.warning("seed %s: %s", s, exc)
                continue
            if not any(np.allclose(cp.location, f.location, atol=1e-8) for f in found):
                found.append(cp)
    run.write_json("critical_points.json", [cp.to_dict() for cp in found])
    run.results["n_points"] = len(found)


def cmd_heteroclinic(run: Run):
    from .hetero import fw_action, hamiltonian_lift, save_orbit, shoot_downhill
    from .svg import LinePlot

    cfg = run.cfg
    name, model, qa, qs, qb = _model_and_points(cfg)
    with run.stage("uphill"):
        damping, up = _uphill(cfg, model, qa, qs)
    save_orbit(run.path("orbit_uphill.npz"), up)
    barrier = 2.0 * (qs.potential_value - qa.potential_value)
    s_up = fw_action(up, model, damping)
    with run.stage("lift"):
        lift = hamiltonian_lift(up, model, damping)
        res = lift.residuals(model, damping)
    run.results.update(
        fw_action_uphill=s_up,
        barrier_2dV=barrier,
        max_abs_H0=lift.max_abs_H0,
        lift_residuals={k: float(np.max(np.abs(v))) for k, v in res.items()},
        n_samples=up.n_samples,
    )
    run.check("uphill action equals 2 dV (0.1%)", abs(s_up / barrier - 1) <= 1e-3, s_up, f"{barrier:.6g}")
    run.check("max |H0| <= 1e-6", lift.max_abs_H0 <= 1e-6, lift.max_abs_H0)
    plot = LinePlot("phase plane", "x", "v").line(up.positions[:, 0], up.velocities[:, 0], "uphill")
    if cfg.get("numerics", "downhill"):
        with run.stage("downhill"):
            down = shoot_downhill(model, damping, qs, qb, dt=up.dt, delta=cfg.get("numerics", "delta"),
                                  tol_b=cfg.get("numerics", "tol_a"))
        save_orbit(run.path("orbit_downhill.npz"), down)
        s_down = fw_action(down, model, damping)
        run.results["fw_action_downhill"] = s_down
        run.check("downhill action <= 1e-6", abs(s_down) <= 1e-6, s_down)
        plot.line(down.positions[:, 0], down.velocities[:, 0], "downhill")
    plot.save(run.path("phase_plane.svg"))
    run.write_json("heteroclinic.json", run.results)


def cmd_sweep(run: Run):
    from .action import minimize_over_t0
    from .model import AdditiveSinusoid, ParametricSinusoid, intrinsic_frequencies
    from .resonance import refine_sweep_peak, sweep
    from .svg import LinePlot

    cfg = run.cfg
    name, model, qa, qs, qb = _model_and_points(cfg)
    with run.stage("orbit"):
        damping, orb = _uphill(cfg, model, qa, qs)
    w0 = intrinsic_frequencies(qa, drop_zero_modes=True)
    plot = LinePlot(f"{name}, gamma = {cfg.get('damping', 'gamma'):g}", "omega", "|F(omega)|")
    for kind in cfg.get("sweep", "kinds"):
        with run.stage(f"sweep_{kind}"):
            sw = sweep(orb, kind, cfg.get("sweep", "omega_min"), cfg.get("sweep", "omega_max"),
                       cfg.get("sweep", "n_points"), rel_prominence=cfg.get("sweep", "rel_prominence"))
        run.write_csv(f"sweep_{kind}.csv", ["omega", "magnitude"], sw.rows())
        info = sw.to_json()
        if cfg.get("sweep", "refine") and sw.peaks:
            info["refined_peak"] = refine_sweep_peak(orb, sw)
        run.write_json(f"peaks_{kind}.json", info)
        run.results[f"argmax_{kind}"] = sw.argmax
        plot.line(sw.omega_grid, sw.magnitudes, kind)
        if kind == "parametric":
            lo, hi = _RESONANCE_WINDOWS.get(name, (0.99 * w0.min(), 1.01 * w0.min()))
            run.check(f"parametric argmax in [{lo:g}, {hi:g}]", lo <= sw.argmax <= hi, sw.argmax)
    for w in w0:
        plot.vmarker(w, "omega_0")
    plot.save(run.path("sweep.svg"))
    # action correction for the configured forcing
    cls = ParametricSinusoid if cfg.get("forcing", "kind") == "parametric" else AdditiveSinusoid
    forcing = cls(cfg.get("forcing", "amplitude"), cfg.get("forcing", "omega"), cfg.get("forcing", "phase"),
                  dimension=model.dimension)
    corr = minimize_over_t0(orb, forcing, n_grid=cfg.get("numerics", "n_grid"))
    run.results["action_correction"] = corr.summary()
    run.write_json("action_correction.json", corr.summary())


def cmd_sharpness(run: Run):
    from .resonance import peak_sharpness, refine_sweep_peak, sweep

    cfg = run.cfg
    name, model, qa, qs, qb = _model_and_points(cfg)
    rows = []
    for g in cfg.get("sharpness", "gammas"):
        with run.stage(f"orbit_gamma_{g:g}"):
            _, orb = _uphill(cfg, model, qa, qs, gamma=g)
        stars = {}
        for kind in ("parametric", "linear"):
            sw = sweep(orb, kind, cfg.get("sweep", "omega_min"), cfg.get("sweep", "omega_max"), cfg.get("sweep", "n_points"))
            stars[kind] = refine_sweep_peak(orb, sw)[0]
        for dw in cfg.get("sharpness", "d_omegas"):
            rp = peak_sharpness(orb, "parametric", stars["parametric"], dw)
            rl = peak_sharpness(orb, "linear", stars["linear"], dw)
            rows.append((dw, g, stars["parametric"], rp, stars["linear"], rl))
            run.check(f"rho_p > rho_l (gamma={g:g}, dOmega={dw:g})", rp > rl, [rp, rl])
    run.write_csv("sharpness.csv", ["d_omega", "gamma", "omega_star_p", "rho_p", "omega_star_l", "rho_l"], rows)
    run.results["table"] = rows


def cmd_cluster(run: Run):
    from .cluster import (
        DefectRecipe,
        LJCluster,
        build_perfect_lattice,
        cluster_resonance_experiment,
        cluster_uphill_orbit,
        find_saddle,
        make_defect,
        save_configuration,
    )
    from .model import intrinsic_frequencies
    from .resonance import refine_sweep_peak
    from .svg import LinePlot, configuration_svg

    cfg = run.cfg
    g = lambda k: cfg.get("cluster", k)  # noqa: E731
    cl = LJCluster(g("n"), (g("box_x"), g("box_y")), g("r0"))
    with run.stage("lattice"):
        qb = build_perfect_lattice(cl, g("columns"), g("rows"))
    vb = cl.value(qb)
    run.check("V(q_b) = -120.4712 +- 0.01", abs(vb + 120.4712) <= 0.01, vb)
    with run.stage("defect"):
        qa = make_defect(cl, qb, seed=cfg.get("run", "seed"), recipe=DefectRecipe(kind=g("recipe")),
                         max_attempts=g("max_attempts"), target_energy=g("target_energy"))
    with run.stage("saddle"):
        sres = find_saddle(cl, qa.location, qb)
    qs = sres.saddle
    run.results.update(V_b=vb, V_a=qa.potential_value, V_s=qs.potential_value, saddle=sres.to_dict())
    run.check("V(q_b) < V(q_a) < V(q_s) < V(q_a) + 10",
              vb < qa.potential_value < qs.potential_value < qa.potential_value + 10,
              [vb, qa.potential_value, qs.potential_value])
    for label, q in (("q_b", qb), ("q_a", qa.location), ("q_s", qs.location)):
        save_configuration(run.path(f"config_{label}.csv"), cl, q)
        configuration_svg(cl.positions(q), cl.cell, run.path(f"config_{label}.svg"), f"{label}: V = {cl.value(q):.4f}")
    with run.stage("orbit"):
        orb = cluster_uphill_orbit(cl, qa, qs, g("gamma"))
    w0 = intrinsic_frequencies(qa, drop_zero_modes=True)
    omega_max = g("omega_max") or 1.1 * float(w0.max())
    for d in g("directions"):
        sweeps = {}
        plot = LinePlot(f"cluster, direction {d}", "omega", "|F(omega)|", logy=True)
        for kind in g("kinds"):
            with run.stage(f"sweep_{d}_{kind}"):
                sw = cluster_resonance_experiment(cl, qa, qs, g("gamma"), d, kind, g("omega_min"), omega_max,
                                                  g("n_points"), orbit=orb)
            sweeps[kind] = sw
            run.write_csv(f"cluster_sweep_{d}_{kind}.csv", ["omega", "magnitude"], sw.rows())
            info = sw.to_json()
            if kind == "parametric":
                refined = [refine_sweep_peak(orb, sw, p)[0] for p in sw.peaks]
                rel = [float(np.min(np.abs(w0 - p) / w0)) for p in refined]
                info.update(refined_peaks=refined, relative_offsets=rel)
                run.check(f"peaks within 2% of sqrt(eig), direction {d}", bool(rel) and max(rel) <= 0.02, rel)
            run.write_json(f"cluster_peaks_{d}_{kind}.json", info)
            plot.line(sw.omega_grid, np.maximum(sw.magnitudes, 1e-300), kind)
        if "parametric" in sweeps and "linear" in sweeps:
            ratio = sweeps["linear"].magnitudes.max() / sweeps["parametric"].magnitudes.max()
            run.check(f"linear/parametric <= 1e-6, direction {d}", ratio <= 1e-6, ratio)
        for w in w0:
            plot.vmarker(w)
        plot.save(run.path(f"cluster_sweep_{d}.svg"))


def cmd_simulate(run: Run):
    from .model import AdditiveSinusoid, ParametricSinusoid
    from .simulate import SimulationConfig, measure_transitions

    cfg = run.cfg
    name, model, qa, qs, qb = _model_and_points(cfg)
    from .model import Damping

    damping = Damping.scalar(cfg.get("damping", "gamma"), model.dimension)
    cls = ParametricSinusoid if cfg.get("forcing", "kind") == "parametric" else AdditiveSinusoid
    s = lambda k: cfg.get("simulate", k)  # noqa: E731
    arms = []
    for k, om in enumerate(s("omegas")):
        forcing = cls(cfg.get("forcing", "amplitude"), om, cfg.get("forcing", "phase"), dimension=model.dimension)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sc = SimulationConfig(model, damping, forcing, s("eps"), s("mu"), s("dt_sde"), s("horizon"),
                                  seed=cfg.get("run", "seed") + 1000 * k)
        for w in caught:
            log.warning("%s", w.message)
        with run.stage(f"arm_{om:g}"):
            st = measure_transitions(sc, s("replicas"), qa.location, qb.location, qs.location)
        st.write_csv(run.path(f"first_passage_omega_{om:g}.csv"))
        arms.append((om, st))
        run.results[f"omega_{om:g}"] = st.summary()
    run.write_json("simulation_summary.json", run.results)
    if len(arms) == 2:
        (o1, a1), (o2, a2) = arms
        run.check("non-overlapping CIs, first arm faster", (not a1.overlaps(a2)) and a1.mean < a2.mean,
                  [a1.summary()["ci"], a2.summary()["ci"]])


def cmd_report(run: Run):
    cfg = run.cfg
    dirs = cfg.get("report", "runs")
    if not dirs:
        raise ConfigError("[report] runs must list run directories")
    lines, all_ok, rows = ["# Run report", ""], True, []
    for d in dirs:
        mf = Path(d) / "manifest.json"
        if not mf.exists():
            raise ConfigError(f"no manifest in {d}")
        m = json.loads(mf.read_text())
        lines.append(f"## {m['command']} ({d})")
        for c in m.get("checks", []):
            all_ok &= c["passed"]
            rows.append({"run": str(d), **c})
            lines.append(f"- {'PASS' if c['passed'] else 'FAIL'}: {c['name']} (value: {c['value']})")
        lines.append("")
    p = run.path("report.md")
    _atomic_write(p, "\n".join(lines))
    run.write_json("report.json", rows)
    run.results["all_passed"] = all_ok
    return EXIT_OK if all_ok else EXIT_ACCEPT


COMMANDS = {
    "critical": (cmd_critical, "locate critical points from a list of seeds"),
    "heteroclinic": (cmd_heteroclinic, "shoot the uphill/downhill orbits; action and lift diagnostics"),
    "sweep": (cmd_sweep, "frequency sweep of the action-correction magnitude"),
    "sharpness": (cmd_sharpness, "peak-sharpness table over damping values and increments"),
    "cluster": (cmd_cluster, "Lennard-Jones lattice, defect, saddle and resonance sweeps"),
    "simulate": (cmd_simulate, "Monte Carlo first-passage times for several forcing frequencies"),
    "report": (cmd_report, "collate checks from run manifests"),
}


def _knob_help(command: str) -> str:
    out = ["configuration knobs (section.key = default):"]
    for sec in COMMAND_SECTIONS[command]:
        for k, kn in SCHEMA[sec].items():
            out.append(f"  {sec}.{k} = {kn.default!s:<22} {kn.help}")
    return "\n".join(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="forced-escape", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, desc) in COMMANDS.items():
        p = sub.add_parser(name, help=desc, description=desc, epilog=_knob_help(name),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="INI file, or a manifest.json to rerun its resolved config")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one knob")
        p.add_argument("--output", "-o", help="output directory (same as --set run.output=...)")
        p.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.set) + ([f"run.output={args.output}"] if args.output else [])
    try:
        cfg = load_config(args.command, args.config, overrides)
        fn = COMMANDS[args.command][0]
        with Run(cfg) as run:
            code = fn(run) or EXIT_OK
            run.finish()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ForcedEscapeError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


if __name__ == "__main__":
    sys.exit(main())
