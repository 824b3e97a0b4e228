"""Run configuration: YAML (or JSON) file with nested sections.

Sections
--------
``command``     one of solve, payoff, embed, simulate, compare, constants, validate
``problem``     diffusion, reward, cost, start (or a ``preset``)
``measure``     target law: density.kind, density.params, atoms, support, recenter
``grid``        s_min, s_max, eps_diag, n_points, rtol, atol, sweep_tol, max_doublings
``simulation``  n_paths, dt, seed, t_max, scheme, block_size, workers
``boundary``    where simulate/payoff get g: solve (default), csv, linear, azema_yor
``payoff``      points: list of [x, s]
``compare``     candidates: list of {shift} or {csv}; optimum index
``constants``   q, p, alpha, dubins_schwarz, fixed_time
``output``      dir, paths_csv
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .boundary import Boundary
from .diffusion import BoundaryKind, DiffusionSpec, brownian_motion, reflected_brownian_motion
from .errors import ConfigError
from .functions import Constant, Power, from_config
from .montecarlo import SCHEMES, SimulationConfig
from .problem import CostSpec, RewardSpec, SolverGrid, StoppingProblem

__all__ = ["COMMANDS", "RunConfig", "load_config", "validate_config", "build_problem", "build_grid", "build_simulation"]

COMMANDS = ("solve", "payoff", "embed", "simulate", "compare", "constants", "validate")

REQUIRED = {
    "solve": ("problem", "grid"),
    "payoff": ("problem", "grid", "payoff"),
    "embed": ("measure",),
    "simulate": ("simulation",),
    "compare": ("problem", "grid", "simulation", "compare"),
    "constants": (),
    "validate": (),
}


@dataclass
class RunConfig:
    command: str
    raw: dict = field(default_factory=dict)
    source: Path | None = None

    def section(self, name: str) -> dict:
        val = self.raw.get(name)
        return val if isinstance(val, dict) else {}

    @property
    def out_dir(self) -> Path:
        d = self.section("output").get("dir", "out")
        p = Path(d)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p


def load_config(path: str | Path, command: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    cmd = command or raw.get("command")
    if cmd is None:
        raise ConfigError("no command given on the command line or in the config")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {COMMANDS}")
    return RunConfig(cmd, raw, path)


# --------------------------------------------------------------------------- #
# Validation
# --------------------------------------------------------------------------- #


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_config(cfg: RunConfig | dict) -> list[dict]:
    """Findings as ``{"path": "section.field", "message": ...}``; empty if clean."""
    if isinstance(cfg, dict):
        raw, command = cfg, cfg.get("command")
    else:
        raw, command = cfg.raw, cfg.command
    out: list[dict] = []

    def add(path, msg):
        out.append({"path": path, "message": msg})

    if command not in COMMANDS:
        add("command", f"must be one of {list(COMMANDS)}")
        return out
    target = command
    if command == "validate":
        target = raw.get("target_command")
        if target is not None and target not in COMMANDS:
            add("target_command", f"must be one of {list(COMMANDS)}")
            target = None
    for sec in REQUIRED.get(target, ()) if target else ():
        if not isinstance(raw.get(sec), dict):
            add(sec, f"section required for {target!r}")
    if target == "simulate" and not isinstance(raw.get("problem"), dict) and not isinstance(raw.get("measure"), dict):
        add("problem", "simulate needs a 'problem' section or a 'measure' to build one from")

    grid = raw.get("grid")
    if isinstance(grid, dict):
        for k in ("s_min", "s_max"):
            if k not in grid:
                add(f"grid.{k}", "missing")
            elif not _num(grid[k]):
                add(f"grid.{k}", "must be a number")
        if _num(grid.get("s_min")) and _num(grid.get("s_max")) and not grid["s_min"] < grid["s_max"]:
            add("grid.s_max", "must exceed grid.s_min")
        for k in ("eps_diag", "rtol", "atol", "sweep_tol"):
            if k in grid and not (_num(grid[k]) and grid[k] > 0):
                add(f"grid.{k}", "must be a positive number")
        if "n_points" in grid and not (isinstance(grid["n_points"], int) and grid["n_points"] >= 2):
            add("grid.n_points", "must be an integer >= 2")

    sim = raw.get("simulation")
    if isinstance(sim, dict):
        for k in ("dt", "t_max"):
            if k in sim and not (_num(sim[k]) and sim[k] > 0):
                add(f"simulation.{k}", "must be a positive number")
        if _num(sim.get("dt")) and _num(sim.get("t_max")) and sim["dt"] > 0 and not sim["dt"] < sim["t_max"]:
            add("simulation.dt", "must be smaller than simulation.t_max")
        if "n_paths" in sim and not (isinstance(sim["n_paths"], int) and sim["n_paths"] >= 100):
            add("simulation.n_paths", "must be an integer >= 100")
        if "seed" in sim and not isinstance(sim["seed"], int):
            add("simulation.seed", "must be an integer")
        if "scheme" in sim and sim["scheme"] not in SCHEMES:
            add("simulation.scheme", f"must be one of {list(SCHEMES)}")
        for k in ("block_size", "workers"):
            if k in sim and not (isinstance(sim[k], int) and sim[k] >= 1):
                add(f"simulation.{k}", "must be a positive integer")

    prob = raw.get("problem")
    if isinstance(prob, dict) and "preset" not in prob:
        for k in ("reward", "cost"):
            if k not in prob:
                add(f"problem.{k}", "missing")
    if isinstance(prob, dict) and "preset" in prob:
        pre = prob["preset"]
        if not isinstance(pre, dict) or pre.get("kind") != "power":
            add("problem.preset", "only the 'power' preset is available")
        else:
            if not (_num(pre.get("p")) and pre["p"] > 1):
                add("problem.preset.p", "must be a number > 1")
            if not (_num(pre.get("c")) and pre["c"] > 0):
                add("problem.preset.c", "must be a positive number")

    pay = raw.get("payoff")
    if isinstance(pay, dict):
        pts = pay.get("points")
        if not isinstance(pts, list) or not pts:
            add("payoff.points", "must be a non-empty list of [x, s] pairs")
        else:
            for i, pt in enumerate(pts):
                if not (isinstance(pt, (list, tuple)) and len(pt) == 2 and all(_num(v) for v in pt)):
                    add(f"payoff.points[{i}]", "must be a pair [x, s]")
                elif pt[0] > pt[1]:
                    add(f"payoff.points[{i}]", "needs x <= s")

    comp = raw.get("compare")
    if isinstance(comp, dict):
        cands = comp.get("candidates")
        if not isinstance(cands, list) or not cands:
            add("compare.candidates", "must be a non-empty list")

    meas = raw.get("measure")
    if isinstance(meas, dict):
        dens = meas.get("density")
        if dens is not None and not (isinstance(dens, dict) and "kind" in dens):
            add("measure.density", "must be a mapping with 'kind'")
        if dens is None and not meas.get("atoms"):
            add("measure", "needs a density or atoms")
    return out


# --------------------------------------------------------------------------- #
# Builders
# --------------------------------------------------------------------------- #


def _diffusion(spec) -> DiffusionSpec:
    if spec is None:
        return brownian_motion()
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "brownian")
    if kind == "brownian":
        return brownian_motion(spec.get("sigma", 1.0))
    if kind == "reflected_brownian":
        return reflected_brownian_motion()
    if kind == "general":
        try:
            return DiffusionSpec(
                from_config(spec["drift"]),
                from_config(spec["volatility"]),
                state_lo=float(spec.get("state_lo", -math.inf)),
                state_hi=float(spec.get("state_hi", math.inf)),
                boundary_kind_lo=BoundaryKind(spec.get("boundary_kind_lo", "natural")),
                boundary_kind_hi=BoundaryKind(spec.get("boundary_kind_hi", "natural")),
                x_ref=spec.get("x_ref"),
            )
        except KeyError as exc:
            raise ConfigError(f"problem.diffusion is missing {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise ConfigError(f"problem.diffusion: {exc}") from exc
    raise ConfigError(f"unknown diffusion kind {kind!r}")


def power_problem(p: float, c: float) -> StoppingProblem:
    """Reflected Brownian motion, ``phi(s) = s^p``, ``c(x) = c x^(p-2)``."""
    return StoppingProblem(
        reflected_brownian_motion(),
        RewardSpec(Power(1.0, p)),
        CostSpec(Power(c, p - 2.0) if p != 2 else Constant(c)),
        start_x=0.0,
        start_s=0.0,
    )


def _cost(spec) -> CostSpec:
    if isinstance(spec, dict) and spec.get("kind") == "hazard":
        from .embedding import TargetMeasure, embedding_pair

        return embedding_pair(TargetMeasure.from_config(spec["measure"]))[1]
    return CostSpec.from_config(spec)


def build_problem(cfg: RunConfig) -> StoppingProblem:
    prob = cfg.section("problem")
    if not prob:
        raise ConfigError("missing 'problem' section")
    if "preset" in prob:
        pre = prob["preset"]
        return power_problem(float(pre["p"]), float(pre["c"]))
    start = prob.get("start", {}) or {}
    try:
        return StoppingProblem(
            _diffusion(prob.get("diffusion")),
            RewardSpec.from_config(prob["reward"]),
            _cost(prob["cost"]),
            start_x=float(start.get("x", 0.0)),
            start_s=float(start.get("s", 0.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"problem is missing {exc.args[0]!r}") from exc


_GRID_KEYS = ("s_min", "s_max", "eps_diag", "n_points", "rtol", "atol", "sweep_tol", "max_doublings", "horizon")


def build_grid(cfg: RunConfig) -> SolverGrid:
    g = cfg.section("grid")
    if "s_min" not in g or "s_max" not in g:
        raise ConfigError("grid needs s_min and s_max")
    kw = {k: g[k] for k in _GRID_KEYS if k in g}
    return SolverGrid(**kw)


def build_simulation(cfg: RunConfig) -> SimulationConfig:
    s = cfg.section("simulation")
    keys = ("n_paths", "dt", "seed", "t_max", "scheme", "block_size", "workers")
    return SimulationConfig(**{k: s[k] for k in keys if k in s})


def linear_boundary(spec: dict) -> Boundary:
    return Boundary.linear(
        float(spec.get("slope", 1.0)),
        float(spec.get("intercept", 0.0)),
        float(spec.get("s_min", 0.0)),
        float(spec.get("s_max", 100.0)),
    )
