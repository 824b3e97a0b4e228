"""Command-line front end.

    maxstop <command> CONFIG [--out DIR]
    maxstop run CONFIG            # command taken from the config

Exit codes: 0 success, 2 configuration error, 3 domain error, 4 numerical
failure.  Errors are printed to stderr as one JSON object and also written
to ``error.json`` in the output directory when it can be created.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import config as C
from .boundary import Boundary
from .errors import ConfigError, DomainError, MaxStopError, NumericalError, ReliabilityError
from .functions import to_config

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_NUMERIC = 0, 2, 3, 4


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


# --------------------------------------------------------------------------- #
# Boundaries from config
# --------------------------------------------------------------------------- #


def _boundary(cfg: C.RunConfig, p, measure=None) -> Boundary:
    from .solver import solve_maximal_boundary

    spec = cfg.section("boundary")
    source = spec.get("source", "solve")
    if source == "solve":
        return solve_maximal_boundary(p, C.build_grid(cfg))
    if source == "csv":
        path = Path(spec["path"])
        if not path.is_absolute() and cfg.source is not None:
            path = cfg.source.parent / path
        return Boundary.from_csv(path)
    if source == "linear":
        return C.linear_boundary(spec)
    if source == "azema_yor":
        from .embedding import azema_yor_boundary

        if measure is None:
            raise ConfigError("boundary.source azema_yor needs a 'measure' section")
        return azema_yor_boundary(measure)
    raise ConfigError(f"unknown boundary source {source!r}")


def _measure(cfg: C.RunConfig):
    from .embedding import TargetMeasure

    spec = cfg.raw.get("measure")
    return TargetMeasure.from_config(spec) if isinstance(spec, dict) else None


def _problem(cfg: C.RunConfig, measure=None):
    if cfg.section("problem"):
        return C.build_problem(cfg)
    if measure is not None:
        from .diffusion import brownian_motion
        from .embedding import embedding_pair
        from .problem import StoppingProblem

        reward, cost = embedding_pair(measure)
        return StoppingProblem(brownian_motion(), reward, cost)
    raise ConfigError("missing 'problem' section")


def _shifted(g: Boundary, shift: float) -> Boundary:
    # shifted candidate, kept on or below the diagonal
    return Boundary(g.s, np.minimum(g.g + shift, g.s), clip_level=g.clip_level, floor=g.floor)


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #


def cmd_solve(cfg: C.RunConfig, out: Path) -> dict:
    from .solver import SolveReport, solve_maximal_boundary

    p = C.build_problem(cfg)
    grid = C.build_grid(cfg)
    report = SolveReport()
    g = solve_maximal_boundary(p, grid, report)
    _write(out, "boundary.csv", g.to_csv())
    info = {
        "command": "solve",
        "converged": report.converged,
        "s_top": report.s_top,
        "eps_diag": report.eps,
        "sweep": [list(r) for r in report.sweep],
        "window": [grid.s_min, grid.s_max],
        "n_nodes": int(g.s.size),
        "jumps": [list(j) for j in g.jumps],
        "clip_level": g.clip_level,
        "flags": list(g.flags),
    }
    _write(out, "solve.json", _dump(info))
    return {"command": "solve", "boundary": str(out / "boundary.csv"), "converged": report.converged}


def cmd_payoff(cfg: C.RunConfig, out: Path) -> dict:
    from .solver import payoff

    p = C.build_problem(cfg)
    g = _boundary(cfg, p)
    rows = ["x,s,value"]
    for x, s in cfg.section("payoff")["points"]:
        v = payoff(p, g, float(x), float(s))
        rows.append(f"{float(x)!r},{float(s)!r},{float(v)!r}")
    _write(out, "payoff.csv", "\n".join(rows) + "\n")
    return {"command": "payoff", "payoff": str(out / "payoff.csv"), "n_points": len(rows) - 1}


def _solve_window(mu) -> tuple[float, float]:
    if math.isfinite(mu.b):
        return 0.0, float(mu.b) * (1.0 - 1e-3) if mu.b > 0 else float(mu.b)
    return 0.0, float(mu.psi(mu.quantile_upper(1e-6)))


def cmd_embed(cfg: C.RunConfig, out: Path) -> dict:
    from .embedding import azema_yor_boundary, embedding_pair, validate_pair

    mu = _measure(cfg)
    if mu is None:
        raise ConfigError("missing 'measure' section")
    reward, cost = embedding_pair(mu)
    report = validate_pair(mu, reward, cost)
    g = azema_yor_boundary(mu)
    _write(out, "psi_inverse.csv", g.to_csv())
    _write(out, "validation.json", _dump(report))
    s_min, s_max = _solve_window(mu)
    pair = {
        "command": "solve",
        "problem": {
            "diffusion": {"kind": "brownian"},
            "reward": to_config(reward.value),
            "cost": {"kind": "hazard", "measure": cfg.raw["measure"]},
            "start": {"x": 0.0, "s": 0.0},
        },
        "grid": {"s_min": s_min, "s_max": s_max},
        "output": {"dir": "solve_out"},
    }
    _write(out, "pair.yaml", yaml.safe_dump(_clean(pair), sort_keys=True))
    return {
        "command": "embed",
        "psi_inverse": str(out / "psi_inverse.csv"),
        "pair": str(out / "pair.yaml"),
        "cond_pair_max_violation": report["cond_pair_max_violation"],
        "recentered_by": mu.shift,
    }


def cmd_simulate(cfg: C.RunConfig, out: Path) -> dict:
    from .montecarlo import MAX_CENSORED, simulate

    mu = _measure(cfg)
    p = _problem(cfg, mu)
    g = _boundary(cfg, p, mu)
    sim = C.build_simulation(cfg)
    res = simulate(p, g, sim)
    summary = res.summary_json(p.reward, mu)
    _write(out, "summary.json", _dump(summary))
    _write(out, "simulation.json", _dump({"config": vars(sim), **res.summary()}))
    if cfg.section("output").get("paths_csv", False):
        _write(out, "paths.csv", res.to_csv())
    if res.censored_frac >= MAX_CENSORED:
        # outputs stay on disk for diagnosis, but the estimate is unreliable
        raise ReliabilityError("too many censored paths", censored_frac=res.censored_frac)
    return {"command": "simulate", **summary}


def cmd_compare(cfg: C.RunConfig, out: Path) -> dict:
    from .montecarlo import compare_boundaries
    from .solver import solve_maximal_boundary

    p = C.build_problem(cfg)
    g_opt = solve_maximal_boundary(p, C.build_grid(cfg))
    spec = cfg.section("compare")
    cands, names = [], []
    for i, c in enumerate(spec["candidates"]):
        if isinstance(c, (int, float)):
            c = {"shift": c}
        if not isinstance(c, dict):
            raise ConfigError(f"compare.candidates[{i}] must be a mapping")
        if "csv" in c:
            path = Path(c["csv"])
            if not path.is_absolute() and cfg.source is not None:
                path = cfg.source.parent / path
            cands.append(Boundary.from_csv(path))
            names.append(c.get("name", str(c["csv"])))
        else:
            shift = float(c.get("shift", 0.0))
            cands.append(_shifted(g_opt, shift))
            names.append(c.get("name", f"g*{shift:+g}" if shift else "g*"))
    table = compare_boundaries(p, cands, C.build_simulation(cfg), optimum=int(spec.get("optimum", 0)), names=names)
    _write(out, "compare.json", _dump(table))
    lines = ["candidate,payoff,stderr,diff_vs_optimum,diff_se,beats_optimum"]
    for r in table["rows"]:
        lines.append(
            f"{r['candidate']},{r['payoff']!r},{r['stderr']!r},{r['diff_vs_optimum']!r},{r['diff_se']!r},{int(r['beats_optimum'])}"
        )
    _write(out, "compare.csv", "\n".join(lines) + "\n")
    return {"command": "compare", "flag": table["flag"], "rows": len(table["rows"])}


def cmd_constants(cfg: C.RunConfig, out: Path) -> dict:
    from . import inequalities as I

    spec = cfg.section("constants")
    rows = []
    for q in spec.get("q", [1]):
        rows.append(I.InequalityReport("gamma_star_1q", I.gamma_star_1q(float(q)), {"q": q}).to_dict())
    for pp in spec.get("p", [2]):
        rows.append(I.InequalityReport("doob_constant", I.doob_constant(float(pp)), {"p": pp}).to_dict())
    for a in spec.get("alpha", []):
        rows.append(
            I.InequalityReport("alpha_root", I.alpha_root(float(a["p"]), float(a["c"])), {"p": a["p"], "c": a["c"]}).to_dict()
        )
    if "dubins_schwarz" in spec:
        ds = spec["dubins_schwarz"] or {}
        rows.append(I.dubins_schwarz_check(float(ds.get("a", 1.0)), C.build_simulation(cfg)).to_dict())
    if "fixed_time" in spec:
        ft = spec["fixed_time"] or {}
        rows.append(I.fixed_time_check(float(ft.get("t", 1.0)), C.build_simulation(cfg)).to_dict())
    text = "".join(json.dumps(_clean(r), sort_keys=True) + "\n" for r in rows)
    _write(out, "constants.jsonl", text)
    sys.stdout.write(text)
    return {}


COMMANDS = {
    "solve": cmd_solve,
    "payoff": cmd_payoff,
    "embed": cmd_embed,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "constants": cmd_constants,
}


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def _fail(exc: MaxStopError, out: Path | None) -> int:
    text = json.dumps(_clean(exc.to_dict()), sort_keys=True)
    sys.stderr.write(text + "\n")
    if out is not None:
        try:
            _write(out, "error.json", text + "\n")
        except OSError:
            pass
    return exit_code(exc)


def run(cfg: C.RunConfig, out: Path | None = None) -> int:
    out = out if out is not None else cfg.out_dir
    findings = C.validate_config(cfg)
    if cfg.command == "validate":
        sys.stdout.write(_dump(findings))
        return EXIT_OK if not findings else EXIT_CONFIG
    if findings:
        return _fail(ConfigError("config failed validation", findings=findings), out)
    try:
        result = COMMANDS[cfg.command](cfg, out)
    except MaxStopError as exc:
        return _fail(exc, out)
    except (KeyError, TypeError) as exc:
        return _fail(ConfigError(f"malformed config: {exc!r}"), out)
    if result:
        sys.stdout.write(json.dumps(_clean(result), sort_keys=True) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="maxstop", description="Optimal stopping of the maximum process")
    ap.add_argument("command", choices=["run", *C.COMMANDS], help="command, or 'run' to take it from the config")
    ap.add_argument("config", help="YAML/JSON run configuration")
    ap.add_argument("--out", help="output directory (default: output.dir from the config)")
    args = ap.parse_args(argv)
    out = Path(args.out) if args.out else None
    try:
        cfg = C.load_config(args.config, None if args.command == "run" else args.command)
    except MaxStopError as exc:
        return _fail(exc, out)
    return run(cfg, out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
