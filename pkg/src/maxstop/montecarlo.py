"""Path simulation of the diffusion with its running maximum.

Each path moves on a time grid of step ``dt``.  Within a step the path is
treated as a Brownian bridge between its grid values (local volatility frozen
at the left point):

* the running maximum is updated with the exact bridge maximum,
* the stopping test uses the exact probability that the bridge dips to the
  level ``g(S)`` in force at the start of the step, and the path stops *at*
  that level when it does,
* the grid value is also tested against ``g`` at the updated maximum.

Random numbers come from a counter-based hash of ``(seed, path, step, slot)``,
so every path sees the same numbers whatever the block size or thread count,
and different boundaries simulated with the same seed share their noise.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .boundary import Boundary
from .diffusion import BoundaryKind
from .errors import ArgumentError, ReliabilityError, SimulationError
from .problem import RewardSpec, StoppingProblem

__all__ = [
    "SimulationConfig",
    "SimulationResult",
    "simulate",
    "empirical_payoff",
    "ks_distance",
    "compare_boundaries",
    "counter_uniforms",
]

SCHEMES = ("exact_gaussian", "euler_maruyama", "reflected_euler")
MAX_CENSORED = 0.01

# --------------------------------------------------------------------------- #
# Counter-based random numbers
# --------------------------------------------------------------------------- #

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STEP_BITS = 28
_MASK = 0xFFFFFFFFFFFFFFFF
_SLOTS = [np.uint64((k * 0x9E3779B97F4A7C15) & _MASK) for k in range(4)]


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def _to_unit(z: np.ndarray) -> np.ndarray:
    # 53 random bits, centred in their cell so the result is in (0, 1)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def _key(seed: int) -> np.uint64:
    return _mix(np.array([seed & _MASK], dtype=np.uint64))[0]


def _step_base(key: np.uint64, path_ids: np.ndarray, step: int) -> np.ndarray:
    ctr = (path_ids.astype(np.uint64) << np.uint64(_STEP_BITS)) | np.uint64(step)
    return _mix(key + ctr * _GOLDEN)


def counter_uniforms(seed: int, path_ids, step: int, slot: int) -> np.ndarray:
    """Uniforms on (0, 1) indexed by ``(seed, path, step, slot)``."""
    base = _step_base(_key(seed), np.asarray(path_ids, dtype=np.uint64), step)
    return _to_unit(_mix(base + np.uint64((slot * 0x9E3779B97F4A7C15) & _MASK)))


# --------------------------------------------------------------------------- #
# Config and results
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int = 10_000
    dt: float = 1e-3
    seed: int = 0
    t_max: float = 100.0
    scheme: str = "exact_gaussian"
    block_size: int = 65_536
    workers: int = 1

    def __post_init__(self):
        if int(self.n_paths) < 100:
            raise ArgumentError("n_paths must be at least 100")
        if not (self.dt > 0 and self.t_max > 0 and self.dt < self.t_max):
            raise ArgumentError("need 0 < dt < t_max")
        if self.scheme not in SCHEMES:
            raise ArgumentError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.block_size < 1 or self.workers < 1:
            raise ArgumentError("block_size and workers must be positive")
        if math.ceil(self.t_max / self.dt) >= 2**_STEP_BITS:
            raise ArgumentError("t_max / dt exceeds the step counter range")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_max / self.dt - 1e-9))


@dataclass(frozen=True, eq=False)
class SimulationResult:
    tau: np.ndarray
    x_tau: np.ndarray
    s_tau: np.ndarray
    cost: np.ndarray
    censored: np.ndarray
    config: SimulationConfig
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.tau.size)

    @property
    def censored_frac(self) -> float:
        return float(np.mean(self.censored))

    def mean_se(self, values) -> tuple[float, float]:
        v = np.asarray(values, dtype=float)
        return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))

    def summary(self) -> dict:
        out = {"n_paths": self.n, "censored_frac": self.censored_frac}
        for name in ("tau", "x_tau", "s_tau", "cost"):
            m, se = self.mean_se(getattr(self, name))
            out[f"{name}_mean"], out[f"{name}_se"] = m, se
        return out

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_id", "tau", "x_tau", "s_tau", "cost", "censored"])
        for i in range(self.n):
            w.writerow(
                [i, repr(float(self.tau[i])), repr(float(self.x_tau[i])), repr(float(self.s_tau[i])),
                 repr(float(self.cost[i])), int(self.censored[i])]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def summary_json(self, reward: RewardSpec | None = None, mu=None) -> dict:
        """Report with the fixed keys ``payoff_mean``, ``payoff_se``, ``ks``,
        ``censored_frac``; entries that do not apply are ``null``."""
        mean = se = None
        if reward is not None:
            vals = np.asarray(reward(self.s_tau), dtype=float) - self.cost
            mean, se = self.mean_se(vals)
        ks = ks_distance(self.x_tau, mu) if mu is not None else None
        return {"payoff_mean": mean, "payoff_se": se, "ks": ks, "censored_frac": self.censored_frac}


# --------------------------------------------------------------------------- #
# Simulation
# --------------------------------------------------------------------------- #


def _scheme_ok(p: StoppingProblem, scheme: str) -> None:
    d = p.diffusion
    if scheme == "exact_gaussian":
        if not (d.is_driftless and d.volatility.constant_value is not None):
            raise ArgumentError("exact_gaussian needs a driftless diffusion with constant volatility")
    if d.boundary_kind_lo == BoundaryKind.REGULAR_REFLECTING and scheme != "reflected_euler":
        raise ArgumentError("a reflecting lower end needs the reflected_euler scheme")
    if scheme == "reflected_euler" and not (d.state_lo == 0.0 and d.boundary_kind_lo == BoundaryKind.REGULAR_REFLECTING):
        raise ArgumentError("reflected_euler needs a reflecting lower end at 0")


class _BoundaryEval:
    """``g(S)`` with path diagnostics on failure; ``None`` means never stop."""

    def __init__(self, g: Boundary | None):
        self.g = g

    def __call__(self, s: np.ndarray, ids: np.ndarray) -> np.ndarray:
        if self.g is None:
            return np.full(s.shape, -math.inf)
        try:
            return self.g(s)
        except SimulationError as exc:
            bad = ~self.g.defined(s)
            raise SimulationError(
                exc.args[0],
                path_ids=[int(i) for i in ids[bad][:10]],
                s_values=[float(v) for v in s[bad][:10]],
            ) from None


def _run_block(p: StoppingProblem, gfun: _BoundaryEval, cfg: SimulationConfig, key, ids: np.ndarray):
    d = p.diffusion
    n = ids.size
    dt = cfg.dt
    sq = math.sqrt(dt)
    scheme = cfg.scheme
    sig_c = d.volatility.constant_value
    cost_fn = p.cost
    c_const = None
    if not p.cost.zero_intervals and p.cost.finite_interval == (-math.inf, math.inf):
        c_const = p.cost.value.constant_value

    tau = np.full(n, math.nan)
    x_out = np.empty(n)
    s_out = np.empty(n)
    c_out = np.zeros(n)
    cens = np.zeros(n, dtype=bool)

    x = np.full(n, p.start_x)
    s = np.full(n, p.start_s)
    acc = np.zeros(n)
    slot = np.arange(n)
    gs = gfun(s, ids)
    stop0 = x <= gs
    if np.any(stop0):
        tau[stop0], x_out[stop0], s_out[stop0] = 0.0, x[stop0], s[stop0]
        keep = ~stop0
        x, s, acc, slot, gs = x[keep], s[keep], acc[keep], slot[keep], gs[keep]

    step = 0
    while slot.size and step < cfg.n_steps:
        pid = ids[slot]
        base = _step_base(key, pid, step)
        u_norm = _to_unit(_mix(base + _SLOTS[1]))
        u_max = _to_unit(_mix(base + _SLOTS[2]))
        u_hit = _to_unit(_mix(base + _SLOTS[3]))
        z = special.ndtri(u_norm)
        if scheme == "exact_gaussian":
            sig = sig_c
            x1 = x + sig * sq * z
        else:
            sig = np.abs(np.asarray(d.volatility(x), dtype=float))
            x1 = x + np.asarray(d.drift(x), dtype=float) * dt + sig * sq * z
            if scheme == "reflected_euler":
                x1 = np.abs(x1)
        var = (sig * sig) * dt
        # exact maximum of the bridge from x to x1
        jump = x1 - x
        m = 0.5 * (x + x1 + np.sqrt(jump * jump - 2.0 * var * np.log(u_max)))
        s1 = np.maximum(s, m)
        # bridge dips to the level in force at the start of the step
        d0 = x - gs
        d1 = x1 - gs
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            p_hit = np.where(d1 <= 0.0, 1.0, np.exp(-2.0 * d0 * d1 / np.where(var > 0, var, 1.0)))
        p_hit = np.where(np.isfinite(gs), p_hit, 0.0)
        hit = u_hit < p_hit
        if c_const is not None:
            c_left = np.full(x.shape, c_const)
        else:
            c_left = np.asarray(cost_fn(x), dtype=float) * np.ones(x.shape)
        new_max = s1 > s
        gs1 = gs.copy()
        if np.any(new_max):
            gs1[new_max] = gfun(s1[new_max], pid[new_max])
        late = ~hit & (x1 <= gs1)
        t1 = (step + 1) * dt

        if np.any(hit):
            k = slot[hit]
            # the crossing time is taken at mid-step
            tau[k] = t1 - 0.5 * dt
            x_out[k] = gs[hit]
            s_out[k] = s[hit]
            c_out[k] = acc[hit] + c_left[hit] * (0.5 * dt)
        acc = acc + c_left * dt
        if np.any(late):
            k = slot[late]
            tau[k] = t1
            x_out[k] = x1[late]
            s_out[k] = s1[late]
            c_out[k] = acc[late]
        keep = ~(hit | late)
        x, s, acc, slot, gs = x1[keep], s1[keep], acc[keep], slot[keep], gs1[keep]
        step += 1

    if slot.size:
        tau[slot] = step * dt
        x_out[slot], s_out[slot], c_out[slot] = x, s, acc
        cens[slot] = True
    return tau, x_out, s_out, c_out, cens


def simulate(p: StoppingProblem, g: Boundary | None, cfg: SimulationConfig) -> SimulationResult:
    """Simulate ``tau = inf{t: X_t <= g(S_t)}`` (``g=None``: run to ``t_max``)."""
    _scheme_ok(p, cfg.scheme)
    gfun = _BoundaryEval(g)
    key = _key(cfg.seed)
    n = int(cfg.n_paths)
    blocks = [np.arange(lo, min(lo + cfg.block_size, n), dtype=np.int64) for lo in range(0, n, cfg.block_size)]

    tau = np.empty(n)
    x_tau = np.empty(n)
    s_tau = np.empty(n)
    cost = np.empty(n)
    cens = np.empty(n, dtype=bool)

    def work(ids):
        out = _run_block(p, gfun, cfg, key, ids)
        # disjoint slots per block
        tau[ids], x_tau[ids], s_tau[ids], cost[ids], cens[ids] = out

    if cfg.workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(work, blocks))
    else:
        for b in blocks:
            work(b)
    return SimulationResult(tau, x_tau, s_tau, cost, cens, cfg)


def empirical_payoff(res: SimulationResult, reward: RewardSpec) -> tuple[float, float]:
    """Mean and standard error of ``phi(S_tau) - cost``."""
    if res.censored_frac >= MAX_CENSORED:
        raise ReliabilityError(
            f"{100 * res.censored_frac:.2f}% of paths hit t_max; the estimate is unreliable",
            censored_frac=res.censored_frac,
        )
    vals = np.asarray(reward(res.s_tau), dtype=float) - res.cost
    return res.mean_se(vals)


def ks_distance(samples: Sequence[float], mu) -> float:
    """Sup distance between the empirical CDF and the CDF of ``mu``.

    Both CDFs are right-continuous; the supremum is taken over sample points
    and atoms, comparing values and left limits.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ArgumentError("no samples")
    pts = np.unique(np.concatenate([x, np.asarray([j for j, _ in mu.atoms], dtype=float)]))
    emp_right = np.searchsorted(x, pts, side="right") / n
    emp_left = np.searchsorted(x, pts, side="left") / n
    f_right = np.asarray(mu.cdf(pts), dtype=float)
    f_left = np.asarray(mu.cdf_left(pts), dtype=float)
    return float(max(np.max(np.abs(emp_right - f_right)), np.max(np.abs(emp_left - f_left))))


def compare_boundaries(
    p: StoppingProblem,
    candidates: Sequence[Boundary],
    cfg: SimulationConfig,
    optimum: int = 0,
    names: Sequence[str] | None = None,
) -> dict:
    """Payoff of every candidate under common random numbers.

    ``flag`` is set when some candidate beats the designated optimum by more
    than three standard errors of the paired difference.
    """
    if not candidates:
        raise ArgumentError("need at least one candidate boundary")
    names = list(names) if names is not None else [f"candidate_{i}" for i in range(len(candidates))]
    vals = []
    for g in candidates:
        res = simulate(p, g, cfg)
        if res.censored_frac >= MAX_CENSORED:
            raise ReliabilityError("too many censored paths", censored_frac=res.censored_frac)
        vals.append(np.asarray(p.reward(res.s_tau), dtype=float) - res.cost)
    ref = vals[optimum]
    rows = []
    flag = False
    for i, v in enumerate(vals):
        diff = v - ref
        se_diff = float(np.std(diff, ddof=1) / math.sqrt(diff.size)) if i != optimum else 0.0
        beats = bool(i != optimum and diff.mean() > 3.0 * se_diff)
        flag |= beats
        rows.append(
            {
                "candidate": names[i],
                "payoff": float(v.mean()),
                "stderr": float(np.std(v, ddof=1) / math.sqrt(v.size)),
                "diff_vs_optimum": float(diff.mean()),
                "diff_se": se_diff,
                "beats_optimum": beats,
            }
        )
    return {"rows": rows, "optimum": names[optimum], "flag": flag}


def config_from_dict(spec: dict) -> SimulationConfig:
    fields = {k: spec[k] for k in asdict(SimulationConfig()) if k in spec}
    return SimulationConfig(**fields)


def dumps_summary(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True)
