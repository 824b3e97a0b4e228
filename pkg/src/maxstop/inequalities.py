"""Optimal constants of maximal inequalities and their sharpness by simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import Boundary
from .diffusion import brownian_motion
from .errors import ArgumentError, DomainError, NoInteriorMaxError, ReliabilityError
from .functions import Affine, Constant
from .montecarlo import MAX_CENSORED, SimulationConfig, simulate
from .problem import CostSpec, RewardSpec, StoppingProblem

__all__ = [
    "InequalityReport",
    "alpha_root",
    "alpha_threshold",
    "doob_constant",
    "gamma_fn",
    "gamma_star_1q",
    "dubins_schwarz_check",
    "fixed_time_check",
]


@dataclass
class InequalityReport:
    name: str
    constant: float
    parameters: dict = field(default_factory=dict)
    mc_lhs: float | None = None
    mc_rhs: float | None = None
    mc_se: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "constant": self.constant,
            "parameters": dict(self.parameters),
            "mc_lhs": self.mc_lhs,
            "mc_rhs": self.mc_rhs,
            "mc_se": self.mc_se,
        }
        out.update(self.extra)
        return out


# --------------------------------------------------------------------------- #
# Closed forms
# --------------------------------------------------------------------------- #


def alpha_threshold(p: float) -> float:
    """Smallest ``c`` for which ``a^(p-1) - a^p = p/(2c)`` has a root."""
    return p ** (p + 1) / (2.0 * (p - 1) ** (p - 1))


def alpha_root(p: float, c: float, max_iter: int = 200) -> float:
    """Larger root of ``a^(p-1) - a^p = p / (2c)`` by bisection on ``[(p-1)/p, 1]``."""
    if not p > 1:
        raise DomainError("alpha_root needs p > 1")
    if not c > 0:
        raise DomainError("alpha_root needs c > 0")
    target = p / (2.0 * c)
    f = lambda a: a ** (p - 1) - a**p - target
    lo, hi = (p - 1) / p, 1.0
    f_lo = f(lo)
    if abs(f_lo) <= 8.0 * math.ulp(target):
        # at the threshold the two roots merge at (p-1)/p; bisection on a
        # double root would only resolve it to sqrt(machine eps)
        return lo
    if f_lo < 0:
        raise NoInteriorMaxError(f"no root: c={c} is below the threshold {alpha_threshold(p)}", p=p, c=c)
    # f decreases on [(p-1)/p, 1] from f_lo >= 0 to -target < 0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2.0 * math.ulp(hi):
            break
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def doob_constant(p: float) -> float:
    """``(p/(p-1))^p``."""
    if not p > 1:
        raise DomainError("doob_constant needs p > 1")
    if p == 2:
        return 4.0
    return (p / (p - 1)) ** p


# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Gamma function by the Lanczos approximation (reflection below 1/2)."""
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    x -= 1.0
    a = _LANCZOS[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, len(_LANCZOS)):
        a += _LANCZOS[i] / (x + i)
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * a


def gamma_star_1q(q: float) -> float:
    """``(q(1+q)/2)^(1/(1+q)) * Gamma(2 + 1/q)^(q/(1+q))``."""
    if not q > 0:
        raise DomainError("gamma_star_1q needs q > 0")
    if q == 1:
        # Gamma(3) = 2 exactly: (1)^(1/2) * 2^(1/2)
        return math.sqrt(2.0)
    return (q * (1.0 + q) / 2.0) ** (1.0 / (1.0 + q)) * gamma_fn(2.0 + 1.0 / q) ** (q / (1.0 + q))


# --------------------------------------------------------------------------- #
# Simulation checks
# --------------------------------------------------------------------------- #


def _sqrt_mean_se(v: np.ndarray) -> tuple[float, float]:
    """``sqrt(mean v)`` and its delta-method standard error."""
    m = float(np.mean(v))
    se_m = float(np.std(v, ddof=1) / math.sqrt(v.size))
    r = math.sqrt(m)
    return r, se_m / (2.0 * r) if r > 0 else math.inf


def dubins_schwarz_check(a: float, cfg: SimulationConfig) -> InequalityReport:
    """Simulate ``T = inf{t: S_t - X_t = a}`` for Brownian motion and compare
    ``E S_T`` with ``sqrt(E X_T^2)``; both equal ``a`` at the optimum."""
    if not a > 0:
        raise ArgumentError("a must be positive")
    p = StoppingProblem(brownian_motion(), RewardSpec(Affine(1.0)), CostSpec(Constant(0.0)))
    top = 12.0 * a * max(1.0, math.log(max(cfg.n_paths, 2)))
    g = Boundary.linear(1.0, -a, 0.0, top)
    res = simulate(p, g, cfg)
    if res.censored_frac > MAX_CENSORED:
        raise ReliabilityError("too many censored paths", censored_frac=res.censored_frac)
    lhs, se_l = res.mean_se(res.s_tau)
    rhs, se_r = _sqrt_mean_se(res.x_tau**2)
    # paired standard error of S_T - sqrt(E X^2) via the delta method
    lin = res.s_tau - res.x_tau**2 / (2.0 * rhs)
    se_gap = float(np.std(lin, ddof=1) / math.sqrt(lin.size))
    return InequalityReport(
        "dubins_schwarz",
        1.0,
        {"a": a, "n_paths": cfg.n_paths, "dt": cfg.dt, "seed": cfg.seed},
        mc_lhs=lhs,
        mc_rhs=rhs,
        mc_se=max(se_l, se_r),
        extra={"lhs_se": se_l, "rhs_se": se_r, "gap_se": se_gap, "censored_frac": res.censored_frac},
    )


def fixed_time_check(t: float, cfg: SimulationConfig) -> InequalityReport:
    """Same comparison for the deterministic rule ``T = t`` (not optimal)."""
    if not t > 0:
        raise ArgumentError("t must be positive")
    p = StoppingProblem(brownian_motion(), RewardSpec(Affine(1.0)), CostSpec(Constant(0.0)))
    run = SimulationConfig(cfg.n_paths, cfg.dt, cfg.seed, t, cfg.scheme, cfg.block_size, cfg.workers)
    res = simulate(p, None, run)
    lhs, se_l = res.mean_se(res.s_tau)
    rhs, se_r = _sqrt_mean_se(res.x_tau**2)
    lin = res.s_tau - res.x_tau**2 / (2.0 * rhs)
    se_gap = float(np.std(lin, ddof=1) / math.sqrt(lin.size))
    return InequalityReport(
        "fixed_time",
        1.0,
        {"t": t, "n_paths": cfg.n_paths, "dt": cfg.dt, "seed": cfg.seed},
        mc_lhs=lhs,
        mc_rhs=rhs,
        mc_se=max(se_l, se_r),
        extra={"lhs_se": se_l, "rhs_se": se_r, "gap_se": se_gap},
    )
