"""Reward, cost and problem containers shared by the solver and the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffusion import DiffusionSpec
from .errors import ArgumentError, DomainError
from .functions import Fn, Piecewise, from_config

__all__ = ["RewardSpec", "CostSpec", "StoppingProblem", "SolverGrid"]


class _Companion(Fn):
    """C^1 minorant equal to ``phi`` on ``[r, inf)`` and exponential below.

    For ``s < r``: ``phi(r) - phi'(r) (exp(r - s) - 1)``, which has positive
    derivative and matches value and slope at ``r``.
    """

    def __init__(self, phi: Fn, r: float):
        self.phi = phi
        self.r = float(r)
        self.vr = float(phi(self.r))
        self.dr = float(phi.derivative(self.r))

    def _eval(self, x):
        tail = self.phi._eval(np.maximum(x, self.r))
        head = self.vr - self.dr * np.expm1(np.minimum(self.r - x, 700.0))
        return np.where(x >= self.r, tail, head)

    def _deriv(self, x):
        tail = self.phi._deriv(np.maximum(x, self.r))
        head = self.dr * np.exp(np.minimum(self.r - x, 700.0))
        return np.where(x >= self.r, tail, head)


@dataclass(frozen=True, eq=False)
class RewardSpec:
    """Non-decreasing, right-continuous reward of the running maximum.

    ``jump_points`` are kept in descending order.  ``r_phi`` may be ``None``
    when the reward is eventually flat (no strictly increasing tail).
    """

    value: Fn
    jump_points: tuple[float, ...] = ()
    kink_points: tuple[float, ...] = ()
    r_phi: float | None = None
    smooth_companion: Fn | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "value", from_config(self.value))
        jumps = set(float(j) for j in self.jump_points)
        if isinstance(self.value, Piecewise):
            jumps.update(p for p, _ in self.value.jumps())
        set_(self, "jump_points", tuple(sorted(jumps, reverse=True)))
        kinks = set(float(k) for k in self.kink_points) | jumps | set(self.value.breakpoints)
        set_(self, "kink_points", tuple(sorted(kinks, reverse=True)))
        if self.r_phi is not None:
            set_(self, "r_phi", float(self.r_phi))
            if self.smooth_companion is None:
                set_(self, "smooth_companion", _Companion(self.value, self.r_phi))

    @classmethod
    def from_config(cls, spec) -> "RewardSpec":
        if isinstance(spec, dict) and "function" in spec:
            return cls(
                from_config(spec["function"]),
                jump_points=tuple(spec.get("jump_points", ())),
                kink_points=tuple(spec.get("kink_points", ())),
                r_phi=spec.get("r_phi"),
            )
        return cls(from_config(spec))

    def __call__(self, s):
        return self.value(s)

    def derivative(self, s):
        return self.value.derivative(s)

    def left_limit(self, s: float, h: float = 1e-12) -> float:
        """``phi(s-)``; exact for piecewise rewards."""
        if isinstance(self.value, Piecewise):
            idx = int(np.searchsorted(self.value.breaks, s, side="left"))
            return float(self.value.pieces[idx](s))
        return float(self.value(s - h * max(1.0, abs(s))))

    def check(self, grid: Sequence[float]) -> list[str]:
        """Sample the reward invariants on ``grid``; returns violations."""
        grid = np.asarray(grid, dtype=float)
        issues = []
        v = self.value(grid)
        if np.any(np.diff(v) < -1e-12):
            issues.append("reward decreases on the sample grid")
        if np.any(self.derivative(grid) < -1e-12):
            issues.append("reward derivative is negative")
        for j in self.jump_points:
            if not self.value(j) - self.left_limit(j) > 0:
                issues.append(f"non-positive jump at {j}")
        if self.r_phi is not None:
            tail = grid[grid >= self.r_phi - 1.0]
            if tail.size and np.any(self.derivative(tail) <= 0):
                issues.append("reward derivative not positive on [r_phi - 1, inf)")
            comp = self.smooth_companion
            if np.any(comp(grid) > v + 1e-12):
                issues.append("smooth companion exceeds the reward")
            head = grid[grid >= self.r_phi]
            if head.size and not np.allclose(comp(head), self.value(head), rtol=1e-12, atol=1e-12):
                issues.append("smooth companion differs from reward on [r_phi, inf)")
        return issues


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Non-negative running cost; ``+inf`` outside ``finite_interval``."""

    value: Fn
    discontinuity_points: tuple[float, ...] = ()
    zero_intervals: tuple[tuple[float, float], ...] = ()
    finite_interval: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "value", from_config(self.value))
        pts = set(float(p) for p in self.discontinuity_points) | set(self.value.breakpoints)
        lo, hi = (float(v) for v in self.finite_interval)
        pts.update(p for p in (lo, hi) if math.isfinite(p))
        set_(self, "discontinuity_points", tuple(sorted(pts)))
        set_(self, "finite_interval", (lo, hi))
        zi = tuple((float(a), float(b)) for a, b in self.zero_intervals)
        for a, b in zi:
            if not a < b:
                raise DomainError(f"empty zero interval ({a}, {b})")
        set_(self, "zero_intervals", tuple(sorted(zi)))

    @classmethod
    def from_config(cls, spec) -> "CostSpec":
        if isinstance(spec, dict) and "function" in spec:
            fi = spec.get("finite_interval", (-math.inf, math.inf))
            return cls(
                from_config(spec["function"]),
                discontinuity_points=tuple(spec.get("discontinuity_points", ())),
                zero_intervals=tuple(tuple(z) for z in spec.get("zero_intervals", ())),
                finite_interval=tuple(float(v) for v in fi),
            )
        return cls(from_config(spec))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.discontinuity_points

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        lo, hi = self.finite_interval
        out = np.asarray(self.value(x_arr), dtype=float)
        out = np.where((x_arr < lo) | (x_arr > hi), math.inf, out)
        for a, b in self.zero_intervals:
            out = np.where((x_arr > a) & (x_arr < b), 0.0, out)
        return float(out) if np.ndim(x) == 0 else out

    def in_zero_interval(self, x: float) -> tuple[float, float] | None:
        for a, b in self.zero_intervals:
            if a < x < b:
                return a, b
        return None

    def check(self, grid: Sequence[float]) -> list[str]:
        grid = np.asarray(grid, dtype=float)
        lo, hi = self.finite_interval
        vals = self(grid)
        issues = []
        if np.any(vals < 0):
            issues.append("cost is negative on the sample grid")
        inside = (grid >= lo) & (grid <= hi)
        if np.any(~np.isfinite(vals[inside])):
            issues.append("cost is infinite inside the finite-cost interval")
        return issues


@dataclass(frozen=True, eq=False)
class StoppingProblem:
    diffusion: DiffusionSpec
    reward: RewardSpec
    cost: CostSpec
    start_x: float = 0.0
    start_s: float = 0.0

    def __post_init__(self):
        d = self.diffusion
        if not isinstance(self.reward, RewardSpec):
            object.__setattr__(self, "reward", RewardSpec.from_config(self.reward))
        if not isinstance(self.cost, CostSpec):
            object.__setattr__(self, "cost", CostSpec.from_config(self.cost))
        x, s = float(self.start_x), float(self.start_s)
        object.__setattr__(self, "start_x", x)
        object.__setattr__(self, "start_s", s)
        if x > s:
            raise ArgumentError(f"start_x={x} must not exceed start_s={s}")
        lo_ok = d.state_lo < x or (x == d.state_lo and d.boundary_kind_lo != "natural")
        if not (lo_ok and s <= d.state_hi):
            raise DomainError("start point outside the state interval")


@dataclass(frozen=True)
class SolverGrid:
    """Working window and numerical controls of the boundary solver.

    ``s_min``/``s_max`` bound the reporting window; the solver integrates from
    ``s_max * horizon`` (further doubled during the sweep) down to ``s_min``.
    """

    s_min: float
    s_max: float
    eps_diag: float = 1e-6
    n_points: int = 2001
    rtol: float = 1e-10
    atol: float = 1e-12
    sweep_tol: float = 1e-4
    max_doublings: int = 12
    horizon: float | None = None
    extra_points: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise ArgumentError("grid needs s_min < s_max")
        if self.eps_diag <= 0 or self.n_points < 2:
            raise ArgumentError("grid needs eps_diag > 0 and n_points >= 2")

    def points(self) -> np.ndarray:
        base = np.linspace(self.s_min, self.s_max, self.n_points)
        extra = [p for p in self.extra_points if self.s_min < p < self.s_max]
        return np.unique(np.concatenate([base, extra]))
