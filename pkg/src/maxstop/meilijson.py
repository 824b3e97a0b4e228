"""Value-function route for a constant cost.

With ``c`` constant, ``H(x) = sup E[phi(x + S_tau) - c tau]`` is the minimal
solution of ``H - (H')^2 / (4c) = phi``.  When ``phi`` is constant on
``[x0, inf)``, ``H = phi`` there and ``H`` is obtained below ``x0`` by
integrating ``H' = sqrt(4c (H - phi))`` backward.  The stopping boundary is
``g(x) = x - H'(x) / (2c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .boundary import Boundary
from .errors import ArgumentError, ConvergenceError, UnsupportedError
from .problem import RewardSpec, SolverGrid

__all__ = ["ValueFunctionH", "meilijson_H", "boundary_from_H"]


@dataclass(frozen=True, eq=False)
class ValueFunctionH:
    x: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    c: float
    x0: float

    def __call__(self, x):
        return np.interp(x, self.x, self.H)

    def derivative(self, x):
        return np.interp(x, self.x, self.dH)

    def residual(self, reward: RewardSpec) -> np.ndarray:
        """``H - (H')^2/(4c) - phi`` on the grid."""
        return self.H - self.dH**2 / (4.0 * self.c) - reward(self.x)


def _check_tail_constant(reward: RewardSpec, x0: float, span: float) -> float:
    probe = np.linspace(x0, x0 + max(span, 1.0) * 10.0, 257)
    vals = reward(probe)
    if not (np.all(vals == vals[0]) and np.all(reward.derivative(probe) == 0.0)):
        raise UnsupportedError(
            f"reward is not constant on [{x0}, inf); the value function has no anchor"
        )
    return float(vals[0])


def meilijson_H(reward: RewardSpec, c: float, x0: float, grid: SolverGrid) -> ValueFunctionH:
    if not c > 0:
        raise ArgumentError("cost must be a positive constant")
    span = grid.s_max - grid.s_min
    _check_tail_constant(reward, x0, span)
    xs = grid.points()
    x_lo = min(xs[0], x0)
    four_c = 4.0 * c

    # y = H - phi; y' = sqrt(4 c y) - phi'(x), integrated backward from y(x0) = 0
    def rhs(x, y):
        return [math.sqrt(four_c * max(y[0], 0.0)) - float(reward.derivative(x))]

    breaks = sorted({b for b in reward.kink_points if x_lo < b < x0} | {x_lo, x0}, reverse=True)
    jumps = set(reward.jump_points)
    below = xs[xs < x0]
    out_x, out_y = [x0], [0.0]
    y = 0.0
    for hi, lo in zip(breaks[:-1], breaks[1:]):
        if hi in jumps and hi != x0:
            # H is continuous, phi jumps: y picks up the jump going left
            y += float(reward(hi)) - reward.left_limit(hi)
            out_x.append(hi)
            out_y.append(y)
        sol = integrate.solve_ivp(rhs, (hi, lo), [y], method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
        if sol.status == -1:
            raise ConvergenceError(f"H integration failed: {sol.message}")
        pts = below[(below < hi) & (below > lo)]
        if pts.size:
            out_x.extend(pts.tolist())
            out_y.extend(np.maximum(sol.sol(pts)[0], 0.0).tolist())
        y = max(float(sol.y[0, -1]), 0.0)
        out_x.append(lo)
        out_y.append(y)
    x_arr = np.array(out_x[::-1])
    y_arr = np.array(out_y[::-1])
    above = xs[xs > x0]
    x_arr = np.concatenate([x_arr, above])
    y_arr = np.concatenate([y_arr, np.zeros(above.size)])
    x_arr, idx = np.unique(x_arr, return_index=True)
    y_arr = y_arr[idx]
    phi = reward(x_arr)
    H = phi + y_arr
    dH = np.sqrt(four_c * y_arr)
    return ValueFunctionH(x_arr, H, dH, float(c), float(x0))


def boundary_from_H(H: ValueFunctionH, c: float | None = None) -> Boundary:
    """``g(x) = x - H'(x) / (2c)`` on the grid of ``H``."""
    c = H.c if c is None else float(c)
    g = H.x - H.dH / (2.0 * c)
    return Boundary(H.x.copy(), g)
