"""Maximal boundary of the stopping problem for the maximum process.

The optimal boundary is the maximal solution, staying strictly below the
diagonal, of

    g'(s) = phi'(s) sigma(g)^2 L'(g) / (2 c(g) (L(s) - L(g))).

Integrating this equation backward in ``s`` from a point just below the
diagonal is contracting toward the maximal solution, so the solver starts at
``(S_top, S_top - eps)`` and sweeps ``eps`` down and ``S_top`` up until the
curves agree on the reporting window.  Jumps of the reward, flat stretches of
the reward, zero-cost intervals and the lower end of the state space are
handled as events along the way.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .boundary import Boundary
from .diffusion import BoundaryKind, exit_up_probability, expected_cost_to_exit
from .errors import (
    ConvergenceError,
    DivergenceError,
    DomainError,
    InfinitePayoffError,
    NoInteriorMaxError,
    SingularityError,
)
from .problem import SolverGrid, StoppingProblem

log = logging.getLogger(__name__)

__all__ = [
    "ode_rhs",
    "solve_maximal_boundary",
    "jump_boundary_value",
    "jump_objective",
    "payoff",
    "forward_curve",
    "backward_curve",
    "SolveReport",
]

_BIG = 1e300


def ode_rhs(p: StoppingProblem, s: float, g: float) -> float:
    """Right-hand side of the boundary equation at ``(s, g)``.

    Returns ``inf`` when the cost vanishes at ``g`` and ``0`` where it is
    infinite.
    """
    d = p.diffusion
    if not g < s:
        raise SingularityError(f"boundary equation is singular on or above the diagonal (s={s}, g={g})")
    if not (d.state_lo <= g and s <= d.state_hi):
        raise DomainError(f"(s={s}, g={g}) outside the state space")
    dphi = float(p.reward.derivative(s))
    if dphi == 0.0:
        return 0.0
    cg = float(p.cost(g))
    if cg == 0.0:
        return math.inf
    if math.isinf(cg):
        return 0.0
    sig = float(d.volatility(g))
    return dphi * sig * sig * d.lprime(g) / (2.0 * cg * (d.L(s) - d.L(g)))


def _rhs_unchecked(p: StoppingProblem, s: float, g: float) -> float:
    if g >= s:
        return _BIG
    try:
        v = ode_rhs(p, s, g)
    except DomainError:
        return 0.0
    return min(v, _BIG)


# --------------------------------------------------------------------------- #
# Payoff
# --------------------------------------------------------------------------- #


def _cost_speed_integral(p: StoppingProblem, lo: float, hi: float, x: float) -> float:
    """``int_lo^hi (L(x) - L(u)) c(u) m(u) du``."""
    if hi <= lo:
        return 0.0
    d, c = p.diffusion, p.cost
    Lx = d.L(x)

    def f(u):
        return (Lx - d.L(u)) * c(u) * d.speed(u)

    pts = [q for q in c.discontinuity_points if lo < q < hi]
    for a, b in c.zero_intervals:
        pts.extend(q for q in (a, b) if lo < q < hi)
    edges = [lo, *sorted(set(pts)), hi]
    total = 0.0
    for u, v in zip(edges[:-1], edges[1:]):
        mid = np.linspace(u, v, 5)[1:-1]
        if np.any(np.isinf(c(mid))):
            raise DivergenceError(f"cost is infinite on ({u}, {v}); payoff integral diverges")
        val, _ = integrate.quad(f, u, v, epsabs=d.abs_tol, epsrel=d.rel_tol, limit=200)
        total += val
    return total


def payoff(p: StoppingProblem, g: Boundary, x: float, s: float) -> float:
    """Value of stopping at ``X <= g(S)`` started from ``(x, s)``."""
    d = p.diffusion
    if not x <= s:
        raise DomainError(f"need x <= s, got x={x}, s={s}")
    if not (d.state_lo <= x and s <= d.state_hi):
        raise DomainError("(x, s) outside the state space")
    gs = g(s)
    base = float(p.reward(s))
    if x <= gs:
        return base
    return base + _cost_speed_integral(p, max(gs, d.state_lo), x, x)


# --------------------------------------------------------------------------- #
# Jumps of the reward
# --------------------------------------------------------------------------- #


def jump_objective(p: StoppingProblem, a: float, x: float, s0: float, v_right: float, phi_left: float) -> float:
    """Payoff from ``x`` of exiting ``[a, s0]``: collect ``v_right`` at the top
    or ``phi_left`` at the bottom, minus the running cost."""
    d = p.diffusion
    up = exit_up_probability(d, a, s0, x)
    cost = expected_cost_to_exit(d, p.cost, a, s0, x)
    return (v_right - phi_left) * up - cost + phi_left


def _jump_criterion(p: StoppingProblem, a: float, s0: float, delta: float) -> float:
    """x-free form of the jump objective: the maximiser over ``a`` of
    ``jump_objective`` minimises ``(delta + int_a^s0 (L(y)-L(a)) c m dy) / (L(s0)-L(a))``."""
    d = p.diffusion
    La = d.L(a)
    span = d.L(s0) - La
    integral = _cost_speed_integral(p, a, s0, s0) - (d.L(s0) - La) * _speed_mass(p, a, s0)
    # (L(y) - L(a)) = (L(s0) - L(a)) - (L(s0) - L(y))
    return (delta - integral) / span


def _speed_mass(p: StoppingProblem, lo: float, hi: float) -> float:
    d, c = p.diffusion, p.cost
    pts = sorted(q for q in c.discontinuity_points if lo < q < hi)
    edges = [lo, *pts, hi]
    total = 0.0
    for u, v in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda y: c(y) * d.speed(y), u, v, epsabs=d.abs_tol, epsrel=d.rel_tol, limit=200)
        total += val
    return total


def jump_boundary_value(
    p: StoppingProblem,
    v_right: float,
    s0: float,
    phi_left: float,
    max_span: float = 1e6,
) -> float:
    """Left value ``g(s0-)`` of the boundary at a jump of the reward.

    Maximises the exit-interval payoff over the lower exit level ``a < s0``.
    The maximiser does not depend on the starting point, so the x-free
    criterion is minimised directly.
    """
    d = p.diffusion
    delta = float(v_right) - float(phi_left)
    if delta < 0:
        raise DomainError(f"V(s0,s0)={v_right} below the left reward {phi_left}")
    if delta == 0.0:
        return float(s0)
    lo_limit = d.state_lo
    reach = min(max_span, s0 - lo_limit) if math.isfinite(lo_limit) else max_span

    def crit(t):
        return _jump_criterion(p, s0 - t, s0, delta)

    # geometric scan of the gap t = s0 - a
    t_scan = np.geomspace(min(1e-8, reach / 2), reach, 121)
    if math.isfinite(lo_limit):
        t_scan = t_scan[s0 - t_scan >= lo_limit]
    vals = []
    for t in t_scan:
        try:
            vals.append(crit(t))
        except DivergenceError:
            vals.append(math.inf)
    vals = np.array(vals)
    k = int(np.argmin(vals))
    if k == vals.size - 1:
        if math.isfinite(lo_limit) and s0 - t_scan[k] <= lo_limit + 1e-12 * max(1.0, abs(lo_limit)):
            return float(lo_limit)
        raise NoInteriorMaxError(
            "exit-interval payoff keeps increasing as the lower level goes down",
            s0=s0,
            delta=delta,
        )
    lo_t = t_scan[max(k - 1, 0)] if k > 0 else t_scan[0] * 1e-3
    hi_t = t_scan[k + 1]
    res = optimize.minimize_scalar(crit, bounds=(lo_t, hi_t), method="bounded", options={"xatol": 1e-12 * max(1.0, hi_t)})
    t_best = float(res.x) if res.fun <= vals[k] else float(t_scan[k])
    return float(s0 - t_best)


# --------------------------------------------------------------------------- #
# Backward integration
# --------------------------------------------------------------------------- #


@dataclass
class _Curve:
    s: list = field(default_factory=list)
    g: list = field(default_factory=list)
    clip: float = -math.inf
    escaped: bool = False

    def add(self, s, g):
        self.s.append(float(s))
        self.g.append(float(g))


def _right_value_payoff(p: StoppingProblem, s0: float, g0: float) -> float:
    base = float(p.reward(s0))
    if g0 >= s0:
        return base
    return base + _cost_speed_integral(p, max(g0, p.diffusion.state_lo), s0, s0)


def backward_curve(
    p: StoppingProblem,
    s_top: float,
    eps: float,
    s_bottom: float,
    sample: np.ndarray,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    floor: float | None = None,
) -> Boundary:
    """Integrate the boundary equation from ``(s_top, s_top - eps)`` down to
    ``s_bottom``.  Nodes are reported at ``sample`` points and at events."""
    d, reward = p.diffusion, p.reward
    a_x = d.state_lo
    if floor is None:
        floor = -math.inf if math.isfinite(a_x) else s_bottom - 1e4 * max(1.0, s_top - s_bottom)
    lower = a_x if math.isfinite(a_x) else floor

    breaks = sorted({b for b in reward.kink_points if s_bottom < b < s_top} | {s_bottom, s_top}, reverse=True)
    jumps = set(reward.jump_points)
    sample = np.sort(np.asarray(sample, dtype=float))[::-1]
    curve = _Curve()

    # start on the diagonal; it is left as soon as phi' > 0
    on_diag, clipped = True, False
    g = s_top
    curve.add(s_top, s_top)

    for hi, lo in zip(breaks[:-1], breaks[1:]):
        if not clipped and hi in jumps and hi != s_top:
            v_right = _right_value_payoff(p, hi, g)
            a_star = max(jump_boundary_value(p, v_right, hi, reward.left_limit(hi)), lower)
            curve.add(hi, a_star)
            g, on_diag = a_star, False
            if g <= lower:
                clipped, curve.clip = True, hi
        s_cur = hi
        while s_cur > lo:
            pts = sample[(sample < s_cur) & (sample > lo)]
            if clipped:
                for q in pts:
                    curve.add(q, lower)
                curve.add(lo, lower)
                break
            if on_diag:
                s_leave = _leave_point(p, s_cur, lo)
                for q in pts[pts > s_leave]:
                    curve.add(q, q)
                curve.add(s_leave, s_leave)
                if s_leave <= lo:
                    g = lo
                    break
                start, g = _leave_diagonal(p, s_leave, lo, eps)
                if start < s_leave:
                    curve.add(start, g)
                on_diag, s_cur = False, start
                continue
            g, s_cur, status = _integrate_segment(p, curve, s_cur, lo, g, pts, lower, floor, rtol, atol)
            if status == "diag":
                on_diag, g = True, s_cur
            elif status == "clip":
                clipped = True
    s = np.array(curve.s[::-1])
    gv = np.array(curve.g[::-1])
    s, gv = _dedupe(s, gv)
    flags = []
    if math.isfinite(curve.clip) and d.boundary_kind_lo in (BoundaryKind.ENTRANCE, BoundaryKind.REGULAR_REFLECTING):
        flags.append("lower boundary entrance/reflecting: limit at a_X recorded as computed")
    if curve.escaped:
        flags.append("escaped below floor")
    return Boundary(s, gv, clip_level=curve.clip, floor=lower, flags=tuple(flags),
                    meta={"s_top": s_top, "eps": eps})


def _dedupe(s: np.ndarray, g: np.ndarray):
    """Drop exact duplicate nodes and collapse runs of equal abscissae to the
    outer two (left value first)."""
    keep_s, keep_g = [s[0]], [g[0]]
    for si, gi in zip(s[1:], g[1:]):
        if si == keep_s[-1] and gi == keep_g[-1]:
            continue
        if len(keep_s) >= 2 and si == keep_s[-1] == keep_s[-2]:
            keep_g[-1] = gi
            continue
        keep_s.append(si)
        keep_g.append(gi)
    return np.array(keep_s), np.array(keep_g)


def _leave_diagonal(p: StoppingProblem, hi: float, lo: float, eps: float):
    """First step away from ``(hi, hi - eps)``.

    Near the diagonal ``g' ~ A / (s - g)``, so the gap grows like
    ``sqrt(eps^2 + 2 A h)``; stepping along this local solution avoids step
    sizes below the floating-point spacing of ``s``.
    """
    g0 = hi - eps
    slope = _rhs_unchecked(p, hi, g0)
    if not math.isfinite(slope) or slope <= 0.0 or slope >= _BIG:
        return hi, g0
    a = slope * eps
    h = min(eps * max(1.0, abs(hi)), 0.5 * (hi - lo))
    gap = math.sqrt(eps * eps + 2.0 * a * h)
    if gap >= 0.5 * (hi - lo) or gap <= eps:
        return hi, g0
    return hi - h, hi - h - gap


def _leave_point(p: StoppingProblem, s_cur: float, lo: float) -> float:
    """Largest ``s <= s_cur`` below which the reward starts increasing
    (``lo`` if it stays flat down to ``lo``)."""
    dphi = p.reward.derivative
    width = s_cur - lo
    tiny = 1e-12 * max(1.0, abs(s_cur))
    if dphi(s_cur - min(tiny, 0.5 * width)) > 0:
        return s_cur
    probe = np.linspace(s_cur, lo, 2049)[1:]
    pos = np.flatnonzero(np.asarray(dphi(probe)) > 0)
    if pos.size == 0:
        return lo
    k = int(pos[0])
    a, b = probe[k], (probe[k - 1] if k > 0 else s_cur)
    # phi' > 0 at a, == 0 at b; bisect for the transition
    for _ in range(60):
        m = 0.5 * (a + b)
        if dphi(m) > 0:
            a = m
        else:
            b = m
        if b - a <= tiny:
            break
    return float(b)


def _integrate_segment(p, curve, hi, lo, g, pts, lower, floor, rtol, atol):
    """Integrate down one smooth piece.

    Returns ``(g, s, status)`` with status ``"done"`` (reached ``lo``),
    ``"diag"`` (met the diagonal at ``s``) or ``"clip"`` (reached the lower
    end of the state space at ``s``).
    """
    cost = p.cost
    s_cur = hi
    while True:
        events = []

        def ev_lower(s, y):
            return y[0] - lower

        ev_lower.terminal = True
        events.append(ev_lower)

        def ev_diag(s, y):
            return (s - y[0]) - 1e-14 * max(1.0, abs(s))

        ev_diag.terminal = True
        events.append(ev_diag)

        zero_tops = [(a, b) for a, b in cost.zero_intervals if b <= g + 1e-15 and b > lower]
        for a, b in zero_tops:
            def ev_zero(s, y, b=b):
                return y[0] - b

            ev_zero.terminal = True
            events.append(ev_zero)

        # below the top of the next zero-cost interval the slope is infinite;
        # evaluating at the top lets a step cross it so the event can fire
        g_clamp = max((b for _, b in zero_tops), default=-math.inf)
        if math.isfinite(g_clamp):
            g_clamp = math.nextafter(g_clamp, math.inf)

        # just below a zero-cost interval already crossed, use the value from below
        passed = [(a, b) for a, b in cost.zero_intervals if a >= g - 1e-15]

        def rhs(s, y):
            v = max(y[0], g_clamp)
            for a, b in passed:
                if a <= v <= b:
                    v = math.nextafter(a, -math.inf)
            return [_rhs_unchecked(p, s, v)]

        # the initial step probe may divide by a huge slope near a support edge
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            sol = integrate.solve_ivp(
                rhs,
                (s_cur, lo),
                [g],
                method="DOP853",
                rtol=rtol,
                atol=atol,
                dense_output=True,
                events=events,
            )
        if sol.status == -1:
            raise ConvergenceError(f"backward integration failed: {sol.message}", s=s_cur, g=g)
        s_end = float(sol.t[-1])
        inside = pts[(pts < s_cur) & (pts > s_end)]
        if inside.size:
            vals = sol.sol(inside)[0]
            for q, v in zip(inside, vals):
                curve.add(q, v)
        g_end = float(sol.y[0, -1])
        if sol.status == 0:
            curve.add(lo, g_end)
            return g_end, lo, "done"
        i_ev = [i for i, te in enumerate(sol.t_events) if te.size][0]
        if i_ev == 0:
            curve.add(s_end, lower)
            curve.clip = s_end
            if lower == floor:
                curve.escaped = True
            return lower, s_end, "clip"
        if i_ev == 1:
            curve.add(s_end, min(g_end, s_end))
            return s_end, s_end, "diag"
        a, b = zero_tops[i_ev - 2]
        # zero cost on (a, b): the inverse boundary is flat there, g jumps from a to b
        curve.add(s_end, b)
        g = max(a, lower)
        curve.add(s_end, g)
        s_cur = s_end
        if g <= lower:
            curve.clip = s_end
            return lower, s_end, "clip"


# --------------------------------------------------------------------------- #
# Forward integration (maximality diagnostics)
# --------------------------------------------------------------------------- #


def forward_curve(p: StoppingProblem, s1: float, g1: float, s_end: float, rtol: float = 1e-10, atol: float = 1e-12):
    """Integrate forward from ``(s1, g1)``.

    Returns ``(s_cross, sol)`` where ``s_cross`` is where the curve reaches the
    diagonal, or ``None`` if it stays below up to ``s_end``.
    """
    tol = 1e-7
    gap = lambda s, y: (s - y[0]) - tol * max(1.0, abs(s))
    gap.terminal = True
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        sol = integrate.solve_ivp(
            lambda s, y: [_rhs_unchecked(p, s, y[0])],
            (s1, s_end),
            [g1],
            method="DOP853",
            rtol=rtol,
            atol=atol,
            events=[gap],
        )
    if sol.t_events[0].size:
        return float(sol.t_events[0][0]), sol
    s_last, g_last = float(sol.t[-1]), float(sol.y[0, -1])
    if sol.status == -1 and s_last - g_last <= 1e3 * tol * max(1.0, abs(s_last)):
        # the slope blows up at the diagonal and the stepper stalls just short of it
        return s_last, sol
    return None, sol


# --------------------------------------------------------------------------- #
# Driver
# --------------------------------------------------------------------------- #


@dataclass
class SolveReport:
    converged: bool = False
    s_top: float = math.nan
    eps: float = math.nan
    sweep: list = field(default_factory=list)


def _distance(b1: Boundary, b2: Boundary, pts: np.ndarray) -> float:
    mask = np.ones(pts.size, dtype=bool)
    for b in (b1, b2):
        for sj, _, _ in b.jumps:
            mask &= np.abs(pts - sj) > 1e-6 * max(1.0, abs(sj))
    diff = float(np.max(np.abs(b1(pts[mask]) - b2(pts[mask])))) if mask.any() else 0.0
    edge = pts[0] + 1e-9 * max(1.0, abs(pts[-1] - pts[0]))
    c1, c2 = (c if c > edge else -math.inf for c in (b1.clip_level, b2.clip_level))
    if math.isfinite(c1) or math.isfinite(c2):
        if not (math.isfinite(c1) and math.isfinite(c2)):
            return math.inf
        diff = max(diff, abs(c1 - c2))
    return diff


def _window_boundary(b: Boundary, pts: np.ndarray, s_min: float, s_max: float) -> Boundary:
    keep = (b.s >= s_min) & (b.s <= s_max)
    s, g = b.s[keep], b.g[keep]
    if s.size < 2:
        s, g = pts, b(pts)
    return Boundary(s, g, clip_level=b.clip_level, floor=b.floor, flags=b.flags, meta=dict(b.meta))


def solve_maximal_boundary(p: StoppingProblem, grid: SolverGrid, report: SolveReport | None = None) -> Boundary:
    """Maximal solution below the diagonal, reported on ``[s_min, s_max]``.

    Raises :class:`InfinitePayoffError` when every integral curve meets the
    diagonal, i.e. the value of the problem is infinite.
    """
    d = p.diffusion
    pts = grid.points()
    s_min, s_max = grid.s_min, grid.s_max
    if s_min < d.state_lo or s_max > d.state_hi:
        raise DomainError("solver window must lie inside the state interval")
    ext = grid.horizon if grid.horizon is not None else max(s_max - s_min, 1.0)
    hi_cap = d.state_hi if math.isfinite(d.state_hi) else math.inf
    if math.isfinite(hi_cap):
        hi_cap -= 1e-9 * max(1.0, abs(hi_cap))

    def run(s_top, eps):
        s_top = min(s_top, hi_cap)
        return backward_curve(p, s_top, eps, s_min, pts, rtol=grid.rtol, atol=grid.atol)

    eps = grid.eps_diag
    s_top = s_max + ext
    prev = run(s_top, eps)
    sweep = [(s_top, eps, None)]
    # shrink the diagonal offset
    for _ in range(2):
        eps /= 2.0
        cur = run(s_top, eps)
        dist = _distance(prev, cur, pts)
        sweep.append((s_top, eps, dist))
        prev = cur
    converged = sweep[-1][2] < grid.sweep_tol
    # push the terminal point out
    for _ in range(grid.max_doublings):
        if s_top >= hi_cap:
            break
        s_top = s_max + 2.0 * (s_top - s_max)
        cur = run(s_top, eps)
        dist = _distance(prev, cur, pts)
        sweep.append((min(s_top, hi_cap), eps, dist))
        prev = cur
        if dist < grid.sweep_tol:
            converged = True
            break
        converged = False
    if report is not None:
        report.converged, report.s_top, report.eps, report.sweep = converged, s_top, eps, sweep
    if not converged:
        crossing = _all_curves_cross(p, grid, prev, s_top)
        if crossing is not None:
            raise InfinitePayoffError(
                "no solution of the boundary equation stays below the diagonal",
                start=crossing[0],
                crossing=crossing[1],
                sweep=[list(map(_jsonable, row)) for row in sweep],
            )
        raise ConvergenceError(
            "boundary sweep did not converge on the reporting window",
            sweep=[list(map(_jsonable, row)) for row in sweep],
        )
    return _window_boundary(prev, pts, s_min, s_max)


def _jsonable(v):
    if v is None or (isinstance(v, float) and math.isfinite(v)):
        return v
    return float(v) if v is not None else None


def _all_curves_cross(p: StoppingProblem, grid: SolverGrid, last: Boundary, s_top: float):
    """Check that the lowest admissible curve from the window bottom meets the
    diagonal; curves do not cross, so then every curve does."""
    d = p.diffusion
    s1 = grid.s_min if grid.s_min > d.state_lo else grid.s_min + 1e-6 * max(1.0, grid.s_max - grid.s_min)
    if math.isfinite(d.state_lo):
        g1 = d.state_lo + 1e-9 * max(1.0, s1 - d.state_lo)
        if s1 <= g1:
            s1 = g1 + 1e-6
    else:
        g1 = min(float(last(s1)), s1) - 10.0 * (grid.s_max - grid.s_min)
    s_cross, _ = forward_curve(p, s1, g1, max(s_top, 1e3 * max(1.0, abs(grid.s_max))), rtol=1e-8, atol=1e-10)
    if s_cross is None:
        return None
    return (s1, g1), s_cross
