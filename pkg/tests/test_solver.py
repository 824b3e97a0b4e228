import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxstop.diffusion import brownian_motion, reflected_brownian_motion
from maxstop.errors import DomainError, InfinitePayoffError
from maxstop.functions import Affine, Constant, Expression, Piecewise, Power, Step
from maxstop.inequalities import alpha_root
from maxstop.problem import CostSpec, RewardSpec, SolverGrid, StoppingProblem
from maxstop.solver import (
    SolveReport,
    forward_curve,
    jump_boundary_value,
    jump_objective,
    ode_rhs,
    payoff,
    solve_maximal_boundary,
)

BM = brownian_motion()


def problem(reward, cost, diffusion=BM, **kw):
    return StoppingProblem(diffusion, RewardSpec(reward), CostSpec(cost) if not isinstance(cost, CostSpec) else cost, **kw)


def power_problem(c):
    return StoppingProblem(reflected_brownian_motion(), RewardSpec(Power(1.0, 2.0)), CostSpec(Constant(c)))


# -- ode_rhs -----------------------------------------------------------------


def test_ode_rhs_linear_case(linear_problem):
    assert ode_rhs(linear_problem, 2.0, 1.0) == pytest.approx(1.0)


def test_ode_rhs_flat_reward_is_zero():
    p = problem(Piecewise([1.0], [Affine(1.0), Constant(1.0)]), Constant(0.5))
    assert ode_rhs(p, 2.0, 1.0) == 0.0


def test_ode_rhs_power_case_slope_is_alpha():
    # on g = alpha*s the right-hand side equals alpha; alpha solves a - a^2 = 1/8
    a = alpha_root(2.0, 8.0)
    assert ode_rhs(power_problem(8.0), 1.0, a) == pytest.approx(a, rel=1e-12)
    assert ode_rhs(power_problem(8.0), 3.0, 3.0 * a) == pytest.approx(a, rel=1e-12)


# -- solve_maximal_boundary ---------------------------------------------------


def test_linear_boundary(linear_problem):
    rep = SolveReport()
    b = solve_maximal_boundary(linear_problem, SolverGrid(0.0, 10.0), rep)
    s = np.linspace(0, 10, 2001)
    assert np.max(np.abs(b(s) - (s - 1.0))) < 1e-3
    assert rep.converged


def test_power_case_slope():
    b = solve_maximal_boundary(power_problem(8.0), SolverGrid(0.0, 10.0))
    s = np.linspace(0.5, 10, 200)
    assert np.max(np.abs(b(s) / s - alpha_root(2.0, 8.0))) < 1e-3


def test_power_case_below_threshold_is_infinite():
    with pytest.raises(InfinitePayoffError) as exc:
        solve_maximal_boundary(power_problem(3.0), SolverGrid(0.0, 10.0))
    assert exc.value.code == "INFINITE_PAYOFF"


def test_window_outside_state_space():
    with pytest.raises(DomainError):
        solve_maximal_boundary(power_problem(8.0), SolverGrid(-1.0, 10.0))


# -- jumps -------------------------------------------------------------------


@pytest.mark.parametrize("delta, want", [(1.0, 4.0), (4.0, 3.0)])
def test_jump_boundary_value(delta, want):
    p = problem(Affine(1.0), Constant(1.0))
    a = jump_boundary_value(p, 4.0 + delta, 5.0, 4.0)
    assert a == pytest.approx(want, abs=1e-6)
    # brute-force maximiser of the exit-interval payoff over a, from x = s0 - 0.1
    grid = np.linspace(0.0, 4.85, 4851)
    vals = [jump_objective(p, v, 4.9, 5.0, 4.0 + delta, 4.0) for v in grid]
    assert abs(grid[int(np.argmax(vals))] - a) < 2e-3


def test_jump_vanishing_size():
    p = problem(Affine(1.0), Constant(1.0))
    assert jump_boundary_value(p, 4.0, 5.0, 4.0) == 5.0
    assert jump_boundary_value(p, 4.0 + 1e-10, 5.0, 4.0) == pytest.approx(5.0, abs=1e-4)


def test_solver_uses_jump_value():
    p = problem(Piecewise([5.0], [Constant(4.0), Constant(5.0)]), Constant(1.0))
    b = solve_maximal_boundary(p, SolverGrid(0.0, 8.0))
    assert b.left_limit(5.0) == pytest.approx(4.0, abs=1e-3)


# -- payoff ------------------------------------------------------------------


def test_payoff_closed_form(linear_problem):
    g = solve_maximal_boundary(linear_problem, SolverGrid(0.0, 10.0))
    assert payoff(linear_problem, g, 0.5, 3.0) == 3.0  # x <= g(s): stop
    assert payoff(linear_problem, g, 3.0, 3.0) == pytest.approx(3.5, abs=1e-6)
    assert payoff(linear_problem, g, 2.5, 3.0) == pytest.approx(3.125, abs=1e-6)


def test_payoff_invariant_under_reference_point():
    g = solve_maximal_boundary(problem(Affine(1.0), Constant(0.5)), SolverGrid(0.0, 10.0))
    from maxstop.diffusion import DiffusionSpec

    vals = []
    for ref in (0.0, 3.0, -7.0):
        d = DiffusionSpec(Constant(0.2), Constant(1.3), x_ref=ref)
        vals.append(payoff(problem(Affine(1.0), Expression("0.5 + 0.1*x*x"), d), g, 2.0, 3.0))
    assert max(vals) - min(vals) < 1e-8


def test_payoff_rejects_x_above_s(linear_problem):
    g = solve_maximal_boundary(linear_problem, SolverGrid(0.0, 10.0))
    with pytest.raises(DomainError):
        payoff(linear_problem, g, 2.0, 1.0)


# -- property battery ---------------------------------------------------------

NONLINEAR = Expression("0.5 + 0.1*x*x")


def test_ode_residual_on_solver_grid():
    p = problem(Affine(1.0), NONLINEAR)
    b = solve_maximal_boundary(p, SolverGrid(0.0, 5.0, n_points=4001))
    s = b.s[(b.s > 0.05) & (b.s < 4.95)]
    num = np.gradient(b(s), s)
    rhs = np.array([ode_rhs(p, v, float(b(v))) for v in s])
    assert np.max(np.abs(num - rhs)[1:-1]) < 1e-5


@pytest.mark.parametrize("cost", [Constant(0.5), NONLINEAR], ids=["constant", "quadratic"])
@pytest.mark.parametrize("s1", [2.0, 5.0, 8.0])
@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_maximality_perturbation(cost, s1, eps):
    p = problem(Affine(1.0), cost)
    rep = SolveReport()
    b = solve_maximal_boundary(p, SolverGrid(0.0, 10.0), rep)
    s_cross, _ = forward_curve(p, s1, float(b(s1)) + eps, rep.s_top)
    assert s_cross is not None and s_cross < rep.s_top


def test_curve_below_maximal_stays_below(linear_problem):
    rep = SolveReport()
    b = solve_maximal_boundary(linear_problem, SolverGrid(0.0, 10.0), rep)
    s_cross, _ = forward_curve(linear_problem, 5.0, float(b(5.0)) - 1e-3, rep.s_top)
    assert s_cross is None


def test_diagonal_avoidance():
    p = problem(Affine(1.0), NONLINEAR)
    b = solve_maximal_boundary(p, SolverGrid(0.0, 10.0))
    s = np.linspace(0, 10, 1001)
    assert np.all(b(s) < s)


def test_constancy_matching():
    reward = Piecewise([2.0, 4.0], [Affine(1.0), Constant(2.0), Affine(1.0, -2.0)])
    grid = SolverGrid(0.0, 10.0)
    b = solve_maximal_boundary(problem(reward, Constant(0.1)), grid)
    cell = (grid.s_max - grid.s_min) / (grid.n_points - 1)
    flats = b.flat_intervals(min_len=cell)
    assert len(flats) == 1
    lo, hi = flats[0]
    assert abs(lo - 2.0) <= cell and abs(hi - 4.0) <= cell


def test_zero_cost_range_avoided():
    cost = CostSpec(Step([1.0, 2.0], [0.5, 0.0, 0.5]), zero_intervals=((1.0, 2.0),))
    b = solve_maximal_boundary(problem(Affine(1.0), cost), SolverGrid(0.0, 10.0))
    g = b(np.linspace(0.0, 10.0, 4001))
    assert not np.any((g > 1.0) & (g < 2.0))
    (s_jump, left, right), = b.jumps
    assert (left, right) == (1.0, 2.0) and s_jump == pytest.approx(3.0, abs=1e-6)


def test_tail_equivalence():
    b1 = solve_maximal_boundary(problem(Affine(1.0), Constant(0.5)), SolverGrid(0.0, 10.0))
    shifted = Piecewise([2.0], [Affine(0.5), Affine(1.0, 3.0)])
    b2 = solve_maximal_boundary(problem(shifted, Constant(0.5)), SolverGrid(0.0, 10.0))
    s = np.linspace(2.0, 10.0, 801)
    assert np.max(np.abs(b1(s) - b2(s))) < 1e-6


@settings(max_examples=8, deadline=None)
@given(st.floats(0.2, 3.0))
def test_linear_family(c):
    # Id reward with constant cost c: g(s) = s - 1/(2c)
    b = solve_maximal_boundary(problem(Affine(1.0), Constant(c)), SolverGrid(0.0, 5.0, n_points=201))
    s = np.linspace(0, 5, 51)
    assert np.max(np.abs(b(s) - (s - 1.0 / (2.0 * c)))) < 1e-3
