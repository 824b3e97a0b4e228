import numpy as np
import pytest

from maxstop.diffusion import brownian_motion
from maxstop.errors import ArgumentError, UnsupportedError
from maxstop.functions import Affine, Constant, Expression
from maxstop.meilijson import ValueFunctionH, boundary_from_H, meilijson_H
from maxstop.problem import CostSpec, RewardSpec, SolverGrid, StoppingProblem
from maxstop.solver import solve_maximal_boundary

KINKED = RewardSpec(Expression("min(x, 0)"))
GRID = SolverGrid(-5.0, 2.0)


def test_constant_reward_gives_constant_H():
    H = meilijson_H(RewardSpec(Constant(3.0)), 0.5, 0.0, GRID)
    np.testing.assert_allclose(H.H, 3.0)
    b = boundary_from_H(H)
    np.testing.assert_allclose(b.g, b.s)  # stop at once


def test_kinked_reward_residual_and_majorant():
    H = meilijson_H(KINKED, 0.5, 0.0, GRID)
    assert H(0.0) == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(H.residual(KINKED))) < 1e-6
    neg = H.x < 0
    assert np.all(H.H[neg] >= KINKED(H.x[neg]) - 1e-12)


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_residual_at_scaled_costs(c):
    H = meilijson_H(KINKED, c, 0.0, GRID)
    assert np.max(np.abs(H.residual(KINKED))) < 1e-6


def test_unit_slope_regime_gives_shifted_diagonal():
    x = np.linspace(0.0, 5.0, 11)
    H = ValueFunctionH(x, x.copy(), np.ones_like(x), 0.5, 5.0)
    np.testing.assert_allclose(boundary_from_H(H).g, x - 1.0)


def test_dual_route_agreement():
    H = meilijson_H(KINKED, 0.5, 0.0, GRID)
    g_h = boundary_from_H(H)
    p = StoppingProblem(brownian_motion(), KINKED, CostSpec(Constant(0.5)))
    g_ode = solve_maximal_boundary(p, GRID)
    s = GRID.points()
    assert np.max(np.abs(g_h(s) - g_ode(s))) < 1e-3


def test_input_checks():
    with pytest.raises(ArgumentError):
        meilijson_H(KINKED, 0.0, 0.0, GRID)
    with pytest.raises(UnsupportedError):
        meilijson_H(RewardSpec(Affine(1.0)), 0.5, 0.0, GRID)
