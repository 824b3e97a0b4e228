import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from maxstop.diffusion import brownian_motion
from maxstop.embedding import (
    TargetMeasure,
    azema_yor_boundary,
    barycentre,
    embedding_pair,
    hazard_cost,
    inverse_barycentre,
    loglogl_check,
    meilijson_reward,
    meilijson_value,
    validate_pair,
)
from maxstop.errors import ArgumentError, InconsistentMeasureError, RangeError, UnsupportedError
from maxstop.functions import Scaled
from maxstop.problem import CostSpec, SolverGrid, StoppingProblem
from maxstop.solver import solve_maximal_boundary

TWO_ATOMS = TargetMeasure.discrete([(-1.0, 0.5), (1.0, 0.5)])
EXPO = TargetMeasure.exponential(1.0, -1.0)
UNIF = TargetMeasure.uniform()
MIXED = TargetMeasure(UNIF.component, atoms=((0.0, 0.2),))


# -- barycentre ----------------------------------------------------------------


def test_barycentre_examples():
    assert barycentre(TWO_ATOMS, 0.0) == pytest.approx(1.0)
    assert barycentre(EXPO, 0.7) == pytest.approx(1.7, rel=1e-10)
    assert barycentre(UNIF, -1.0) == 0.0
    assert barycentre(UNIF, -5.0) == 0.0


def test_barycentre_against_quadrature():
    x = 0.3
    num, _ = integrate.quad(lambda z: z * 0.5, x, 1.0)
    assert barycentre(UNIF, x) == pytest.approx(num / 0.35, rel=1e-12)


def test_inverse_barycentre_examples():
    assert inverse_barycentre(EXPO, 2.0) == pytest.approx(1.0, rel=1e-10)
    assert inverse_barycentre(TWO_ATOMS, 0.5) == pytest.approx(-1.0)
    assert inverse_barycentre(TWO_ATOMS, 0.0) == -1.0
    assert inverse_barycentre(UNIF, 0.0) == -1.0
    with pytest.raises(RangeError):
        inverse_barycentre(UNIF, 1.5)


@pytest.mark.parametrize("mu", [UNIF, EXPO, TargetMeasure.gaussian(), MIXED], ids=["unif", "expo", "gauss", "mixed"])
def test_psi_monotone_and_above_identity(mu):
    x = np.linspace(mu.quantile_lower(), min(mu.quantile_upper(), 6.0), 401)[:-1]
    psi = mu.psi(x)
    assert np.all(np.diff(psi) >= -1e-12)
    assert np.all(psi >= x - 1e-12)


def test_psi_reaches_upper_end():
    assert UNIF.psi(1.0 - 1e-9) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.99, 0.99))
def test_round_trip_uniform(x):
    assert inverse_barycentre(UNIF, barycentre(UNIF, x)) == pytest.approx(x, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.99, 5.0))
def test_round_trip_exponential(x):
    assert inverse_barycentre(EXPO, barycentre(EXPO, x)) == pytest.approx(x, abs=1e-8)


def test_atom_gap_formula():
    (lo, hi), = MIXED.atom_gaps()
    j, mass = 0.0, 0.2
    assert hi - lo == pytest.approx(mass * (float(MIXED.psi(j)) - j) / float(MIXED.tail_open(j)), abs=1e-8)


# -- hazard cost and pairs --------------------------------------------------------


def test_hazard_cost_examples():
    for x in (-1.0, 0.0, 3.0, 10.0):
        assert hazard_cost(EXPO, x) == pytest.approx(0.5, rel=1e-10)
    assert hazard_cost(UNIF, 0.0) == pytest.approx(0.5)
    assert hazard_cost(UNIF, 0.5) == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        hazard_cost(MIXED, 0.0)
    with pytest.raises(RangeError):
        hazard_cost(UNIF, 1.5)


def test_embedding_pair_exponential():
    reward, cost = embedding_pair(EXPO)
    s = np.array([0.0, 0.5, 3.0, 20.0])
    np.testing.assert_allclose(reward(s), s, atol=1e-12)
    np.testing.assert_allclose(cost(np.array([-1.0, 0.0, 7.0])), 0.5, rtol=1e-10)
    assert cost(-1.5) == math.inf


def test_embedding_pair_uniform():
    reward, cost = embedding_pair(UNIF)
    np.testing.assert_allclose(reward(np.array([0.0, 0.3, 1.0, 2.0])), [0.0, 0.3, 1.0, 1.0])
    x = np.array([-0.5, 0.0, 0.9])
    np.testing.assert_allclose(cost(x), 1.0 / (2.0 * (1.0 - x)), rtol=1e-12)
    assert cost(1.5) == math.inf and cost(-1.5) == math.inf


def test_embedding_pair_unsupported_for_atoms_only():
    with pytest.raises(UnsupportedError):
        embedding_pair(TWO_ATOMS)


@pytest.mark.parametrize("mu", [UNIF, EXPO, MIXED], ids=["unif", "expo", "mixed"])
def test_validate_pair_passes(mu):
    reward, cost = embedding_pair(mu)
    report = validate_pair(mu, reward, cost)
    assert report["cond_pair_max_violation"] < 1e-8
    assert set(report) >= {"cond_pair_max_violation", "cond_pair_phi_integral", "loglogl"}


def test_validate_pair_detects_doubled_cost():
    reward, cost = embedding_pair(EXPO)
    doubled = CostSpec(Scaled(cost.value, 2.0), finite_interval=cost.finite_interval)
    assert validate_pair(EXPO, reward, doubled)["cond_pair_max_violation"] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(
    "mu, window",
    [
        (UNIF, (0.0, 0.999)),
        (EXPO, (0.0, 10.0)),
        (TargetMeasure.gaussian(lo=-2.0, hi=2.0), (0.0, 1.9)),
        (MIXED, (0.0, 0.99)),
    ],
    ids=["unif", "expo", "gauss", "mixed"],
)
def test_solver_recovers_inverse_barycentre(mu, window):
    reward, cost = embedding_pair(mu)
    g = solve_maximal_boundary(StoppingProblem(brownian_motion(), reward, cost), SolverGrid(*window))
    s = np.linspace(*window, 500)
    assert np.max(np.abs(g(s) - mu.psi_inverse(s))) < 1e-3


def test_azema_yor_boundary_matches_inverse():
    b = azema_yor_boundary(EXPO)
    s = np.linspace(0.0, 8.0, 81)
    np.testing.assert_allclose(b(s), s - 1.0, atol=1e-8)


# -- Meilijson route -------------------------------------------------------------


def test_meilijson_exponential_recovers_identity():
    H = meilijson_value(EXPO, 0.5)
    # H'(x) = 2c (x - Psi^{-1}(x)) = 1 where Psi^{-1}(x) = x - 1, i.e. x >= 0
    inside = (H.x >= 0.0) & (H.x < 8.0)
    np.testing.assert_allclose(H.dH[inside], 1.0, atol=1e-6)
    reward = meilijson_reward(EXPO, 0.5)
    x = np.array([0.0, 1.0, 5.0])
    np.testing.assert_allclose(reward(x) - reward(0.0), x, atol=1e-6)


def test_meilijson_two_atoms_is_flat():
    H = meilijson_value(TWO_ATOMS, 0.5)
    x = np.linspace(-0.9, 0.9, 7)
    np.testing.assert_allclose(H.derivative(x), x + 1.0, atol=1e-9)
    reward = meilijson_reward(TWO_ATOMS, 0.5)
    np.testing.assert_allclose(reward(np.array([-1.0, 0.0, 1.0, 3.0])), 0.0, atol=1e-9)


def test_meilijson_point_mass():
    reward = meilijson_reward(TargetMeasure.discrete([(0.0, 1.0)]), 0.5)
    np.testing.assert_allclose(reward(np.array([-1.0, 0.0, 2.0])), reward(0.0))


# -- moment condition ------------------------------------------------------------


def test_loglogl():
    assert loglogl_check(UNIF)
    assert loglogl_check(EXPO)
    # density proportional to y^-2 (log y)^-2 on [e, inf), completed to mean
    # zero by an atom; int_e^inf y * y^-2 (log y)^-2 dy = 1 exactly
    def f(y):
        y = np.asarray(y, float)
        with np.errstate(over="ignore"):
            return 1.0 / (y * y * np.log(y) ** 2)

    z = integrate.quad(f, math.e, np.inf)[0]
    m = 1.0 / z
    w = 0.5
    heavy = TargetMeasure.custom(f, math.e, math.inf, atoms=((-w * m / (1 - w), 1 - w),))
    assert abs(heavy.mean()) < 1e-8
    assert not loglogl_check(heavy)


# -- construction ------------------------------------------------------------------


def test_recentering_policy():
    shifted = TargetMeasure.uniform(0.0, 2.0)
    assert shifted.shift == pytest.approx(1.0)  # mean removed
    assert shifted.a == pytest.approx(-1.0) and shifted.b == pytest.approx(1.0)
    assert shifted.mean() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InconsistentMeasureError):
        TargetMeasure.uniform(0.0, 2.0, recenter=False)


def test_from_config():
    mu = TargetMeasure.from_config(
        {"density": {"kind": "uniform", "params": {"lo": -1, "hi": 1}}, "atoms": [{"at": 0.0, "mass": 0.2}]}
    )
    assert mu.atom_at(0.0) == pytest.approx(0.2)
    assert mu.cdf(1.0) == pytest.approx(1.0)
    pp = TargetMeasure.from_config(
        {"density": {"kind": "piecewise_polynomial", "params": {"breaks": [-1, 0, 1], "coeffs": [[1, 1], [1, -1]]}}}
    )
    assert pp.cdf(0.0) == pytest.approx(0.5, abs=1e-12)
