import math

import numpy as np
import pytest

from maxstop.boundary import Boundary
from maxstop.config import power_problem
from maxstop.embedding import TargetMeasure, azema_yor_boundary, embedding_pair
from maxstop.diffusion import brownian_motion
from maxstop.errors import ArgumentError, ReliabilityError, UnsupportedError
from maxstop.montecarlo import (
    SimulationConfig,
    compare_boundaries,
    counter_uniforms,
    empirical_payoff,
    ks_distance,
    simulate,
)
from maxstop.problem import SolverGrid, StoppingProblem
from maxstop.solver import payoff, solve_maximal_boundary

LINEAR_G = Boundary.linear(1.0, -1.0, 0.0, 60.0)
CFG = SimulationConfig(n_paths=20_000, dt=1e-3, seed=11)


@pytest.fixture(scope="module")
def linear_run():
    from maxstop.functions import Affine, Constant
    from maxstop.problem import CostSpec, RewardSpec

    p = StoppingProblem(brownian_motion(), RewardSpec(Affine(1.0)), CostSpec(Constant(0.5)))
    return p, simulate(p, LINEAR_G, CFG)


def within(est, se, want, k=3.0):
    return abs(est - want) < k * se


# -- counter-based streams ---------------------------------------------------------


def test_counter_uniforms_deterministic_and_open():
    ids = np.arange(1000, dtype=np.uint64)
    u = counter_uniforms(7, ids, 3, 1)
    assert np.all((u > 0) & (u < 1))
    np.testing.assert_array_equal(u, counter_uniforms(7, ids, 3, 1))
    np.testing.assert_array_equal(u[500:], counter_uniforms(7, ids[500:], 3, 1))
    assert not np.array_equal(u, counter_uniforms(8, ids, 3, 1))
    assert not np.array_equal(u, counter_uniforms(7, ids, 3, 2))
    assert abs(u.mean() - 0.5) < 0.05


# -- simulate ----------------------------------------------------------------------


def test_linear_boundary_law(linear_run):
    _, res = linear_run
    # S at the stopping time is exponential with mean 1, and E tau = E X^2 = 1
    assert within(*res.mean_se(res.s_tau), 1.0)
    assert within(*res.mean_se(res.cost), 0.5)
    assert res.censored_frac == 0.0


def test_linear_payoff_matches_formula(linear_run):
    p, res = linear_run
    est, se = empirical_payoff(res, p.reward)
    assert within(est, se, payoff(p, LINEAR_G, 0.0, 0.0))


def test_path_invariants(linear_run):
    _, res = linear_run
    assert np.all(res.s_tau >= res.x_tau)
    assert np.all(res.cost >= 0)
    assert np.all(res.s_tau >= 0)
    stopped = ~res.censored
    gap = np.abs(res.x_tau[stopped] - LINEAR_G(res.s_tau[stopped]))
    assert np.all(gap <= 4.0 * math.sqrt(CFG.dt))


def test_diagonal_boundary_stops_at_once(linear_problem):
    diag = Boundary.linear(1.0, 0.0, 0.0, 10.0)
    res = simulate(linear_problem, diag, SimulationConfig(n_paths=500, dt=1e-3))
    assert np.all(res.tau == 0) and np.all(res.cost == 0)
    est, se = empirical_payoff(res, linear_problem.reward)
    assert est == linear_problem.reward(linear_problem.start_s) and se == 0.0


def test_determinism_across_blocks_and_workers(linear_problem):
    runs = [
        simulate(linear_problem, LINEAR_G, SimulationConfig(3000, 1e-2, 5, block_size=b, workers=w))
        for b, w in ((65536, 1), (700, 1), (700, 4))
    ]
    for r in runs[1:]:
        for name in ("tau", "x_tau", "s_tau", "cost"):
            np.testing.assert_array_equal(getattr(r, name), getattr(runs[0], name))
        assert r.summary() == runs[0].summary()


def test_dt_refinement(linear_problem):
    ests = []
    for dt in (2e-3, 1e-3):
        res = simulate(linear_problem, LINEAR_G, SimulationConfig(20_000, dt, 3))
        ests.append(empirical_payoff(res, linear_problem.reward))
    (m1, s1), (m2, s2) = ests
    assert abs(m1 - m2) < 2.0 * math.hypot(s1, s2)


def test_reflected_power_case_against_formula():
    base = power_problem(2.0, 8.0)
    p = StoppingProblem(base.diffusion, base.reward, base.cost, 1.0, 1.0)
    g = solve_maximal_boundary(p, SolverGrid(0.0, 20.0))
    res = simulate(p, g, SimulationConfig(20_000, 1e-3, 2, scheme="reflected_euler"))
    assert np.all(res.x_tau >= 0)
    assert within(*empirical_payoff(res, p.reward), payoff(p, g, 1.0, 1.0))


def test_uniform_embedding_payoff_against_formula():
    mu = TargetMeasure.uniform()
    reward, cost = embedding_pair(mu)
    p = StoppingProblem(brownian_motion(), reward, cost)
    g = azema_yor_boundary(mu)
    res = simulate(p, g, SimulationConfig(20_000, 1e-3, 4, t_max=50.0))
    assert within(*empirical_payoff(res, reward), payoff(p, g, 0.0, 0.0))


def test_scheme_requirements(linear_problem):
    with pytest.raises(ArgumentError):
        simulate(linear_problem, LINEAR_G, SimulationConfig(200, scheme="reflected_euler"))
    with pytest.raises(ArgumentError):
        simulate(power_problem(2.0, 8.0), LINEAR_G, SimulationConfig(200, scheme="exact_gaussian"))


def test_censoring_is_reported(linear_problem):
    res = simulate(linear_problem, LINEAR_G, SimulationConfig(1000, 1e-3, 1, t_max=0.05))
    assert res.censored_frac > 0.5
    assert res.summary_json(linear_problem.reward)["censored_frac"] == res.censored_frac
    with pytest.raises(ReliabilityError):
        empirical_payoff(res, linear_problem.reward)


def test_config_validation():
    with pytest.raises(ArgumentError):
        SimulationConfig(n_paths=10)
    with pytest.raises(ArgumentError):
        SimulationConfig(dt=-1e-3)
    with pytest.raises(ArgumentError):
        SimulationConfig(scheme="milstein")


def test_outputs(linear_problem):
    res = simulate(linear_problem, LINEAR_G, SimulationConfig(100, 1e-3, 1))
    lines = res.to_csv().splitlines()
    assert lines[0] == "path_id,tau,x_tau,s_tau,cost,censored" and len(lines) == 101
    assert set(res.summary_json(linear_problem.reward)) == {"payoff_mean", "payoff_se", "ks", "censored_frac"}


# -- KS distance -------------------------------------------------------------------


def test_ks_iid_samples(rng):
    mu = TargetMeasure.uniform()
    assert ks_distance(rng.uniform(-1, 1, 10_000), mu) < 0.02


def test_ks_atoms():
    mu = TargetMeasure.discrete([(-1.0, 0.5), (1.0, 0.5)])
    assert ks_distance(np.full(100, 1.0), mu) == pytest.approx(0.5)
    assert ks_distance(np.repeat([-1.0, 1.0], 50), mu) == 0.0


# -- compare_boundaries --------------------------------------------------------------


def _shift(g, d):
    return Boundary(g.s, np.minimum(g.g + d, g.s))


def test_compare_optimum_is_best(linear_problem):
    cands = [LINEAR_G, _shift(LINEAR_G, -0.2), _shift(LINEAR_G, 0.2)]
    table = compare_boundaries(linear_problem, cands, SimulationConfig(10_000, 2e-3, 9))
    assert not table["flag"]
    best = max(r["payoff"] for r in table["rows"])
    top = table["rows"][0]
    assert top["payoff"] == best or best - top["payoff"] < 3 * top["stderr"]


def test_compare_single_candidate(linear_problem):
    table = compare_boundaries(linear_problem, [LINEAR_G], SimulationConfig(1000, 1e-3, 9))
    assert len(table["rows"]) == 1 and not table["flag"]


def test_compare_flags_misdesignated_optimum(linear_problem):
    wrong = _shift(LINEAR_G, -1.0)
    table = compare_boundaries(linear_problem, [wrong, LINEAR_G], SimulationConfig(2000, 1e-2, 9), names=["g-1", "g"])
    assert table["flag"] and table["rows"][1]["beats_optimum"]
