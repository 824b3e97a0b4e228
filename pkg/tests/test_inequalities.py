import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from maxstop.errors import ArgumentError, DomainError, NoInteriorMaxError
from maxstop.inequalities import (
    alpha_root,
    alpha_threshold,
    doob_constant,
    dubins_schwarz_check,
    fixed_time_check,
    gamma_fn,
    gamma_star_1q,
)
from maxstop.montecarlo import SimulationConfig


def test_alpha_root_examples():
    assert alpha_root(2.0, 4.0) == 0.5
    assert alpha_root(2.0, 8.0) == pytest.approx((1 + math.sqrt(0.5)) / 2, abs=1e-15)
    with pytest.raises(NoInteriorMaxError):
        alpha_root(2.0, 3.0)
    with pytest.raises(DomainError):
        alpha_root(1.0, 3.0)


def test_threshold_value():
    assert alpha_threshold(2.0) == 4.0
    assert alpha_threshold(3.0) == pytest.approx(81 / 8)


@settings(max_examples=40)
@given(st.floats(1.2, 6.0), st.floats(1.01, 50.0))
def test_alpha_root_solves_equation(p, factor):
    c = alpha_threshold(p) * factor
    a = alpha_root(p, c)
    assert (p - 1) / p <= a <= 1
    assert a ** (p - 1) - a**p == pytest.approx(p / (2 * c), rel=1e-9)


@settings(max_examples=30)
@given(st.floats(1.2, 6.0), st.floats(1.01, 20.0), st.floats(1.01, 3.0))
def test_alpha_root_increasing_in_c(p, f1, ratio):
    c = alpha_threshold(p) * f1
    assert alpha_root(p, c * ratio) > alpha_root(p, c)


def test_doob_constant():
    assert doob_constant(2.0) == 4.0
    assert doob_constant(1.5) == pytest.approx(3**1.5)
    assert abs(doob_constant(100.0) / math.e - 1) < 0.02
    with pytest.raises(DomainError):
        doob_constant(1.0)


@settings(max_examples=40)
@given(st.floats(1.05, 50.0), st.floats(1.01, 2.0))
def test_doob_decreasing(p, ratio):
    assert doob_constant(p * ratio) < doob_constant(p)


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 2.5, 3.0, 7.3, 20.0, 101.0])
def test_gamma_against_scipy(x):
    assert gamma_fn(x) == pytest.approx(special.gamma(x), rel=1e-13)


def test_gamma_star():
    assert abs(gamma_star_1q(1.0) - math.sqrt(2.0)) < 1e-12
    want = (2 * 3 / 2) ** (1 / 3) * special.gamma(2.5) ** (2 / 3)
    assert gamma_star_1q(2.0) == pytest.approx(want, rel=1e-13)
    assert gamma_star_1q(2.0) == pytest.approx(1.7437, abs=1e-4)
    assert math.isfinite(gamma_star_1q(0.1))
    with pytest.raises(DomainError):
        gamma_star_1q(0.0)


def test_dubins_schwarz_scaled():
    cfg = SimulationConfig(n_paths=10_000, dt=1e-3, seed=21)
    rep = dubins_schwarz_check(2.0, cfg)
    assert abs(rep.mc_lhs - 2.0) < 3 * rep.extra["lhs_se"]
    assert abs(rep.mc_rhs - 2.0) < 3 * rep.extra["rhs_se"]
    assert rep.to_dict()["name"] == "dubins_schwarz"


def test_fixed_time_gap():
    rep = fixed_time_check(1.0, SimulationConfig(n_paths=10_000, dt=1e-3, seed=5))
    assert abs(rep.mc_lhs - math.sqrt(2 / math.pi)) < 3 * rep.extra["lhs_se"] + 0.6 * math.sqrt(1e-3)
    assert rep.mc_rhs - rep.mc_lhs > 3 * rep.extra["gap_se"]


def test_check_arguments():
    with pytest.raises(ArgumentError):
        dubins_schwarz_check(0.0, SimulationConfig())
    with pytest.raises(ArgumentError):
        fixed_time_check(-1.0, SimulationConfig())
