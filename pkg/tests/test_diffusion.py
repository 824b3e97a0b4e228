import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from maxstop.diffusion import (
    DiffusionSpec,
    brownian_motion,
    exit_down_probability,
    exit_up_probability,
    expected_cost_to_exit,
    reflected_brownian_motion,
    scale,
    speed_density,
)
from maxstop.errors import ArgumentError, DomainError
from maxstop.functions import Affine, Constant, Expression


def ou():
    return DiffusionSpec(Affine(-1.0), Constant(1.0), x_ref=0.0)


def test_brownian_scale_and_speed():
    assert scale(brownian_motion(), 3.5) == (3.5, 1.0)
    assert speed_density(brownian_motion(), 0.0) == 2.0
    assert speed_density(brownian_motion(2.0), 1.3) == pytest.approx(0.5)


def test_scale_normalised_at_reference():
    for d in (ou(), brownian_motion(x_ref=2.0), reflected_brownian_motion()):
        L, dL = scale(d, d.x_ref)
        assert L == 0.0 and dL > 0


def test_ou_scale_against_quadrature():
    L, dL = scale(ou(), 1.0)
    oracle, _ = integrate.quad(lambda u: math.exp(u * u), 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
    assert dL == pytest.approx(math.e, rel=1e-12)
    assert L == pytest.approx(oracle, rel=1e-9)
    assert oracle == pytest.approx(1.4627, abs=1e-4)
    assert speed_density(ou(), 1.0) == pytest.approx(2.0 / math.e, rel=1e-12)


def test_exit_probabilities():
    assert exit_up_probability(brownian_motion(), 0.0, 1.0, 0.5) == pytest.approx(0.5)
    assert exit_up_probability(ou(), -1.0, 1.0, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert exit_up_probability(brownian_motion(), 0.0, 1.0, 1e-12) < 1e-11


def test_expected_cost_green_function():
    bm = brownian_motion()
    assert expected_cost_to_exit(bm, Constant(1.0), 0.0, 1.0, 0.5) == pytest.approx(0.25, rel=1e-10)
    assert expected_cost_to_exit(bm, Constant(1.0), 0.0, 2.0, 0.5) == pytest.approx(0.75, rel=1e-10)
    assert expected_cost_to_exit(ou(), Constant(0.0), -1.0, 2.0, 0.3) == 0.0


def test_exit_time_monte_carlo(rng):
    # exact Gaussian steps, killed on leaving [0, 1]; discrete monitoring
    # overestimates the exit time by about 0.5826*sqrt(dt) per side
    n, dt = 20000, 1e-4
    x = np.full(n, 0.5)
    t = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        x[idx] += math.sqrt(dt) * rng.standard_normal(idx.size)
        t[idx] += dt
        alive[idx] = (x[idx] > 0.0) & (x[idx] < 1.0)
    corr = 0.5826 * math.sqrt(dt)
    green = (0.5 + corr) * (0.5 + corr)
    se = t.std(ddof=1) / math.sqrt(n)
    assert abs(t.mean() - green) < 3 * se


def test_invalid_inputs():
    with pytest.raises(DomainError):
        DiffusionSpec(Constant(0.0), Constant(1.0), state_lo=1.0, state_hi=0.0)
    with pytest.raises(ArgumentError):
        exit_up_probability(brownian_motion(), 1.0, 0.0, 0.5)
    with pytest.raises(ArgumentError):
        expected_cost_to_exit(reflected_brownian_motion(), 1.0, -1.0, 1.0, 0.0)


coef = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(coef, st.floats(0.5, 2.0), st.floats(-2.0, 2.0))
def test_scale_increasing_speed_positive(mu, sigma, x):
    d = DiffusionSpec(Constant(mu), Constant(sigma), x_ref=0.0)
    xs = np.linspace(-3, 3, 13)
    Ls = [scale(d, v)[0] for v in xs]
    assert np.all(np.diff(Ls) > 0)
    assert scale(d, x)[1] > 0 and speed_density(d, x) > 0


@settings(max_examples=30, deadline=None)
@given(coef, st.floats(-0.9, 0.9))
def test_exit_probabilities_complement(mu, x):
    d = DiffusionSpec(Expression(f"{mu!r} * x"), Constant(1.0), x_ref=0.0)
    up = exit_up_probability(d, -1.0, 1.0, x)
    assert up + exit_down_probability(d, -1.0, 1.0, x) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(-0.9, 0.9))
def test_expected_cost_linear_in_cost(c1, c2, x):
    d = ou()
    f = lambda c: expected_cost_to_exit(d, c, -1.0, 1.0, x)
    both = f(Expression(f"{c1!r} + {c2!r} * x * x"))
    assert both == pytest.approx(f(Constant(c1)) + f(Expression(f"{c2!r} * x * x")), rel=1e-8, abs=1e-12)
