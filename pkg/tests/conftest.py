import numpy as np
import pytest

from maxstop.diffusion import brownian_motion
from maxstop.functions import Affine, Constant
from maxstop.problem import CostSpec, RewardSpec, StoppingProblem


@pytest.fixture
def linear_problem():
    """Brownian motion, reward Id, cost 1/2: the boundary is g(s) = s - 1."""
    return StoppingProblem(brownian_motion(), RewardSpec(Affine(1.0)), CostSpec(Constant(0.5)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
