"""Optimal stopping of the maximum process of a one-dimensional diffusion.

Boundary solver, Skorokhod embedding via the Azema-Yor rule, Monte Carlo
validation and sharp maximal inequality constants.
"""

from .boundary import Boundary
from .diffusion import DiffusionSpec, brownian_motion, reflected_brownian_motion
from .errors import MaxStopError
from .problem import CostSpec, RewardSpec, SolverGrid, StoppingProblem
from .solver import payoff, solve_maximal_boundary

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "CostSpec",
    "DiffusionSpec",
    "MaxStopError",
    "RewardSpec",
    "SolverGrid",
    "StoppingProblem",
    "brownian_motion",
    "payoff",
    "reflected_brownian_motion",
    "solve_maximal_boundary",
]
