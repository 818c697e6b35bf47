"""Reduced over-collocation surrogates for parametrized nonlinear PDEs on [-1, 1]^2."""
from .fdm import Grid, InvalidArgument, Operators, build_grid
from .model import ReducedModel, load_model, save_model
from .offline import GreedyConfig, greedy_build
from .online import lift, solve_reduced
from .problems import get_problem
from .truth import TruthCache, solve_truth

__all__ = ["Grid", "InvalidArgument", "Operators", "build_grid", "ReducedModel", "load_model",
           "save_model", "GreedyConfig", "greedy_build", "lift", "solve_reduced", "get_problem",
           "TruthCache", "solve_truth"]
