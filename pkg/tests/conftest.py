import numpy as np
import pytest

from rocpde.fdm import Operators, build_grid
from rocpde.offline import GreedyConfig, greedy_build
from rocpde.problems import get_problem
from rocpde.truth import TruthCache


def small_setup(name, K=24):
    p = get_problem(name)
    return p, Operators.build(build_grid(K, p.bc))


@pytest.fixture(scope="session")
def small_cache(tmp_path_factory):
    return TruthCache(tmp_path_factory.mktemp("truth"))


@pytest.fixture(scope="session", params=["pbe", "cubic", "convdiff"])
def small_model(request, small_cache):
    """A 6-basis greedy model on a 24-interval grid for each problem."""
    p, ops = small_setup(request.param)
    train = p.parameter_grids()["train"].coarsen(4).mu
    model, trace = greedy_build(p, ops, train, GreedyConfig(N_max=6, seed=3), small_cache)
    return p, ops, train, model, trace


@pytest.fixture(scope="session")
def pbe_model(small_cache):
    p, ops = small_setup("pbe")
    train = p.parameter_grids()["train"].coarsen(4).mu
    model, trace = greedy_build(p, ops, train, GreedyConfig(N_max=6, seed=3), small_cache)
    return p, ops, train, model, trace


def interior_mu(problem, rng):
    (a, b), (c, d) = problem.domain
    return np.array([rng.uniform(a, b), rng.uniform(c, d)])


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
