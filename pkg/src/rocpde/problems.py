"""The three benchmark parametrized nonlinear PDEs on [-1, 1]^2.

Each problem is written pointwise in terms of the nodal value ``u``, the
discrete Laplacian ``lap`` and (for convection-diffusion) the discrete
gradient, so the same formulas serve the full-grid truth solver and the
reduced solver that only sees a handful of collocation nodes.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fdm import Grid, InvalidArgument, Operators

SINH_CLAMP = 700.0
DIAGNOSTICS: Counter = Counter()


class DomainError(ValueError):
    pass


def progression(a: float, h: float, b: float) -> np.ndarray:
    """The ``a:h:b`` equidistant points, endpoints included when they land on the lattice."""
    n = int(np.floor((b - a) / h + 1e-9)) + 1
    return a + h * np.arange(n)


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    role: str
    axes: tuple[np.ndarray, np.ndarray]

    @property
    def mu(self) -> np.ndarray:
        m1, m2 = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return np.column_stack([m1.ravel(), m2.ravel()])

    def __len__(self) -> int:
        return len(self.axes[0]) * len(self.axes[1])

    def coarsen(self, step: int) -> "ParameterGrid":
        return ParameterGrid(self.role, (self.axes[0][::step], self.axes[1][::step]))


@dataclass(frozen=True)
class Problem:
    name: str = ""
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))
    bc: dict = field(default_factory=dict)
    iteration: str = "newton"
    uses_gradient: bool = False

    def check(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape != (2,) or not np.all(np.isfinite(mu)):
            raise InvalidArgument(f"parameter must be a finite pair, got {mu!r}")
        for v, (lo, hi) in zip(mu, self.domain):
            if v < lo - 1e-12 or v > hi + 1e-12:
                raise DomainError(f"{self.name}: parameter {tuple(map(float, mu))} outside {self.domain}")
        return mu

    def forcing(self, grid: Grid) -> np.ndarray:
        raise NotImplementedError

    def boundary_value(self, x1, x2, mu) -> np.ndarray:
        """Dirichlet datum at boundary points."""
        return np.zeros(np.shape(x1))

    def dirichlet_values(self, grid: Grid, mu) -> np.ndarray:
        out = np.zeros(grid.n_nodes)
        d = grid.dirichlet
        out[d] = self.boundary_value(grid.x1[d], grid.x2[d], mu)
        return out

    def pointwise_residual(self, u, lap, gx, gy, f, mu) -> np.ndarray:
        raise NotImplementedError

    def linear_coefficients(self, u, gx, gy, f, mu):
        """``(alpha, d, b)`` with next iterate solving ``alpha*lap(v) + d*v = b``."""
        raise NotImplementedError

    def parameter_grids(self) -> dict[str, ParameterGrid]:
        raise NotImplementedError


@dataclass(frozen=True)
class PoissonBoltzmann(Problem):
    """``D lap(u) = sinh(u) + g`` with ``mu = (sqrt(D), V)``; u=0 at x1=-1, u=V at x1=1."""

    name: str = "pbe"
    domain: tuple = ((0.08, 0.4), (0.0, 5.0))
    bc: dict = field(default_factory=lambda: {
        "x1-": "dirichlet", "x1+": "dirichlet", "x2-": "neumann", "x2+": "neumann"})
    iteration: str = "newton"
    source_scale: float = 1.0

    def forcing(self, grid):
        r2 = (grid.x1 - 0.2) ** 2 + (grid.x2 + 0.1) ** 2
        return self.source_scale * np.exp(-50.0 * r2)

    def boundary_value(self, x1, x2, mu):
        return np.where(np.asarray(x1) > 0.5, float(mu[1]), 0.0)

    def pointwise_residual(self, u, lap, gx, gy, f, mu):
        return mu[0] ** 2 * lap - np.sinh(_clamp(u)) - f

    def linear_coefficients(self, u, gx, gy, f, mu):
        uc = _clamp(u)
        ch = np.cosh(uc)
        return mu[0] ** 2, -ch, f + np.sinh(uc) - ch * u

    def parameter_grids(self):
        return {
            "train": ParameterGrid("train", (progression(0.08, 0.02, 0.4), progression(0, 0.25, 5))),
            "test": ParameterGrid("test", (progression(0.085, 0.01, 0.395), progression(0.4, 0.5, 4.4))),
            "test2": ParameterGrid("test2", (progression(0.09, 0.01, 0.31), progression(0.7, 0.2, 1.5))),
        }


def _source(grid):
    return 100.0 * np.sin(2 * np.pi * grid.x1) * np.cos(2 * np.pi * grid.x2)


@dataclass(frozen=True)
class CubicReactionDiffusion(Problem):
    """``-mu2 lap(u) + u (u - mu1)^2 = f`` with homogeneous Dirichlet data."""

    name: str = "cubic"
    domain: tuple = ((0.2, 5.0), (0.2, 2.0))
    iteration: str = "newton"

    def forcing(self, grid):
        return _source(grid)

    def pointwise_residual(self, u, lap, gx, gy, f, mu):
        return -mu[1] * lap + u * (u - mu[0]) ** 2 - f

    def linear_coefficients(self, u, gx, gy, f, mu):
        g = u * (u - mu[0]) ** 2
        dg = (u - mu[0]) ** 2 + 2 * u * (u - mu[0])
        return -mu[1], dg, dg * u - g + f

    def parameter_grids(self):
        h1, h2 = (5 - 0.2) / 128, (2 - 0.2) / 64
        return {
            "train": ParameterGrid("train", (progression(0.2, 4 * h1, 5), progression(0.2, 4 * h2, 2))),
            "test": ParameterGrid("test", (
                progression(0.2 + 2 * h1, 4 * h1, 5 - 2 * h1),
                progression(0.2 + 2 * h2, 4 * h2, 2 - 2 * h2))),
            "test2": ParameterGrid("test2", (
                progression(0.2 + 3 * h1, 4 * h1, 5 - 3 * h1),
                progression(0.2 + 3 * h2, 2 * h2, 2 - 3 * h2))),
        }


@dataclass(frozen=True)
class ConvectionDiffusion(Problem):
    """``-mu2 lap(u) + u (|grad u| + mu1)^1.5 = f``, solved by fixed-point iteration."""

    name: str = "convdiff"
    domain: tuple = ((1.0, 33.0), (1.0, 5.0))
    iteration: str = "fixed_point"
    uses_gradient: bool = True

    def forcing(self, grid):
        return _source(grid)

    def pointwise_residual(self, u, lap, gx, gy, f, mu):
        return -mu[1] * lap + u * (np.hypot(gx, gy) + mu[0]) ** 1.5 - f

    def linear_coefficients(self, u, gx, gy, f, mu):
        return -mu[1], (np.hypot(gx, gy) + mu[0]) ** 1.5, f

    def parameter_grids(self):
        h1, h2 = 32 / 256, 4 / 32
        return {
            "train": ParameterGrid("train", (progression(1, 3 * h1, 33), progression(1, 3 * h2, 5))),
            "test": ParameterGrid("test", (
                progression(1 + 2 * h1, 3 * h1, 33 - 2 * h1),
                progression(1 + 2 * h2, 3 * h2, 5 - 2 * h2))),
            "test2": ParameterGrid("test2", (progression(1, 1, 33), progression(1, 0.25, 5))),
        }


PROBLEMS = {"pbe": PoissonBoltzmann, "cubic": CubicReactionDiffusion, "convdiff": ConvectionDiffusion}


def get_problem(name: str, **kwargs) -> Problem:
    try:
        return PROBLEMS[name](**kwargs)
    except KeyError:
        raise InvalidArgument(f"unknown problem {name!r}; expected one of {sorted(PROBLEMS)}") from None


def make_parameter_grids(problem: Problem) -> dict[str, ParameterGrid]:
    return problem.parameter_grids()


def _clamp(u):
    hit = np.abs(u) > SINH_CLAMP
    if hit.any():
        DIAGNOSTICS["sinh_clamp"] += int(hit.sum())
        return np.clip(u, -SINH_CLAMP, SINH_CLAMP)
    return u


def _check_field(u, grid):
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_nodes,):
        raise InvalidArgument(f"field has shape {u.shape}, grid needs ({grid.n_nodes},)")
    if not np.all(np.isfinite(u)):
        raise InvalidArgument("field has non-finite entries")
    return u


def _gradients(problem, ops, u):
    if problem.uses_gradient:
        return ops.dx1 @ u, ops.dx2 @ u
    return None, None


def residual(problem: Problem, ops: Operators, u, mu, f=None) -> np.ndarray:
    """Nodal residual P(u; mu) - f; Dirichlet rows hold u minus the boundary value."""
    grid = ops.grid
    mu = problem.check(mu)
    u = _check_field(u, grid)
    f = problem.forcing(grid) if f is None else f
    gx, gy = _gradients(problem, ops, u)
    r = problem.pointwise_residual(u, ops.laplacian @ u, gx, gy, f, mu)
    dmask = grid.dirichlet
    r[dmask] = u[dmask] - problem.dirichlet_values(grid, mu)[dmask]
    return r


def linearized_step_operator(problem: Problem, ops: Operators, u_prev, mu, f=None):
    """Sparse ``(A, b)`` whose solution is the next Newton or fixed-point iterate."""
    grid = ops.grid
    mu = problem.check(mu)
    u_prev = _check_field(u_prev, grid)
    f = problem.forcing(grid) if f is None else f
    gx, gy = _gradients(problem, ops, u_prev)
    alpha, d, b = problem.linear_coefficients(u_prev, gx, gy, f, mu)
    dmask = grid.dirichlet
    keep = (~dmask).astype(float)
    A = sp.diags(keep) @ (alpha * ops.laplacian + sp.diags(d)) + sp.diags(1.0 - keep)
    b = np.array(b, dtype=float)
    b[dmask] = problem.dirichlet_values(grid, mu)[dmask]
    return A.tocsc(), b
