"""Full-grid nonlinear solves (the "truth" snapshots) and the FDM accuracy profile."""
from __future__ import annotations

import hashlib
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .fdm import InvalidArgument, Operators, build_grid
from .problems import Problem, linearized_step_operator, residual

log = logging.getLogger(__name__)

TRUTH_TOL = 1e-10
TRUTH_MAX_ITER = 100
CACHE_REVISION = 2  # bump when the solver's output for a given key changes


class ConvergenceFailure(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class LinearSolverFailure(RuntimeError):
    pass


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    final_update_norm: float
    final_residual_norm: float
    wall_time: float
    converged: bool
    initial_guess: str = "zero interior + Dirichlet lift"


def solve_truth(problem: Problem, ops: Operators, mu, tol: float = TRUTH_TOL,
                max_iter: int = TRUTH_MAX_ITER) -> SolveReport:
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    t0 = time.perf_counter()
    mu = problem.check(mu)
    grid = ops.grid
    f = problem.forcing(grid)
    u = problem.dirichlet_values(grid, mu)
    free = ~grid.dirichlet
    update = np.inf
    res_prev = np.inf
    it = 0
    while it < max_iter:
        A, b = linearized_step_operator(problem, ops, u, mu, f)
        # Dirichlet unknowns are known; eliminating them keeps the pattern symmetric
        A = A.tocsr()[free]
        rhs = b[free] - A[:, ~free] @ b[~free]
        u_new = b.copy()
        with np.errstate(all="ignore"):
            u_new[free] = spla.spsolve(A[:, free].tocsc(), rhs, permc_spec="MMD_AT_PLUS_A")
        if not np.all(np.isfinite(u_new)):
            raise LinearSolverFailure(f"{problem.name} at mu={tuple(map(float, mu))}: singular or diverged linear solve at iteration {it + 1}")
        update = float(np.max(np.abs(u_new - u)))
        u = u_new
        it += 1
        if update <= tol:
            if problem.iteration != "fixed_point":
                break
            # a contraction's last step understates its distance to the fixed point:
            # go on until the residual stops halving (its rounding floor)
            res = float(np.max(np.abs(residual(problem, ops, u, mu, f))))
            if res > 0.5 * res_prev:
                break
            res_prev = res
    res = float(np.max(np.abs(residual(problem, ops, u, mu, f))))
    report = SolveReport(u, it, update, res, time.perf_counter() - t0, update <= tol)
    if not report.converged:
        raise ConvergenceFailure(
            f"{problem.name} at mu={tuple(map(float, mu))}: no convergence in {max_iter} iterations (update {update:.3e})", report)
    return report


def error_profile_Ex(problem: Problem, mu, K_list, K_ref: int, tol: float = TRUTH_TOL,
                     reference: np.ndarray | None = None):
    """Per-x1-column max error of coarse solutions against the K_ref solution.

    Returns ``{K: (x1_coordinates, E_x)}``.
    """
    for K in K_list:
        if K_ref % K:
            raise InvalidArgument(f"K={K} does not divide K_ref={K_ref}")
    if reference is None:
        ref_ops = Operators.build(build_grid(K_ref, problem.bc))
        reference = solve_truth(problem, ref_ops, mu, tol).solution
    ref = reference.reshape(K_ref + 1, K_ref + 1)
    out = {}
    for K in K_list:
        if K == K_ref:
            u = reference
        else:
            u = solve_truth(problem, Operators.build(build_grid(K, problem.bc)), mu, tol).solution
        r = K_ref // K
        diff = np.abs(u.reshape(K + 1, K + 1) - ref[::r, ::r])
        out[K] = (np.linspace(-1, 1, K + 1), diff.max(axis=1))
    return out


class TruthCache:
    """On-disk store of truth solutions keyed by (problem, K, mu, tol).

    The directory defaults to ``$ROCPDE_CACHE`` when set; ``env=False``
    ignores it, and with no root the cache lives in memory only.
    """

    def __init__(self, root: str | os.PathLike | None = None, *, env: bool = True):
        root = root or (os.environ.get("ROCPDE_CACHE") if env else None)
        self.root = Path(root) if root else None
        self._mem: dict[str, SolveReport] = {}

    @staticmethod
    def key(problem: Problem, K: int, mu, tol: float) -> str:
        mu = np.asarray(mu, dtype=float)
        tag = f"r{CACHE_REVISION}|{problem!r}|{K}|{mu[0].hex()}|{mu[1].hex()}|{float(tol).hex()}"
        return hashlib.sha1(tag.encode()).hexdigest()

    def get(self, problem: Problem, ops: Operators, mu, tol: float = TRUTH_TOL) -> SolveReport:
        k = self.key(problem, ops.grid.K, mu, tol)
        if k in self._mem:
            return self._mem[k]
        path = self.root / f"{problem.name}_K{ops.grid.K}_{k}.npz" if self.root else None
        if path is not None and path.exists():
            with np.load(path) as z:
                rep = SolveReport(z["u"], int(z["iterations"]), float(z["update"]),
                                  float(z["residual"]), float(z["wall_time"]), True)
        else:
            rep = solve_truth(problem, ops, mu, tol)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp.npz")
                np.savez(tmp, u=rep.solution, iterations=rep.iterations, update=rep.final_update_norm,
                         residual=rep.final_residual_norm, wall_time=rep.wall_time)
                os.replace(tmp, path)
        self._mem[k] = rep
        return rep

    def solutions(self, problem: Problem, ops: Operators, mus, tol: float = TRUTH_TOL,
                  workers: int = 1) -> np.ndarray:
        """Truth solutions for each row of ``mus`` as columns of an array (input order kept)."""
        mus = np.asarray(mus, dtype=float)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                reps = list(pool.map(lambda mu: self.get(problem, ops, mu, tol), mus))
            return np.column_stack([r.solution for r in reps])
        cols = []
        for i, mu in enumerate(mus):
            cols.append(self.get(problem, ops, mu, tol).solution)
            if (i + 1) % 50 == 0:
                log.info("truth cache %s K=%d: %d/%d", problem.name, ops.grid.K, i + 1, len(mus))
        return np.column_stack(cols)
