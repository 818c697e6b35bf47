"""Online stage: least-squares Newton / fixed-point iteration on the collocation set.

Nothing here touches a full-grid vector except :func:`lift`.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .fdm import InvalidArgument
from .model import ReducedModel
from .truth import ConvergenceFailure

REDUCED_TOL = 1e-10
REDUCED_MAX_ITER = 100


class RankFailure(np.linalg.LinAlgError):
    pass


@dataclass
class ReducedSolveReport:
    c: np.ndarray
    iterations: int
    residual_norm: float  # max |residual| over the collocation rows
    wall_time: float
    converged: bool = True


def _restricted(model: ReducedModel, n: int, square: bool):
    rows = model.rows(n, square)
    return (model.WM[rows, :n], model.LM[rows, :n], model.GxM[rows, :n], model.GyM[rows, :n],
            model.fM[rows], model.dM[rows].astype(bool), model.pM[rows])


def _boundary(model, dmask, pts, mu):
    return model.problem.boundary_value(pts[dmask, 0], pts[dmask, 1], mu)


def lstsq_qr(A: np.ndarray, b: np.ndarray, rcond: float = 1e-13) -> np.ndarray:
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= rcond * max(diag.max(), 1e-300):
        raise RankFailure("reduced Jacobian is rank deficient")
    return solve_triangular(r, q.T @ b)


def reduced_residual(model: ReducedModel, n: int, mu, c, square: bool = False) -> np.ndarray:
    """PDE residual of ``W c`` at the collocation rows used with n bases."""
    mu = np.asarray(mu, dtype=float)
    WM, LM, GxM, GyM, fM, dmask, pts = _restricted(model, n, square)
    gx, gy = (GxM @ c, GyM @ c) if model.problem.uses_gradient else (None, None)
    u = WM @ c
    r = model.problem.pointwise_residual(u, LM @ c, gx, gy, fM, mu)
    if dmask.any():
        r[dmask] = u[dmask] - _boundary(model, dmask, pts, mu)
    return r


def solve_reduced(model: ReducedModel, n: int, mu, tol: float = REDUCED_TOL,
                  max_iter: int = REDUCED_MAX_ITER, square: bool = False,
                  c0: np.ndarray | None = None) -> ReducedSolveReport:
    """Solve for the coefficients of the n-basis surrogate at ``mu``.

    ``square=True`` collocates on the solution-track points only (M = n),
    the unstabilized variant kept for comparison.
    """
    t0 = time.perf_counter()
    if not 1 <= n <= model.N:
        raise InvalidArgument(f"n must lie in [1, {model.N}], got {n}")
    problem = model.problem
    mu = problem.check(mu)
    WM, LM, GxM, GyM, fM, dmask, pts = _restricted(model, n, square)
    has_bc = bool(dmask.any())
    bc = _boundary(model, dmask, pts, mu) if has_bc else None
    grad = problem.uses_gradient
    c = np.zeros(n)
    if c0 is not None:
        # a warm start from a smaller basis leaves the new coefficients at zero
        k = min(n, len(c0))
        c[:k] = c0[:k]
    picard = problem.iteration == "fixed_point"
    update, res_prev = np.inf, np.inf
    it = 0
    with np.errstate(all="ignore"):
        while it < max_iter:
            it += 1
            u = WM @ c
            gx, gy = (GxM @ c, GyM @ c) if grad else (None, None)
            alpha, d, b = problem.linear_coefficients(u, gx, gy, fM, mu)
            A = alpha * LM + d[:, None] * WM
            if has_bc:
                A[dmask] = WM[dmask]
                b = np.array(b, dtype=float)
                b[dmask] = bc
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
                break
            try:
                c_new = lstsq_qr(A, b)
            except RankFailure as exc:
                raise RankFailure(f"{problem.name} mu={tuple(map(float, mu))} n={n}: rank deficient at iteration {it}") from exc
            update = float(np.max(np.abs(c_new - c)))
            c = c_new
            if not np.isfinite(update):
                break
            if update <= tol:
                if not picard:
                    break
                # same rule as the truth solver: polish until the residual stops halving
                res = float(np.max(np.abs(reduced_residual(model, n, mu, c, square))))
                if res > 0.5 * res_prev:
                    break
                res_prev = res
        r = reduced_residual(model, n, mu, c, square)
    res = float(np.max(np.abs(r)))
    report = ReducedSolveReport(c, it, res, time.perf_counter() - t0, bool(update <= tol))
    if not report.converged:
        raise ConvergenceFailure(
            f"{problem.name} mu={tuple(map(float, mu))} n={n}: reduced solve did not converge (update {update:.3e})", report)
    return report


def lift(model: ReducedModel, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    return model.W[:, : len(c)] @ c
