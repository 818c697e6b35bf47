"""Offline stage: greedy snapshot selection and the two interpolation tracks.

The solution track EIM-normalizes each new snapshot against the previous
basis functions; the residual track does the same to the full-grid residual
of the (n-1)-basis surrogate at the newly chosen parameter. Their maximizers
together form the collocation set.
"""
from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .fdm import InvalidArgument, Operators
from .model import GreedyTrace, ReducedModel, TraceRow
from .online import REDUCED_MAX_ITER, REDUCED_TOL, RankFailure, lift, solve_reduced
from .problems import Problem, residual
from .truth import TRUTH_TOL, ConvergenceFailure, TruthCache, solve_truth

log = logging.getLogger(__name__)

INDICATORS = ("l1", "r2", "res")


class LinearDependence(ArithmeticError):
    pass


class EIMStep(NamedTuple):
    vector: np.ndarray
    point: int
    coefficients: np.ndarray
    scale: float


def eim_orthonormalize(v, basis=None, points=(), forbidden=None, tol: float = 1e-12) -> EIMStep:
    """Zero ``v`` at the prior points, pick the new point, scale to 1 there.

    ``basis`` holds the prior vectors as columns; their values at ``points``
    must form a unit lower-triangular matrix.
    """
    v = np.asarray(v, dtype=float)
    points = np.asarray(points, dtype=np.int64)
    if len(points):
        B = np.asarray(basis)[:, : len(points)]
        alpha = solve_triangular(B[points], v[points], lower=True, unit_diagonal=True)
        rem = v - B @ alpha
        rem[points] = 0.0  # exact by construction; drop rounding residue
    else:
        alpha = np.zeros(0)
        rem = v.copy()
    mag = np.abs(rem)
    if forbidden is not None:
        mag[forbidden] = -1.0
    k = int(np.argmax(mag))
    if mag[k] < tol * max(1.0, float(np.max(np.abs(v)))):
        raise LinearDependence("vector lies in the span of the prior basis")
    scale = float(rem[k])
    return EIMStep(rem / scale, k, alpha, scale)


def indicator_L1(c) -> float:
    return float(np.sum(np.abs(c)))


def indicator_R2(report) -> float:
    """Max reduced residual over the collocation rows (already computed by the solve)."""
    return float(report.residual_norm)


def indicator_residual_full(model: ReducedModel, ops: Operators, mu, c) -> float:
    return float(np.linalg.norm(residual(model.problem, ops, lift(model, c), mu)))


@dataclass
class GreedyConfig:
    N_max: int = 10
    eps_tol: float = 0.0
    indicator: str = "l1"
    seed: int = 0
    warm_start: bool = False
    reduced_tol: float = REDUCED_TOL
    reduced_max_iter: int = REDUCED_MAX_ITER
    truth_tol: float = TRUTH_TOL
    dump_indicators: bool = False
    workers: int = 1


class ModelBuilder:
    """Grows a :class:`ReducedModel` one snapshot at a time."""

    def __init__(self, problem: Problem, ops: Operators, cache: TruthCache | None = None,
                 truth_tol: float = TRUTH_TOL, seed=None, indicator: str = ""):
        self.problem, self.ops, self.cache, self.truth_tol = problem, ops, cache, truth_tol
        self.forbidden = None
        self.f = problem.forcing(ops.grid)
        self.mus: list = []
        self.xs: list = []
        self.xr: list = []
        self.xm: list = []
        self.W = np.zeros((ops.grid.n_nodes, 0))
        self.Rres = np.zeros((ops.grid.n_nodes, 0))
        self.R = np.zeros((0, 0))
        self.truth_seconds = 0.0
        self.truth_wall = 0.0
        self.model = None
        self.seed, self.indicator = seed, indicator

    @property
    def n(self) -> int:
        return self.W.shape[1]

    def truth(self, mu) -> np.ndarray:
        t0 = time.perf_counter()
        if self.cache is not None:
            rep = self.cache.get(self.problem, self.ops, mu, self.truth_tol)
        else:
            rep = solve_truth(self.problem, self.ops, mu, self.truth_tol)
        self.truth_wall += time.perf_counter() - t0
        self.truth_seconds += rep.wall_time
        return rep.solution

    def offline_residual(self, mu, c) -> np.ndarray:
        """Full-grid residual of the surrogate ``W c`` at ``mu``."""
        return residual(self.problem, self.ops, lift(self.model, c), mu, self.f)

    def add(self, mu, c_prev=None, reduced_tol=REDUCED_TOL, reduced_max_iter=REDUCED_MAX_ITER):
        """Append the snapshot at ``mu``; ``c_prev`` is the current surrogate's coefficients there."""
        mu = self.problem.check(mu)
        u = self.truth(mu)
        step = eim_orthonormalize(u, self.W, self.xs, self.forbidden)
        rstep = None
        if self.n >= 1:
            if c_prev is None:
                c_prev = _solve_or_last(self.model, self.n, mu, reduced_tol, reduced_max_iter)
            r = self.offline_residual(mu, c_prev)
            rstep = eim_orthonormalize(r, self.Rres, self.xr, self.forbidden)

        n = self.n
        R = np.zeros((n + 1, n + 1))
        R[:n, :n] = self.R
        R[:n, n] = step.coefficients
        R[n, n] = step.scale
        self.R = R
        self.W = np.column_stack([self.W, step.vector])
        self.mus.append(mu)
        self.xs.append(step.point)
        new_pts = [step.point]
        if rstep is not None:
            self.Rres = np.column_stack([self.Rres, rstep.vector])
            self.xr.append(rstep.point)
            new_pts.append(rstep.point)
        for p in new_pts:
            if p not in self.xm:
                self.xm.append(p)
        self._refresh()
        return step.point, (rstep.point if rstep is not None else -1)

    def _refresh(self):
        ops, xm = self.ops, np.array(self.xm, dtype=np.int64)
        W = self.W
        self.model = ReducedModel(
            problem=self.problem, K=ops.grid.K, mu=np.array(self.mus), W=W, R=self.R,
            xs=np.array(self.xs, dtype=np.int64), xr=np.array(self.xr, dtype=np.int64), xm=xm,
            WM=W[xm], LM=ops.laplacian[xm] @ W, GxM=ops.dx1[xm] @ W, GyM=ops.dx2[xm] @ W,
            fM=self.f[xm], pM=ops.grid.points[xm], dM=ops.grid.dirichlet[xm].astype(np.int64),
            residual_interp=self.Rres[np.array(self.xr, dtype=np.int64)],
            seed=self.seed, indicator=self.indicator)


def _solve_or_last(model, n, mu, tol, max_iter, c0=None):
    try:
        return solve_reduced(model, n, mu, tol, max_iter, c0=c0).c
    except ConvergenceFailure as exc:
        return exc.report.c


def _score(model, n, mu, indicator, ops, tol, max_iter, c0):
    """(indicator value, coefficients, failed) for one training parameter."""
    try:
        rep = solve_reduced(model, n, mu, tol, max_iter, c0=c0)
    except (ConvergenceFailure, RankFailure) as exc:
        rep = getattr(exc, "report", None)
        return np.inf, (rep.c if rep is not None else None), True
    if indicator == "l1" or (indicator == "r2" and n == 1):
        # with one basis and one point the reduced residual vanishes identically
        return indicator_L1(model.snapshot_coordinates(rep.c)), rep.c, False
    if indicator == "r2":
        return indicator_R2(rep), rep.c, False
    return indicator_residual_full(model, ops, mu, rep.c), rep.c, False


def sweep(model: ReducedModel, n: int, train: np.ndarray, indicator: str, ops: Operators = None,
          tol=REDUCED_TOL, max_iter=REDUCED_MAX_ITER, warm=None, workers: int = 1):
    """Indicator values and coefficients over the training set; failed solves score +inf.

    Results are in training-set order whatever the worker count, so the
    argmax that follows is deterministic.
    """
    warm = warm if warm is not None else [None] * len(train)

    def one(i):
        return _score(model, n, train[i], indicator, ops, tol, max_iter, warm[i])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, range(len(train))))
    else:
        out = [one(i) for i in range(len(train))]
    values = np.array([o[0] for o in out], dtype=float)
    coeffs = [o[1] for o in out]
    return values, coeffs, sum(o[2] for o in out)


def greedy_build(problem: Problem, ops: Operators, train, config: GreedyConfig,
                 cache: TruthCache | None = None):
    """Greedy construction of the basis and collocation set.

    Returns ``(model, trace)``. Stops at ``N_max``, when the R2/RES indicator
    drops to ``eps_tol``, or when the greedy choice repeats a snapshot.
    """
    train = np.asarray(train, dtype=float)
    if config.indicator not in INDICATORS:
        raise InvalidArgument(f"indicator must be one of {INDICATORS}")
    if len(train) == 0 or config.N_max > len(train) or config.N_max < 1:
        raise InvalidArgument("need 1 <= N_max <= |train|")
    t0 = time.perf_counter()
    b = ModelBuilder(problem, ops, cache, config.truth_tol, config.seed, config.indicator)
    trace = GreedyTrace(warm_start=config.warm_start)

    def elapsed():
        # truth solves are charged at their own measured cost, cached or not
        return time.perf_counter() - t0 - b.truth_wall + b.truth_seconds

    first = int(np.random.default_rng(config.seed).integers(len(train)))
    chosen = [first]
    xs, _ = b.add(train[first])
    trace.rows.append(TraceRow(1, *train[first], np.nan, xs, -1, elapsed()))
    warm = None
    while b.n < config.N_max:
        n = b.n
        vals, coeffs, fails = sweep(b.model, n, train, config.indicator, ops,
                                    config.reduced_tol, config.reduced_max_iter, warm, config.workers)
        trace.sweep_failures += fails
        if config.dump_indicators:
            trace.indicator_fields.append(vals.copy())
        if config.warm_start:
            warm = coeffs
        j = int(np.argmax(vals))
        if config.indicator != "l1" and vals[j] <= config.eps_tol:
            trace.stop_reason = "tolerance"
            break
        if j in chosen:
            trace.stop_reason = "stagnation"
            break
        try:
            xs, xr = b.add(train[j], coeffs[j], config.reduced_tol, config.reduced_max_iter)
        except LinearDependence:
            trace.stop_reason = "linear_dependence"
            break
        chosen.append(j)
        trace.rows.append(TraceRow(n + 1, *train[j], float(vals[j]), xs, xr, elapsed()))
        log.info("greedy %s n=%d mu=%s indicator=%.3e", config.indicator, n + 1, train[j], vals[j])
    else:
        trace.stop_reason = "N_max"
    trace.truth_seconds = b.truth_seconds
    b.model.meta = {"stop_reason": trace.stop_reason, "warm_start": config.warm_start}
    return b.model, trace


def build_from_parameters(problem: Problem, ops: Operators, mus, cache: TruthCache | None = None,
                          truth_tol=TRUTH_TOL, reduced_tol=REDUCED_TOL, reduced_max_iter=REDUCED_MAX_ITER):
    """Both interpolation tracks for a prescribed snapshot sequence (no greedy sweeps)."""
    b = ModelBuilder(problem, ops, cache, truth_tol, indicator="prescribed")
    for mu in mus:
        try:
            b.add(mu, None, reduced_tol, reduced_max_iter)
        except LinearDependence:
            log.warning("snapshot at %s is linearly dependent; stopping at n=%d", mu, b.n)
            break
    return b.model


def pod_modes(snapshots: np.ndarray):
    U, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    return U, s


def pod_build(snapshots: np.ndarray, n: int) -> np.ndarray:
    """Leading n left singular vectors of the snapshot matrix (columns = snapshots)."""
    U, s = pod_modes(snapshots)
    rank = int(np.sum(s > s[0] * max(snapshots.shape) * np.finfo(float).eps)) if s.size else 0
    if n > rank:
        warnings.warn(f"requested {n} POD modes but snapshot rank is {rank}; truncating")
        n = rank
    return U[:, :n]


def random_build(n_train: int, n: int, seed) -> np.ndarray:
    """Indices of n distinct training parameters drawn without replacement."""
    if n > n_train:
        raise InvalidArgument("cannot draw more parameters than the training set holds")
    return np.random.default_rng(seed).choice(n_train, size=n, replace=False)
