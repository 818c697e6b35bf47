"""Experiment drivers: convergence curves, POD/random comparison, timing break-even.

Every driver writes CSV files (17 significant digits) next to a small JSON
sidecar holding the run metadata.
"""
from __future__ import annotations

import gc
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .fdm import Operators, build_grid
from .model import save_model, write_csv, write_trace
from .offline import (GreedyConfig, build_from_parameters, greedy_build, pod_build, random_build,
                      sweep)
from .online import REDUCED_MAX_ITER, REDUCED_TOL, RankFailure, lift, solve_reduced
from .problems import Problem, get_problem
from .truth import TRUTH_TOL, ConvergenceFailure, TruthCache, solve_truth

log = logging.getLogger(__name__)

DESK_K = 200
DESK_COARSEN = 2
METHODS = ("l1", "r2", "res")


@dataclass
class Study:
    """A problem on one grid, its parameter sets, and a truth cache."""

    problem: Problem
    ops: Operators
    train: np.ndarray
    test: np.ndarray
    test2: np.ndarray
    cache: TruthCache
    full_paper: bool = False
    threads: int = 1

    @classmethod
    def setup(cls, problem, K: int = DESK_K, full_paper: bool = False,
              cache: TruthCache | None = None, threads: int = 1) -> "Study":
        problem = get_problem(problem) if isinstance(problem, str) else problem
        grids = problem.parameter_grids()
        train = grids["train"] if full_paper else grids["train"].coarsen(DESK_COARSEN)
        return cls(problem, Operators.build(build_grid(K, problem.bc)), train.mu, grids["test"].mu,
                   grids["test2"].mu, cache if cache is not None else TruthCache(), full_paper, threads)

    @property
    def K(self) -> int:
        return self.ops.grid.K

    def truths(self, mus, tol=TRUTH_TOL) -> np.ndarray:
        return self.cache.solutions(self.problem, self.ops, mus, tol, workers=self.threads)

    def tag(self, *parts) -> str:
        return "_".join([self.problem.name, f"K{self.K}", *map(str, parts)])


def relative_errors(model, mus, U, n_values, tol=REDUCED_TOL, max_iter=REDUCED_MAX_ITER,
                    square=False, workers=1):
    """E(n): max over ``mus`` of the nodal max error, over the largest truth max-norm.

    ``U`` holds the truth solutions as columns. A solve that runs out of
    iterations is counted as a failure and measured at its last iterate; a
    rank failure or a non-finite iterate counts as an infinite error.
    Returns ``(E, failures)`` indexed like ``n_values``.
    """
    U = np.asarray(U)
    scale = np.abs(U).max()

    def one(n):
        worst, fails = 0.0, 0
        for i, mu in enumerate(mus):
            try:
                c = solve_reduced(model, n, mu, tol, max_iter, square=square).c
            except (ConvergenceFailure, RankFailure) as exc:
                fails += 1
                report = getattr(exc, "report", None)
                if report is None or not np.all(np.isfinite(report.c)):
                    worst = np.inf
                    continue
                log.info("n=%d mu=%s: %s", n, tuple(map(float, mu)), exc)
                c = report.c
            worst = max(worst, float(np.abs(lift(model, c) - U[:, i]).max()))
        return worst / scale, fails

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, n_values))
    else:
        out = [one(n) for n in n_values]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out], dtype=np.int64)


def projection_errors(basis, U, n_values):
    """Same metric as :func:`relative_errors` for the orthogonal projection onto ``basis[:, :n]``."""
    scale = np.abs(U).max()
    out = []
    for n in n_values:
        B = basis[:, : min(n, basis.shape[1])]
        out.append(float(np.abs(U - B @ (B.T @ U)).max()) / scale)
    return np.array(out)


def _sidecar(path: Path, meta: dict):
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


@dataclass
class ConvergenceTable:
    rows: list
    meta: dict = field(default_factory=dict)
    columns = ("n", "E", "max_indicator", "test_failures")

    @property
    def E(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def write(self, path) -> Path:
        path = write_csv(path, self.columns, self.rows)
        _sidecar(path, self.meta)
        return path


def decay_fit(E) -> tuple[float, float]:
    """Slope and R^2 of the least-squares line through (n, log10 E(n))."""
    n = np.arange(1, len(E) + 1, dtype=float)
    y = np.log10(np.asarray(E, dtype=float))
    slope, icpt = np.polyfit(n, y, 1)
    ss_res = float(np.sum((y - (slope * n + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(slope), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def run_convergence(study: Study, indicator: str = "l1", N: int = 20, seed: int = 7,
                    out_dir=None, tol=REDUCED_TOL, max_iter=REDUCED_MAX_ITER,
                    warm_start: bool = False, test=None):
    """Greedy build plus E(n), n = 1..N, over the test set.

    Returns ``(table, model, trace)``; with ``out_dir`` also writes the
    table, the trace and the model file.
    """
    cfg = GreedyConfig(N_max=N, indicator=indicator, seed=seed, warm_start=warm_start,
                       reduced_tol=tol, reduced_max_iter=max_iter, workers=study.threads)
    model, trace = greedy_build(study.problem, study.ops, study.train, cfg, study.cache)
    test = study.test if test is None else np.asarray(test, dtype=float)
    U = study.truths(test)
    ns = list(range(1, model.N + 1))
    E, fails = relative_errors(model, test, U, ns, tol, max_iter, workers=study.threads)
    # the trace row for basis n + 1 holds the sweep maximum of the n-basis surrogate
    peaks = [r.indicator_value for r in trace.rows[1:]]
    last, _, _ = sweep(model, model.N, study.train, indicator, study.ops, tol, max_iter,
                       workers=study.threads)
    peaks.append(float(np.max(last)))
    for n in range(1, len(E)):
        if E[n] > 1.5 * E[n - 1]:
            log.warning("E(%d) = %.3e exceeds 1.5 E(%d) = %.3e", n + 1, E[n], n, E[n - 1])
    table = ConvergenceTable(
        [[n, float(e), float(p), int(f)] for n, e, p, f in zip(ns, E, peaks, fails)],
        dict(problem=study.problem.name, K=study.K, indicator=indicator, seed=seed,
             full_paper=study.full_paper, stop_reason=trace.stop_reason, n_test=len(test),
             sweep_failures=trace.sweep_failures, warm_start=warm_start))
    if out_dir is not None:
        out = Path(out_dir)
        tag = study.tag(indicator, f"seed{seed}")
        table.write(out / f"convergence_{tag}.csv")
        write_trace(trace, out / f"trace_{tag}.csv")
        save_model(model, out / f"model_{tag}.npz")
    return table, model, trace


@dataclass
class ComparisonTable:
    n: np.ndarray
    pod: np.ndarray
    l1_roc: np.ndarray
    random: np.ndarray  # trials x n
    meta: dict = field(default_factory=dict)
    columns = ("n", "pod", "l1_roc", "random_min", "random_median", "random_max")

    @property
    def envelope(self):
        r = self.random
        return r.min(axis=0), np.median(r, axis=0), r.max(axis=0)

    def write(self, path) -> Path:
        lo, med, hi = self.envelope
        rows = [[int(n), *map(float, v)] for n, *v in zip(self.n, self.pod, self.l1_roc, lo, med, hi)]
        path = write_csv(path, self.columns, rows)
        _sidecar(path, self.meta)
        return path


def run_comparison(study: Study, N: int = 15, trials: int = 20, seed: int = 7, out_dir=None,
                   tol=REDUCED_TOL, max_iter=REDUCED_MAX_ITER, model=None) -> ComparisonTable:
    """POD, L1 greedy and random parameter choices on the same test set.

    POD uses every training solution and is measured by projection; the
    random bases go through the same two-track collocation construction as
    the greedy one and are solved online.
    """
    test = study.test
    U = study.truths(test)
    ns = np.arange(1, N + 1)
    if len(study.train) > 200:
        log.warning("POD reference needs %d truth solves at K=%d", len(study.train), study.K)
    pod = projection_errors(pod_build(study.truths(study.train), N), U, ns)
    if model is None:
        cfg = GreedyConfig(N_max=N, indicator="l1", seed=seed, reduced_tol=tol,
                           reduced_max_iter=max_iter, workers=study.threads)
        model, _ = greedy_build(study.problem, study.ops, study.train, cfg, study.cache)
    l1 = np.full(N, np.inf)
    e, _ = relative_errors(model, test, U, ns[: model.N], tol, max_iter, workers=study.threads)
    l1[: model.N] = e
    rand = np.full((trials, N), np.inf)
    for t, ss in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        idx = random_build(len(study.train), N, ss)
        m = build_from_parameters(study.problem, study.ops, study.train[idx], study.cache,
                                  reduced_tol=tol, reduced_max_iter=max_iter)
        e, _ = relative_errors(m, test, U, ns[: m.N], tol, max_iter, workers=study.threads)
        rand[t, : m.N] = e
        log.info("random trial %d/%d: E(N) = %.3e", t + 1, trials, rand[t, -1])
    table = ComparisonTable(ns, pod, l1, rand, dict(
        problem=study.problem.name, K=study.K, N=N, trials=trials, seed=seed,
        full_paper=study.full_paper, l1_stop_reason=model.meta.get("stop_reason")))
    if out_dir is not None:
        table.write(Path(out_dir) / f"comparison_{study.tag(f'seed{seed}')}.csv")
    return table


def online_times(models, mus, n=None, repeats=5, tol=REDUCED_TOL, max_iter=REDUCED_MAX_ITER):
    """Median-of-``repeats`` wall time of one reduced solve per parameter.

    ``models`` is one model or a dict of them. Repeats are interleaved across
    the models so that slow drift in machine speed hits all of them alike.
    Returns an array, or a dict of arrays keyed like ``models``.
    """
    single = not isinstance(models, dict)
    group = {None: models} if single else models

    def solve(model, mu):
        try:
            solve_reduced(model, model.N if n is None else n, mu, tol, max_iter)
        except (ConvergenceFailure, RankFailure):
            pass

    # one untimed solve each, and the collector run up front, keep both out of the samples
    for model in group.values():
        solve(model, mus[0])
    gc.collect()
    samples = {key: np.empty((repeats, len(mus))) for key in group}
    for r in range(repeats):
        for key, model in group.items():
            for i, mu in enumerate(mus):
                t0 = time.perf_counter()
                solve(model, mu)
                samples[key][r, i] = time.perf_counter() - t0
    out = {key: np.median(v, axis=0) for key, v in samples.items()}
    return out[None] if single else out


def truth_times(study: Study, mus) -> np.ndarray:
    """Fresh (uncached) truth solve wall times."""
    return np.array([solve_truth(study.problem, study.ops, mu).wall_time for mu in mus])


def break_even(offline: float, roc_costs, truth_costs, n_max: int) -> float:
    """First query count where offline + cumulative ROC cost drops below cumulative truth cost.

    Both cost sequences are cycled. Returns ``nan`` if no crossing by ``n_max``.
    """
    k = np.arange(n_max)
    roc = offline + np.cumsum(np.resize(roc_costs, n_max))
    tru = np.cumsum(np.resize(truth_costs, n_max))
    hit = np.flatnonzero(roc < tru)
    return float(k[hit[0]] + 1) if hit.size else float("nan")


@dataclass
class TimingTable:
    rows: list  # (K, method, n_run, cumulative_seconds)
    summary: list  # (K, method, offline_seconds, mean_query_seconds, break_even)
    meta: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict, repr=False)  # (K, method) -> ReducedModel
    columns = ("K", "method", "n_run", "cumulative_seconds")
    summary_columns = ("K", "method", "offline_seconds", "mean_query_seconds", "break_even_n_run")

    def lookup(self, K, method, column):
        j = self.summary_columns.index(column)
        for row in self.summary:
            if row[0] == K and row[1] == method:
                return row[j]
        raise KeyError((K, method))

    def write(self, out_dir, tag) -> tuple[Path, Path]:
        out = Path(out_dir)
        a = write_csv(out / f"timing_{tag}.csv", self.columns, self.rows)
        b = write_csv(out / f"timing_summary_{tag}.csv", self.summary_columns, self.summary)
        _sidecar(a, self.meta)
        return a, b


def run_timing(problem, K_list=(200,), N: int = 20, seed: int = 7, methods=METHODS,
               n_run_max: int = 2000, curve_points: int = 200, repeats: int = 5,
               truth_samples: int = 5, full_paper: bool = False, cache=None, out_dir=None,
               threads: int = 1, tol=REDUCED_TOL, max_iter=REDUCED_MAX_ITER,
               fresh_offline: bool = True, offline_repeats: int = 1) -> TimingTable:
    """Offline cost, per-query online cost and break-even counts against the truth solver.

    Queries cycle through the second test set. The truth per-query cost is
    measured on ``truth_samples`` of those parameters, solved fresh. With
    ``fresh_offline`` each greedy build solves its own snapshots, so its cost
    is measured now; otherwise cached snapshots are charged at the time
    recorded when they were first solved. The offline cost is the median
    over ``offline_repeats`` builds. BLAS is held to one thread while
    anything is timed.
    """
    rows, summary, models, offline, t_truth = [], [], {}, {}, {}
    studies = {K: Study.setup(problem, K, full_paper, cache, threads) for K in K_list}
    queries = studies[K_list[0]].test2
    pick = np.linspace(0, len(queries) - 1, min(truth_samples, len(queries))).round().astype(int)
    with threadpool_limits(1):
        for K, study in studies.items():
            t_truth[K] = truth_times(study, queries[pick])
            spent = {m: [] for m in methods}
            # builds are repeated round-robin over the methods, so a slow spell is shared out
            for _ in range(offline_repeats):
                for m in methods:
                    cfg = GreedyConfig(N_max=N, indicator=m, seed=seed, reduced_tol=tol,
                                       reduced_max_iter=max_iter)
                    # a private in-memory cache: every truth solve of the build is timed in this run
                    build_cache = TruthCache(env=False) if fresh_offline else study.cache
                    model, trace = greedy_build(study.problem, study.ops, study.train, cfg, build_cache)
                    models.setdefault((K, m), model)
                    spent[m].append(trace.rows[-1].cum_offline_seconds)
            offline.update({(K, m): float(np.median(v)) for m, v in spent.items()})
        online = online_times(models, queries, None, repeats, tol, max_iter)
    grid = np.unique(np.linspace(0, n_run_max, curve_points + 1).round().astype(int))
    for K in K_list:
        curves = {"truth": (0.0, t_truth[K])}
        curves.update({f"roc-{m}": (offline[(K, m)], online[(K, m)]) for m in methods})
        for name, (off, costs) in curves.items():
            cum = off + np.concatenate([[0.0], np.cumsum(np.resize(costs, n_run_max))])
            rows += [[K, name, int(k), float(cum[k])] for k in grid]
            be = 0.0 if name == "truth" else break_even(off, costs, t_truth[K], n_run_max)
            summary.append([K, name, float(off), float(np.mean(costs)), be])
            log.info("timing K=%d %s: offline %.3f s, per query %.3e s, break-even %s",
                     K, name, off, np.mean(costs), be)
    table = TimingTable(rows, summary, dict(problem=getattr(problem, "name", problem), K=list(K_list),
                                            N=N, seed=seed, repeats=repeats, full_paper=full_paper,
                                            truth_samples=truth_samples,
                                            offline_repeats=offline_repeats), models)
    if out_dir is not None:
        table.write(out_dir, f"{table.meta['problem']}_N{N}_seed{seed}")
    return table


def stability_counts(model, mus, n=None, tol=REDUCED_TOL, max_iter=REDUCED_MAX_ITER):
    """Failed reduced solves over ``mus`` for the over-collocated and the square variants."""
    n = model.N if n is None else n
    counts = {}
    for square in (False, True):
        fails = 0
        for mu in mus:
            try:
                solve_reduced(model, n, mu, tol, max_iter, square=square)
            except (ConvergenceFailure, RankFailure):
                fails += 1
        counts["square" if square else "over"] = fails
    return counts

