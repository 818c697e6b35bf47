"""Command line: ``rocpde {train,solve,convergence,compare,timing,inspect}``.

Exit codes: 0 success, 2 usage error, 3 solver failure, 4 I/O failure.
The truth cache lives in ``$ROCPDE_CACHE`` unless ``--cache-dir`` is given.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import zipfile
from pathlib import Path

import numpy as np

from .fdm import InvalidArgument, build_grid
from .harness import METHODS, Study, decay_fit, run_comparison, run_convergence, run_timing
from .model import load_model, save_model, write_csv, write_trace
from .offline import INDICATORS, GreedyConfig, greedy_build
from .online import REDUCED_MAX_ITER, REDUCED_TOL, RankFailure, lift, solve_reduced
from .problems import PROBLEMS, DomainError
from .truth import ConvergenceFailure, LinearSolverFailure, TruthCache

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("rocpde")


class UsageError(Exception):
    pass


class IOFailure(Exception):
    pass


def parse_mu(text: str) -> np.ndarray:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed parameter {text!r}; expected two numbers like 0.15,3.85") from None
    if len(parts) != 2 or not np.all(np.isfinite(parts)):
        raise UsageError(f"malformed parameter {text!r}; expected two finite numbers")
    return np.array(parts)


def parse_ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--problem", default=None, help=f"one of {', '.join(PROBLEMS)} (default pbe)")
    p.add_argument("--K", type=int, default=200, help="grid intervals per direction")
    p.add_argument("--indicator", default="l1", help=f"greedy indicator: {', '.join(INDICATORS)}")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.add_argument("--tol", type=float, default=REDUCED_TOL, help="reduced solver tolerance")
    p.add_argument("--max-iter", type=int, default=REDUCED_MAX_ITER)
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and truth fills")
    p.add_argument("--cache-dir", type=Path, default=None, help="truth cache (default $ROCPDE_CACHE)")
    p.add_argument("--full-paper", action="store_true",
                   help="use the full training grid instead of the coarsened desk grid")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rocpde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="greedy build; writes a model file and a trace CSV")
    _common(p)
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--eps-tol", type=float, default=0.0)
    p.add_argument("--warm-start", action="store_true")

    p = sub.add_parser("solve", help="reduced solve at one parameter")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--mu", required=True, help="parameter as a,b")
    p.add_argument("--n", type=int, default=None, help="active bases (default all)")
    p.add_argument("--square", action="store_true", help="collocate on solution-track points only")
    p.add_argument("--field", type=Path, default=None, help="write the lifted field as CSV")

    p = sub.add_parser("convergence", help="E(n) over the test set")
    _common(p)
    p.add_argument("--N", type=int, default=20)

    p = sub.add_parser("compare", help="POD, L1 greedy and random bases")
    _common(p)
    p.add_argument("--N", type=int, default=15)
    p.add_argument("--trials", type=int, default=20)

    p = sub.add_parser("timing", help="offline/online cost and break-even counts")
    _common(p)
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--K-list", default="200", help="comma-separated grid sizes")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--n-run-max", type=int, default=2000)
    p.add_argument("--truth-samples", type=int, default=5)
    p.add_argument("--offline-repeats", type=int, default=1,
                   help="offline builds per method, run round-robin; the median is reported")

    p = sub.add_parser("inspect", help="model header and collocation points")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    return parser


def _problem(args) -> str:
    name = args.problem or "pbe"
    if name not in PROBLEMS:
        raise UsageError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEMS)}")
    return name


def _study(args) -> Study:
    if args.indicator not in INDICATORS:
        raise UsageError(f"unknown indicator {args.indicator!r}; expected one of {', '.join(INDICATORS)}")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    return Study.setup(_problem(args), args.K, args.full_paper, TruthCache(args.cache_dir), args.threads)


def _load(args):
    if not args.model.exists():
        raise IOFailure(f"model file {args.model} not found")
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError, zipfile.BadZipFile) as exc:
        raise IOFailure(f"cannot read model file {args.model}: {exc}") from exc
    if args.problem and args.problem != model.problem.name:
        raise UsageError(f"--problem {args.problem} does not match the model ({model.problem.name})")
    return model


def cmd_train(args):
    study = _study(args)
    cfg = GreedyConfig(N_max=args.N, eps_tol=args.eps_tol, indicator=args.indicator, seed=args.seed,
                       warm_start=args.warm_start, reduced_tol=args.tol,
                       reduced_max_iter=args.max_iter, workers=args.threads)
    model, trace = greedy_build(study.problem, study.ops, study.train, cfg, study.cache)
    tag = study.tag(args.indicator, f"seed{args.seed}")
    mpath = save_model(model, args.out_dir / f"model_{tag}.npz")
    tpath = write_trace(trace, args.out_dir / f"trace_{tag}.csv")
    print(f"model: {mpath}")
    print(f"trace: {tpath}")
    print(f"N={model.N} M={model.M} stop={trace.stop_reason} sweep_failures={trace.sweep_failures}")


def cmd_solve(args):
    model = _load(args)
    mu = parse_mu(args.mu)
    n = model.N if args.n is None else args.n
    rep = solve_reduced(model, n, mu, args.tol, args.max_iter, square=args.square)
    print("coefficients: " + " ".join(f"{c:.17g}" for c in rep.c))
    print(f"reduced_residual: {rep.residual_norm:.17g}")
    print(f"iterations: {rep.iterations}")
    print(f"wall_time: {rep.wall_time:.6g}")
    if args.field is not None:
        u = lift(model, rep.c)
        grid = build_grid(model.K, model.problem.bc)
        path = write_csv(args.field, ["x1", "x2", "u"], np.column_stack([grid.x1, grid.x2, u]).tolist())
        print(f"field: {path}")


def cmd_convergence(args):
    study = _study(args)
    table, _, _ = run_convergence(study, args.indicator, args.N, args.seed, args.out_dir,
                                  args.tol, args.max_iter)
    for n, e, peak, fails in table.rows:
        print(f"{n:3d}  E={e:.6e}  max_indicator={peak:.6e}  failures={fails}")
    if len(table.rows) > 2 and np.all(np.isfinite(table.E)) and np.all(table.E > 0):
        slope, r2 = decay_fit(table.E)
        print(f"log10 E(n) slope {slope:.4f}, R^2 {r2:.4f}")


def cmd_compare(args):
    study = _study(args)
    table = run_comparison(study, args.N, args.trials, args.seed, args.out_dir, args.tol, args.max_iter)
    lo, med, hi = table.envelope
    for i, n in enumerate(table.n):
        print(f"{n:3d}  pod={table.pod[i]:.3e}  l1={table.l1_roc[i]:.3e}  "
              f"random min/median/max={lo[i]:.3e}/{med[i]:.3e}/{hi[i]:.3e}")


def cmd_timing(args):
    problem = _problem(args)
    methods = tuple(args.methods.split(","))
    bad = set(methods) - set(METHODS)
    if bad:
        raise UsageError(f"unknown method(s) {sorted(bad)}")
    table = run_timing(problem, parse_ints(args.K_list), args.N, args.seed, methods, args.n_run_max,
                       truth_samples=args.truth_samples, full_paper=args.full_paper,
                       cache=TruthCache(args.cache_dir), out_dir=args.out_dir, threads=args.threads,
                       tol=args.tol, max_iter=args.max_iter, offline_repeats=args.offline_repeats)
    for K, method, offline, per_query, be in table.summary:
        print(f"K={K} {method:8s} offline={offline:.3f}s per_query={per_query:.3e}s break_even={be}")


def cmd_inspect(args):
    model = _load(args)
    print(json.dumps(model.header(), indent=2, sort_keys=True, default=str))
    print("snapshot parameters:")
    for i, mu in enumerate(model.mu):
        print(f"  {i + 1:3d}  {mu[0]:.17g}  {mu[1]:.17g}")
    print("collocation points (position, node, x1, x2, track):")
    xs, xr = set(model.xs.tolist()), set(model.xr.tolist())
    for i, (node, (x1, x2)) in enumerate(zip(model.xm, model.pM)):
        track = "+".join(t for t, s in (("solution", xs), ("residual", xr)) if int(node) in s)
        print(f"  {i:3d}  {int(node):7d}  {x1:+.6f}  {x2:+.6f}  {track}")


COMMANDS = {"train": cmd_train, "solve": cmd_solve, "convergence": cmd_convergence,
            "compare": cmd_compare, "timing": cmd_timing, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, InvalidArgument, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceFailure, RankFailure, LinearSolverFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (IOFailure, OSError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
