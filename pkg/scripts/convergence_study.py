#!/usr/bin/env python3
"""E(n) curves and greedy traces for every problem and indicator.

    python scripts/convergence_study.py --out-dir results/convergence [--full-paper --K 400]
"""
import argparse
import logging
from pathlib import Path

from rocpde.harness import Study, decay_fit, run_convergence

N_DEFAULT = {"pbe": 30, "cubic": 40, "convdiff": 20}
SEEDS = {"pbe": 7, "cubic": 0, "convdiff": 7}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problems", default="pbe,cubic,convdiff")
    ap.add_argument("--indicators", default="l1,r2,res")
    ap.add_argument("--K", type=int, default=200)
    ap.add_argument("--full-paper", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=Path("results/convergence"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in args.problems.split(","):
        study = Study.setup(name, args.K, args.full_paper, threads=args.threads)
        for ind in args.indicators.split(","):
            table, model, trace = run_convergence(study, ind, N_DEFAULT[name], SEEDS[name], args.out_dir)
            slope, r2 = decay_fit(table.E)
            print(f"{name:8s} {ind:3s} N={model.N} stop={trace.stop_reason} E(N)={table.E[-1]:.3e} "
                  f"slope={slope:.3f} R2={r2:.3f}")


if __name__ == "__main__":
    main()
