#!/usr/bin/env python3
"""POD versus L1 greedy versus random parameter choices, per problem.

    python scripts/comparison_study.py --out-dir results/comparison
"""
import argparse
import logging
from pathlib import Path

from rocpde.harness import Study, run_comparison

SEEDS = {"pbe": 7, "cubic": 0, "convdiff": 7}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problems", default="pbe,cubic,convdiff")
    ap.add_argument("--K", type=int, default=200)
    ap.add_argument("--N", type=int, default=15)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--full-paper", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=Path("results/comparison"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in args.problems.split(","):
        study = Study.setup(name, args.K, args.full_paper, threads=args.threads)
        table = run_comparison(study, args.N, args.trials, SEEDS[name], args.out_dir)
        _, med, _ = table.envelope
        print(f"{name}: E(N) pod={table.pod[-1]:.3e} l1={table.l1_roc[-1]:.3e} random median={med[-1]:.3e}")


if __name__ == "__main__":
    main()
