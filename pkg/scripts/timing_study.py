#!/usr/bin/env python3
"""Offline and online cost across grid sizes, with break-even query counts.

    python scripts/timing_study.py --problems pbe --K-list 200,400,800 --N 20
"""
import argparse
import logging
from pathlib import Path

from rocpde.harness import METHODS, run_timing

SEEDS = {"pbe": 7, "cubic": 0, "convdiff": 7}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problems", default="pbe,cubic,convdiff")
    ap.add_argument("--K-list", default="200,400")
    ap.add_argument("--N", type=int, default=20)
    ap.add_argument("--methods", default=",".join(METHODS))
    ap.add_argument("--full-paper", action="store_true")
    ap.add_argument("--offline-repeats", type=int, default=3)
    ap.add_argument("--out-dir", type=Path, default=Path("results/timing"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    Ks = [int(k) for k in args.K_list.split(",")]
    for name in args.problems.split(","):
        t = run_timing(name, Ks, args.N, SEEDS[name], tuple(args.methods.split(",")),
                       full_paper=args.full_paper, out_dir=args.out_dir,
                       offline_repeats=args.offline_repeats)
        for K, method, offline, per_query, be in t.summary:
            print(f"{name:8s} K={K:4d} {method:8s} offline={offline:8.2f}s "
                  f"per_query={per_query:.3e}s break_even={be}")


if __name__ == "__main__":
    main()
