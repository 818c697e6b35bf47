#!/usr/bin/env python3
"""Per-column error profile E_x of coarse truth solutions against a fine reference.

    python scripts/fdm_order.py --K-list 100,200 --K-ref 800
"""
import argparse
from pathlib import Path

import numpy as np

from rocpde.model import write_csv
from rocpde.problems import get_problem
from rocpde.truth import error_profile_Ex


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="cubic")
    ap.add_argument("--mu", default="2.6,1.1")
    ap.add_argument("--K-list", default="100,200")
    ap.add_argument("--K-ref", type=int, default=800)
    ap.add_argument("--out-dir", type=Path, default=Path("results/fdm"))
    args = ap.parse_args()
    mu = tuple(float(v) for v in args.mu.split(","))
    Ks = [int(k) for k in args.K_list.split(",")]
    out = error_profile_Ex(get_problem(args.problem), mu, Ks, args.K_ref)
    for K in Ks:
        x, e = out[K]
        write_csv(args.out_dir / f"Ex_{args.problem}_K{K}_ref{args.K_ref}.csv", ["x1", "E_x"],
                  np.column_stack([x, e]).tolist())
        print(f"K={K}: max E_x = {e.max():.4e}")
    for a, b in zip(Ks, Ks[1:]):
        print(f"ratio K={a}/K={b}: {out[a][1].max() / out[b][1].max():.3f}")


if __name__ == "__main__":
    main()
