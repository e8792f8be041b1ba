#!/usr/bin/env python3
"""Total GMRES iterations for steady viscous Burgers over (k, 1/h) and the
four preconditioners BJ, ASM, BJ-PP(P), ASM-PP(P).

Prints a pivoted table to stdout; ``--csv`` also writes the raw sweep rows.

    python3 scripts/burgers_table.py --k 1 2 3 --n 16 32
"""
import argparse
import logging

from hdgkit.studyrun import rows_to_csv, run_sweep, sweep_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--n", type=int, nargs="+", default=[16, 32])
    ap.add_argument("--poly-degree", type=int, default=10)
    ap.add_argument("--csv", default=None, help="write the sweep rows here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    P = args.poly_degree
    variants = (("bj", 0), ("asm", 0), ("bj", P), ("asm", P))
    rows = run_sweep(sweep_grid("burgers2d", args.k, args.n, variants))
    labels = ["BJ", "ASM", f"BJ-PP({P})", f"ASM-PP({P})"]
    table = {(r["k"], r["n"], r["precond"]): r for r in rows}
    print(f"{'k':>2} {'1/h':>4} " + " ".join(f"{lab:>11}" for lab in labels))
    for k in args.k:
        for n in args.n:
            cells = []
            for lab in labels:
                r = table[(k, n, lab)]
                cells.append(f"{r['n_gmres']:>11}" if r["converged"] else f"{'--':>11}")
            print(f"{k:>2} {n:>4} " + " ".join(cells))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            rows_to_csv(rows, fh)


if __name__ == "__main__":
    main()
