#!/usr/bin/env python3
"""Observed L2 convergence orders for Poisson with u = sin(pi x) sin(pi y).

    python3 scripts/poisson_rates.py --k 1 2 3 --n 8 16 32
"""
import argparse

from hdgkit.pdemodels import sinsin_poisson
from hdgkit.studyrun import convdiff_sinsin, convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--convdiff", action="store_true", help="use the convection-diffusion case instead")
    args = ap.parse_args()

    model = convdiff_sinsin() if args.convdiff else sinsin_poisson()
    print(f"{'k':>2} {'1/h':>4} {'L2 error':>12} {'order':>7}")
    for r in convergence_study(model, args.k, args.n):
        order = "exact" if r.exact else ("" if r.order is None else f"{r.order:.2f}")
        print(f"{r.k:>2} {r.n:>4} {r.error:>12.4e} {order:>7}")


if __name__ == "__main__":
    main()
