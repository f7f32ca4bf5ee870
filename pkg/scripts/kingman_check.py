#!/usr/bin/env python3
"""Simulated G/G/1 queues against the Kingman bound, plus the backlog queue's bound vs f_n.

    python3 scripts/kingman_check.py --slots 1000000
"""
import argparse

import numpy as np

from iqswitch.bounds import GG1Params, backlog_kingman_display, kingman_bound, lindley_path

CASES = [  # arrivals ~ Binomial(m, p); service deterministic c
    (3, 0.25, 1), (2, 0.3, 1), (2, 0.45, 1), (3, 0.3, 1), (4, 0.4, 2), (5, 0.35, 2),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print(f"{'m':>2} {'p':>5} {'c':>2} {'sim':>9} {'bound':>9} {'ratio':>6}")
    for m, p, c in CASES:
        x = rng.binomial(m, p, args.slots)
        z = lindley_path(x, np.full(args.slots, c))[1:]
        lam = m * p
        bound = kingman_bound(GG1Params(lam, m * p * (1 - p) + lam * lam, c, c * c))
        print(f"{m:>2} {p:>5} {c:>2} {z.mean():>9.3f} {bound:>9.3f} {z.mean() / bound:>6.2f}")

    print("\nbacklog queue bound (arrival rate f^-7, unit service):")
    for f in (3, 10, 25, 49, 100):
        lam = float(f) ** -7
        exact = kingman_bound(GG1Params(lam, 1.0 / f, 1.0, 1.0))
        print(f"  f_n={f:<4} exact={exact:.6f} displayed={backlog_kingman_display(f):.6f}")


if __name__ == "__main__":
    main()
