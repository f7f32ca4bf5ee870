#!/usr/bin/env python3
"""Three-phase policy vs the baselines on identical arrival streams.

    python3 scripts/paired_baseline.py --n 25 --seeds 0 1 2 --periods 4

Every policy sees the same arrivals for a given (seed, n, f_n), so per-seed
differences are paired. Time averages are taken over the common window of
``periods * b`` slots. MaxWeight is slow at large n (one assignment solve
plus tie-breaking per slot), so it only runs with --maxweight.
"""
import argparse

import numpy as np

from iqswitch.harness import ExperimentConfig, run_replication
from iqswitch.policies import DEFAULT_CONSTANTS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=25)
    ap.add_argument("--f-n", type=int, default=None)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--periods", type=int, default=4)
    ap.add_argument("--constants", type=float, nargs=3, default=list(DEFAULT_CONSTANTS),
                    metavar=("C_B", "C_D", "C_S"))
    ap.add_argument("--relaxed", action="store_true")
    ap.add_argument("--maxweight", action="store_true", help="also run MaxWeight")
    args = ap.parse_args()

    f_n = args.f_n or args.n
    c_b, c_d, c_s = args.constants
    policies = ["three-phase", "standard-batching"] + (["maxweight"] if args.maxweight else [])
    means = {p: [] for p in policies}
    for seed in args.seeds:
        recs = {}
        for p in policies:
            cfg = ExperimentConfig(policy=p, n_list=[args.n], fn_rule=str(f_n), c_b=c_b, c_d=c_d,
                                   c_s=c_s, periods=args.periods, seeds=[seed], relaxed=args.relaxed)
            recs[p] = run_replication(cfg, args.n, f_n, seed)
        window = args.periods * recs["three-phase"].b
        line = [f"seed {seed}:"]
        for p, r in recs.items():
            m = float(r.series[:window].mean())
            means[p].append(m)
            line.append(f"{p}={m:.1f}")
        print(" ".join(line))

    print("across seeds:")
    for p, ms in means.items():
        se = np.std(ms, ddof=1) / np.sqrt(len(ms)) if len(ms) > 1 else 0.0
        print(f"  {p:<18} {np.mean(ms):14.1f} +- {se:.1f}")


if __name__ == "__main__":
    main()
