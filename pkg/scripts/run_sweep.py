#!/usr/bin/env python3
"""Scaling sweep of the three-phase policy: mean total queue vs n, with a power-law fit.

    python3 scripts/run_sweep.py --n 25 36 49 --seeds 0 1 2 --periods 10 --out out/sweep

Writes sweep.csv / sweep_summary.csv and prints the fitted exponent. At the
published constants n = 49 costs a few minutes per seed.
"""
import argparse
import logging
import time

from iqswitch.harness import ExperimentConfig, run_all, sweep_and_fit, write_sweep
from iqswitch.policies import DEFAULT_CONSTANTS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[25, 36, 49])
    ap.add_argument("--fn-rule", default="n", help='"n", "<k>n" or a comma list')
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--periods", type=int, default=10)
    ap.add_argument("--constants", type=float, nargs=3, default=list(DEFAULT_CONSTANTS),
                    metavar=("C_B", "C_D", "C_S"))
    ap.add_argument("--policy", default="three-phase")
    ap.add_argument("--relaxed", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/sweep")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    c_b, c_d, c_s = args.constants
    cfg = ExperimentConfig(
        policy=args.policy, n_list=args.n, fn_rule=args.fn_rule, c_b=c_b, c_d=c_d, c_s=c_s,
        periods=args.periods, seeds=args.seeds, relaxed=args.relaxed, workers=args.workers,
        out_dir=args.out,
    )
    start = time.perf_counter()
    records = run_all(cfg)
    res = sweep_and_fit(cfg, records)
    sweep, summary = write_sweep(res, args.out)

    print(f"{'n':>4} {'f_n':>5} {'seeds':>5} {'mean':>14} {'stderr':>10} {'ratio':>10}")
    for t in res.table:
        print(f"{t['n']:>4} {t['f_n']:>5} {t['seeds']:>5} {t['mean_total_queue']:>14.1f} "
              f"{t['stderr']:>10.1f} {t['ratio_to_envelope']:>10.4f}")
    if res.alpha is None:
        print(res.notice)
    else:
        ratios = [t["ratio_to_envelope"] for t in res.table]
        print(f"alpha = {res.alpha:.3f}, ratio spread = {max(ratios) / min(ratios):.3f}")
    bad = sum(len(r.violations) for r in records)
    print(f"violations: {bad}; wrote {sweep} and {summary} in {time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
