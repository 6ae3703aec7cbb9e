"""Per-iteration cost of the factored solver as the lifted size grows.

Runs a fixed iteration budget on fully observed block-Hankel problems of
increasing size and prints the mean per-iteration wall time; with the
atom step and local search both touching O(MN) data the ratios should
track the size growth, not the square of it.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from slrm.cli import DEFAULT_BENCH_SIZES, bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = bench(DEFAULT_BENCH_SIZES, reps=args.reps, iters=args.iters,
                 seed=args.seed)
    print(f"{'size':>10} {'MN':>8} {'s/iter':>10} {'ratio':>6}")
    prev = None
    for row in rows:
        ratio = "" if prev is None else f"{row['time'] / prev:.2f}"
        print(f"{row['size']:>10} {row['MN']:>8} {row['time']:>10.4f} {ratio:>6}")
        prev = row["time"]


if __name__ == "__main__":
    main()
