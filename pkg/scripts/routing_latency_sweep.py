#!/usr/bin/env python3
"""Mean routing cycles per Fuse level over seeded random stimuli.

    python3 scripts/routing_latency_sweep.py --trials 1000 --seed 1
"""

import argparse
import time

import numpy as np

from gcnfabric.cli import bench_trial


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--clock-hz", type=float, default=250e6)
    args = ap.parse_args()

    print(f"{'fuse':>4} {'mean':>7} {'p50':>4} {'p99':>4} {'max':>4} {'ns':>7}")
    prev = None
    for fuse in (1, 2, 3, 4):
        t0 = time.perf_counter()
        cycles = np.array([bench_trial(args.seed, fuse, t) for t in range(args.trials)])
        mean = cycles.mean()
        step = "" if prev is None else f"  (+{mean - prev:.3f})"
        print(f"{fuse:>4} {mean:7.3f} {np.percentile(cycles, 50):4.0f} {np.percentile(cycles, 99):4.0f} "
              f"{cycles.max():4d} {mean / args.clock_hz * 1e9:7.2f}{step}  [{time.perf_counter() - t0:.1f}s]")
        prev = mean


if __name__ == "__main__":
    main()
