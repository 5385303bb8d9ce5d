#!/usr/bin/env python3
"""Sweep layer shapes and report the cheapest execution order under the cost model.

Varies the input-to-output node ratio and the feature width for a fixed
batch, then prints per-order time counts and the selected order.
"""

import argparse

from gcnfabric.gcn_dataflow import ExecOrder, LayerSpec, estimate_costs, select_order


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=1024)
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--classes", type=int, default=41)
    ap.add_argument("--degree", type=int, default=10, help="sampled neighbours per output node")
    args = ap.parse_args()

    orders = list(ExecOrder)
    print(f"{'n':>6} {'n_bar':>7} {'d':>5} " + " ".join(f"{o.value:>12}" for o in orders) + "  selected")
    for ratio in (1, 4, 16):
        for d in (16, 128, 602):
            n = args.batch * 4
            spec = LayerSpec(b=args.batch, n=n, n_bar=n * ratio, d=d, h=args.hidden,
                             e=n * args.degree, c=args.classes)
            times = [estimate_costs(spec, o).total_time for o in orders]
            print(f"{spec.n:>6} {spec.n_bar:>7} {d:>5} " + " ".join(f"{t:>12d}" for t in times)
                  + f"  {select_order(spec).value}")


if __name__ == "__main__":
    main()
