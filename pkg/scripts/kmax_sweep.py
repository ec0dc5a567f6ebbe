"""How the truncation level affects the time-0 position and the pinned margin.

kmax >= 2 (at kmax = 1 shorting at time 0 is an arbitrage). With the infinite tail the time-0 position must be flat and the pinned
martingale system infeasible; on a tree cut at kmax the last time-1 node
bounds the short, so both quantities stay away from zero. Where the LP
cannot resolve the tree (tiny branch probabilities) the margin is shown as
unresolved.

    python scripts/kmax_sweep.py --kmax 2 5 10 20 40
"""
import argparse

from shadowprice import shadow as sh
from shadowprice.optimize import NotConverged, solve
from shadowprice.scenario import build_counterexample


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--kmax", type=int, nargs="+", default=[2, 3, 5, 10, 20, 40])
    args = ap.parse_args()
    print(f"{'kmax':>5} {'J':>14} {'V2_0':>12} {'-1/(kmax-1)':>12} {'pins':>5} {'delta*':>10}")
    for k in args.kmax:
        s = build_counterexample(args.n, k, (4.0, -1.0), "unconstrained")
        r = solve(s)
        pins = sh.pin_constraints(s, r)
        try:
            margin = f"{sh.find_pinned_price_system(s, pins, 'martingale').delta:10.6f}"
        except NotConverged:
            margin = f"{'unresolved':>10}"
        print(f"{k:5d} {r.value:14.10f} {r.strategy.holdings[0, 1]:12.6f} {-1 / (k - 1):12.6f} "
              f"{len(pins):5d} {margin}")


if __name__ == "__main__":
    main()
