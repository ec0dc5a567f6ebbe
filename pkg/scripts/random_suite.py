"""Shadow-price property suite over random markets.

    python scripts/random_suite.py --count 100 --seed 20000 --fd
"""
import argparse
import time

import numpy as np

from shadowprice import shadow as sh
from shadowprice.generate import UTILITIES, RandomMarketConfig, random_scenario
from shadowprice.optimize import check_dpp, solve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20_000)
    ap.add_argument("--max-nodes", type=int, default=60)
    ap.add_argument("--fd", action="store_true", help="cross-check duals by finite differences")
    args = ap.parse_args()
    cfg = RandomMarketConfig(max_nodes=args.max_nodes)
    t0 = time.perf_counter()
    failures, skipped = [], 0
    for i in range(args.count):
        seed = args.seed + i
        u = UTILITIES[i % len(UTILITIES)]
        s = random_scenario(np.random.default_rng(seed), cfg, utility=u)
        if sh.find_scps(s) is None:
            skipped += 1
            continue
        r = solve(s)
        try:
            z = sh.extract_shadow(s, r, cross_check=args.fd)
        except sh.ShadowError as e:
            failures.append((seed, str(e)))
            continue
        cert = sh.certify_shadow(s, z, r)
        fr = abs(sh.frictionless_solve(s, z).value - r.value)
        gap = sh.duality_gap(s, z, r.value)
        dpp = check_dpp(s, r)
        ok = sh.verify_price_system(s, z).ok and cert.ok and fr <= 1e-6 and abs(gap) <= 1e-6
        print(f"seed={seed} d={s.d} T={s.tree.T} nodes={s.tree.size:3d} {u.kind}"
              f"{'' if u.p is None else u.p:<5} J={r.value:+.6f} cert={max(cert.residuals.values()):.1e} "
              f"frictionless={fr:.1e} gap={gap:+.1e} dpp={dpp:.1e} {'ok' if ok else 'FAIL'}")
        if not ok:
            failures.append((seed, cert.residuals))
    print(f"{args.count - skipped} checked, {skipped} without SCPS, {len(failures)} failures, "
          f"{time.perf_counter() - t0:.1f}s")
    for f in failures:
        print("  failure:", f)


if __name__ == "__main__":
    main()
