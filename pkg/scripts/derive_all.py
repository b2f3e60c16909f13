"""Derive (and cache) every symbolic bound within the default limits, with timings and term counts."""

import argparse
import time

from ordbounds.model import ALL_SETTINGS, ESTIMANDS
from ordbounds.symbolic import IV_SYMBOLIC_LIMIT, OTHER_SYMBOLIC_LIMIT, cached_bound


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-K", type=int, default=None)
    ap.add_argument("--prune", action="store_true")
    args = ap.parse_args()
    for setting in ALL_SETTINGS:
        top = IV_SYMBOLIC_LIMIT if setting.is_iv else OTHER_SYMBOLIC_LIMIT
        for K in range(2, min(top, args.max_K or top) + 1):
            for e in ESTIMANDS:
                t0 = time.time()
                b = cached_bound(setting, e, K, prune=args.prune)
                print(f"{str(setting):>14} K={K} {e.value:<6} {len(b.lower):4d} lower {len(b.upper):4d} upper "
                      f"{time.time() - t0:6.2f}s", flush=True)


if __name__ == "__main__":
    main()
