"""ADMM multi-start, dECE ascent and Brier confidences against the exact oracle on small random instances."""

import argparse
import time

import numpy as np

from calicert.admm import AdmmConfig, brier_start, multi_start_solve
from calicert.dece import hard_ece, maximize_dece
from calicert.oracle import brute_force_cce
from calicert.synthetic import random_instances


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--dece", action="store_true", help="also run the dECE baseline")
    args = ap.parse_args()

    cfg = AdmmConfig(trace=False)
    ratios, gaps, below_dece = [], [], 0
    start = time.perf_counter()
    for i, inst in enumerate(random_instances(args.count, seed=args.seed)):
        oracle = brute_force_cce(inst)[0]
        acce = multi_start_solve(inst, cfg).best_acce
        brier = hard_ece(brier_start(inst), inst.c, inst.binning)
        line = f"{i:4d} N={inst.N} M={inst.M} oracle={oracle:.5f} admm={acce:.5f} brier={brier:.5f}"
        if args.dece:
            dece = maximize_dece(inst).ece
            below_dece += acce < dece - 1e-6
            line += f" dece={dece:.5f}"
        print(line)
        ratios.append(acce / oracle if oracle > 0 else 1.0)
        gaps.append(oracle - acce)
    ratios, gaps = np.array(ratios), np.array(gaps)
    print(f"within 0.99 x oracle: {np.mean(ratios >= 0.99):.1%}")
    print(f"within 1e-3 of oracle: {np.mean(gaps <= 1e-3):.1%}")
    print(f"worst gap: {gaps.max():.5f}")
    if args.dece:
        print(f"admm below dece: {below_dece}")
    print(f"elapsed: {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
