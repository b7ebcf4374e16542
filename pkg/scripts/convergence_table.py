"""Relative gap of exact partial-sum covariances to the leading-order prediction.

Prints the gap for each site pair over n = 2^8 .. 2^max and the empirical
decay exponent between the last two n, to compare with d_max(r, s) - 1.
"""

import argparse
import math

from svlm.grid import build_grid, reference_grid
from svlm.kernel import split_time
from svlm.theory import GammaTable, asymptotic_prediction, exact_partial_sum_cov


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-exp", type=int, default=16)
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--u", type=float, default=0.5)
    ap.add_argument("--boundary", action="store_true", help="single site with d = 1")
    args = ap.parse_args()
    g = build_grid([0], [1], [1.0], [[1.0]]) if args.boundary else reference_grid()
    ns = [2**e for e in range(8, args.max_exp + 1, 2)]
    print("pair  " + " ".join(f"{n:>9d}" for n in ns) + "   slope")
    for i in range(g.m):
        for j in range(g.m):
            G = GammaTable(g, i, j, ns[-1])
            gaps = []
            for n in ns:
                K, _ = split_time(n, args.t)
                L, _ = split_time(n, args.u)
                ex = exact_partial_sum_cov(g, i, j, K, L, table=G)
                gaps.append(ex / asymptotic_prediction(g, i, j, n, args.t, args.u) - 1)
            slope = math.log(abs(gaps[-1] / gaps[-2])) / math.log(ns[-1] / ns[-2])
            print(f"({i},{j}) " + " ".join(f"{x:>9.4f}" for x in gaps) + f"  {slope:6.3f}")


if __name__ == "__main__":
    main()
