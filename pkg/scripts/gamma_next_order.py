"""Ratio gamma_h / leading term across lags, with the next-order correction.

Summing k^(-d_r) (k + h)^(-d_s) more carefully gives
    gamma_h ~ c(r,s) sigma h^(1 - D) + sigma zeta(d_r) h^(-d_s),
so the relative gap of the leading term is zeta(d_r) h^(d_r - 1) / c(r,s).
"""

import argparse

from scipy import special

from svlm.grid import reference_grid
from svlm.theory import c_const, gamma_asymptotic, gamma_h


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=lambda s: [int(float(x)) for x in s.split(",")], default=[10**3, 10**5, 10**7])
    args = ap.parse_args()
    g = reference_grid()
    print(f"{'pair':>6} {'h':>9} {'ratio-1':>10} {'predicted':>10}")
    for i in range(g.m):
        for j in range(g.m):
            dr, ds = g.d_values[i], g.d_values[j]
            for h in args.h:
                r = gamma_h(g, i, j, h) / gamma_asymptotic(g, i, j, h) - 1
                pred = special.zeta(dr) * h ** (dr - 1) / c_const(dr, ds)
                print(f"({i},{j}) {h:>9d} {r:>10.4f} {pred:>10.4f}")


if __name__ == "__main__":
    main()
