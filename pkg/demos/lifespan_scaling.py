"""Lifespan against data size in both signs of the discriminant.

Sweeps epsilon for delta < 0 (nu^2 = 0.25) and delta > 0 (nu^2 = 0.01) with
the same n, mu, p and compares log T with the bound T <= C eps^{-(p-1)/theta}.
The fitted slope is shallower than the bound: the bound is an upper bound.

    python demos/lifespan_scaling.py [--dx 0.01] [--refinements 2]
"""
import argparse

from blowuplab.lifespan import compare_regimes
from blowuplab.solver import SolverConfig
from blowuplab.special import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dx", type=float, default=0.01)
    ap.add_argument("--refinements", type=int, default=2)
    args = ap.parse_args()

    cmp = compare_regimes(ModelParams(1, 0.5, 0.25, 2.0), ModelParams(1, 0.5, 0.01, 2.0), 1.0,
                          SolverConfig(dx=args.dx, t_max=200.0), (0.05, 0.1, 0.2, 0.4),
                          args.refinements)
    for res, chk in ((cmp.negative, cmp.check_negative), (cmp.positive, cmp.check_positive)):
        print(f"{res.regime}: theta = {res.theta:g}")
        for e in res.entries:
            print(f"  eps = {e.epsilon:<5g} T_est = {e.T_est:9.4f} +- {e.uncertainty:.1e}")
        print(f"  slope {res.slope_fit:.3f} (bound {res.slope_theory:.3f}); {chk.detail}; "
              f"{chk.status}")
    print("both regimes consistent with the bound:", cmp.both_pass)


if __name__ == "__main__":
    main()
