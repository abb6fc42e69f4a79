"""Boundary and bulk exponents of every scaling operator, and their ratio.

Example::

    python3 scripts/profiles.py --seeds 42 7 > halving.csv
"""

import argparse

import numpy as np

from bmera.errors import SignalBelowFloor
from bmera.network import MeraConfig, random_isometric
from bmera.observables import Context, boundary_profile, correlator_profile
from bmera.spectral import scaling_operators


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[42])
    parser.add_argument("--m", type=int, default=2)
    parser.add_argument("--low", type=float, default=0.05)
    parser.add_argument("--high", type=float, default=0.95)
    args = parser.parse_args()

    print("seed,index,kappa_abs,expected,boundary_exponent,bulk_exponent,ratio,boundary_residual,bulk_residual")
    for seed in args.seeds:
        ctx = Context(random_isometric(MeraConfig(d=2, m=args.m, seed=seed)))
        for i, op in enumerate(scaling_operators(ctx.channels.d)):
            k = abs(op.eigenvalue)
            if not args.low < k < args.high:
                continue
            try:
                prof = boundary_profile(ctx, op.operator)
                corr = correlator_profile(ctx, op.operator)
            except SignalBelowFloor:
                print(f"{seed},{i},{k:.6f},{-np.log2(k):.10f},,,,,")
                continue
            print(f"{seed},{i},{k:.6f},{-np.log2(k):.10f},{prof.exponent:.10f},{corr.exponent:.10f},"
                  f"{corr.exponent / prof.exponent:.10f},{prof.residual:.1e},{corr.residual:.1e}")


if __name__ == "__main__":
    main()
