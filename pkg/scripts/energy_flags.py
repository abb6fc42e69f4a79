"""Survey of the boundary-energy divergence flag against the partial-sum ratio test.

Example::

    python3 scripts/energy_flags.py --seeds $(seq 0 40)
"""

import argparse

import numpy as np

from bmera.network import MeraConfig, random_isometric
from bmera.observables import boundary_energy_deviation, ising_hamiltonian, ratio_test, seed_components, seed_norms


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    parser.add_argument("--m", type=int, default=2)
    parser.add_argument("--tau", type=int, default=4)
    args = parser.parse_args()

    h = ising_hamiltonian()
    print("seed,flag,ratio,largest_carried_kappa,deviation,agree")
    for seed in args.seeds:
        t = random_isometric(MeraConfig(d=2, m=args.m, seed=seed))
        res = boundary_energy_deviation(t, h, args.tau)
        ratio = ratio_test(seed_norms(t))
        comp = seed_components(t)
        carried = (comp["norms"] > 1e-10) & (np.abs(comp["eigenvalues"]) < 1 - 1e-9)
        lead = float(np.max(np.abs(comp["eigenvalues"][carried]), initial=0.0))
        print(f"{seed},{str(res.divergent).lower()},{ratio:.4f},{lead:.4f},{res.deviation:.6e},"
              f"{str(res.divergent == (ratio >= 1.0)).lower()}")


if __name__ == "__main__":
    main()
