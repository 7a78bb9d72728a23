"""Exact entanglement-Hamiltonian diagnostics on the 2x2 open bilayer over a g grid.

Prints diagonality defect, entanglement entropy and the smallest on-site
G_i(1), with and without a transverse field on layer A.
"""

import argparse

import numpy as np

from bilayer_qmc import ed
from bilayer_qmc.lattice import build_lattice
from bilayer_qmc.sse import Couplings


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beta", type=float, default=8.0)
    ap.add_argument("--h", type=float, default=0.5)
    ap.add_argument("--n", type=int, default=4)
    args = ap.parse_args()
    lat = build_lattice(2, "open")
    print(f"{'g':>5} {'h':>5} {'defect':>10} {'S_A':>8} {'min G_i(1)':>11}")
    for g in np.arange(0.5, 6.01, 0.5):
        for h in (0.0, args.h):
            rep = ed.eh_report(ed.rho_A_for(lat, Couplings(1.0, g), args.beta, h), 2, args.n)
            print(f"{g:5.2f} {h:5.2f} {rep.diagonality_defect:10.2e} {rep.entropy:8.4f} {rep.G_onsite[:, 1].min():11.6f}")


if __name__ == "__main__":
    main()
