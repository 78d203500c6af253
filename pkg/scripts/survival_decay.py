#!/usr/bin/env python3
"""Ionization signature: survival of the bound reference state at two
couplings, with exponential fits and the coupling-squared ratio."""
import sys

from thermion.cli import main

if __name__ == "__main__":
    sys.exit(main(["dynamics", "--out", "results/dynamics",
                   "--format", "csv",
                   "model.n_e=8", "model.n_u=48", "model.n_max=2",
                   "model.e_max=5.0", "model.u_max=5.0",
                   "dynamics.lambdas=[0.05,0.1]", "dynamics.n_times=40",
                   *sys.argv[1:]]))
